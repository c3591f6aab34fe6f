#include "elemedit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "elemedit/elements.hpp"

namespace elemedit::dataset {

namespace {

constexpr std::array<NamedColor, 8> kPalette{{
    {"red", 0.90f, 0.10f, 0.10f},
    {"green", 0.10f, 0.75f, 0.20f},
    {"blue", 0.15f, 0.30f, 0.95f},
    {"yellow", 0.95f, 0.85f, 0.10f},
    {"purple", 0.60f, 0.20f, 0.80f},
    {"orange", 1.00f, 0.55f, 0.00f},
    {"cyan", 0.10f, 0.85f, 0.90f},
    {"pink", 1.00f, 0.45f, 0.70f},
}};

constexpr std::array<const char*, 4> kKinds{"circle", "square", "triangle", "diamond"};

constexpr std::array<std::array<float, 3>, 5> kBackgrounds{{
    {0.45f, 0.45f, 0.45f},
    {0.55f, 0.50f, 0.42f},
    {0.35f, 0.38f, 0.42f},
    {0.62f, 0.60f, 0.56f},
    {0.40f, 0.35f, 0.30f},
}};

constexpr double kMinSize = 0.10;
constexpr double kMaxSize = 0.18;
// Bounding radius of every kind relative to its half extent.
constexpr double kBoundRadius = 1.3;

bool inside(const ShapeSpec& s, double px, double py) {
  const double dx = px - s.cx;
  const double dy = py - s.cy;
  if (s.kind == "circle") return dx * dx + dy * dy <= s.size * s.size;
  if (s.kind == "square") return std::abs(dx) <= 0.9 * s.size && std::abs(dy) <= 0.9 * s.size;
  if (s.kind == "triangle") {
    if (dy < -s.size || dy > s.size) return false;
    return std::abs(dx) <= (dy + s.size) / 2.0 + 1e-12;
  }
  if (s.kind == "diamond") return std::abs(dx) + std::abs(dy) <= 1.15 * s.size;
  throw InputError("unknown shape kind " + s.kind);
}

nlohmann::json shape_to_json(const ShapeSpec& s) {
  return {{"kind", s.kind}, {"color", s.color}, {"cx", s.cx}, {"cy", s.cy}, {"size", s.size}};
}

ShapeSpec shape_from_json(const nlohmann::json& j) {
  return {j.at("kind").get<std::string>(), j.at("color").get<std::string>(), j.at("cx").get<double>(),
          j.at("cy").get<double>(), j.at("size").get<double>()};
}

nlohmann::json entries_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& s : e.shapes) shapes.push_back(shape_to_json(s));
    entries.push_back({{"path", e.path}, {"caption", e.caption}, {"split", e.split}, {"shapes", shapes}});
  }
  return entries;
}

}  // namespace

std::span<const NamedColor> palette() { return kPalette; }
std::span<const char* const> shape_kinds() { return kKinds; }

std::vector<std::string> caption_vocabulary() {
  std::vector<std::string> v{"<pad>", "<unk>", "a", "and"};
  for (const auto& c : kPalette) v.emplace_back(c.name);
  for (const auto* k : kKinds) v.emplace_back(k);
  return v;
}

const NamedColor& color_by_name(const std::string& name) {
  for (const auto& c : kPalette)
    if (name == c.name) return c;
  throw InputError("unknown color " + name);
}

Scene sample_scene(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(kMinShapes, kMaxShapes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene scene;
  const int count = count_dist(rng);

  std::array<int, kPalette.size()> colors{};
  for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = static_cast<int>(i);
  std::shuffle(colors.begin(), colors.end(), rng);

  // Resample the whole layout if a shape cannot be placed, so the count stays uniform.
  bool layout_ok = false;
  while (!layout_ok) {
    scene.shapes.clear();
    layout_ok = true;
    for (int k = 0; k < count && layout_ok; ++k) {
      ShapeSpec s;
      s.kind = kKinds[static_cast<std::size_t>(rng() % kKinds.size())];
      s.color = kPalette[static_cast<std::size_t>(colors[static_cast<std::size_t>(k)])].name;
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        s.size = kMinSize + (kMaxSize - kMinSize) * unit(rng);
        s.cx = s.size + (1.0 - 2.0 * s.size) * unit(rng);
        s.cy = s.size + (1.0 - 2.0 * s.size) * unit(rng);
        placed = std::all_of(scene.shapes.begin(), scene.shapes.end(), [&](const ShapeSpec& o) {
          return std::hypot(o.cx - s.cx, o.cy - s.cy) >= kBoundRadius * (o.size + s.size) + 0.02;
        });
      }
      if (placed) scene.shapes.push_back(s);
      layout_ok = placed;
    }
  }

  auto& bg = scene.background;
  const auto& base = kBackgrounds[static_cast<std::size_t>(rng() % kBackgrounds.size())];
  std::copy(base.begin(), base.end(), bg.base);
  bg.freq_x = 2.0 + 6.0 * unit(rng);
  bg.freq_y = 2.0 + 6.0 * unit(rng);
  bg.phase = 2.0 * std::numbers::pi * unit(rng);
  bg.amplitude = 0.03 + 0.04 * unit(rng);
  bg.noise = 0.02;
  bg.noise_seed = rng();
  return scene;
}

Image render_scene(const Scene& scene, int resolution) {
  if (resolution <= 0) throw InputError("resolution must be positive");
  Image img(resolution, resolution);
  const auto& bg = scene.background;
  std::mt19937_64 noise_rng(bg.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      double px = (x + 0.5) / resolution;
      double py = (y + 0.5) / resolution;
      double wave = bg.amplitude * std::sin(2.0 * std::numbers::pi * (bg.freq_x * px + bg.freq_y * py) + bg.phase);
      double n = bg.noise * noise(noise_rng);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(std::clamp(bg.base[c] + wave + n, 0.0, 1.0));
    }
  for (const auto& s : scene.shapes) {
    const auto& col = color_by_name(s.color);
    auto mask = shape_mask(s, resolution);
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x) {
        if (!mask[static_cast<std::size_t>(y) * resolution + x]) continue;
        img.at(y, x, 0) = col.r;
        img.at(y, x, 1) = col.g;
        img.at(y, x, 2) = col.b;
      }
  }
  return img;
}

std::vector<std::uint8_t> shape_mask(const ShapeSpec& shape, int resolution) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(resolution) * resolution, 0);
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      double px = (x + 0.5) / resolution;
      double py = (y + 0.5) / resolution;
      mask[static_cast<std::size_t>(y) * resolution + x] = inside(shape, px, py) ? 1 : 0;
    }
  return mask;
}

std::string caption_for(const std::vector<ShapeSpec>& shapes) {
  std::string out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i) out += " and ";
    out += "a " + shapes[i].color + " " + shapes[i].kind;
  }
  return out;
}

std::vector<std::size_t> DatasetManifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == split) out.push_back(i);
  return out;
}

DatasetManifest build_synthetic_shapes(std::size_t n, std::uint64_t seed, int resolution,
                                       const std::filesystem::path& root, double val_fraction) {
  if (n == 0) throw InputError("dataset size must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw InputError("val_fraction must be in [0, 1)");
  DatasetManifest m;
  m.root = root;
  m.resolution = resolution;
  m.seed = seed;
  m.vocabulary = caption_vocabulary();
  std::mt19937_64 rng(seed);
  const auto val_count = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  std::filesystem::create_directories(root / "images");
  for (std::size_t i = 0; i < n; ++i) {
    Scene scene = sample_scene(rng);
    std::ostringstream name;
    name << "images/" << std::setw(6) << std::setfill('0') << i << ".png";
    save_png(render_scene(scene, resolution), root / name.str());
    m.entries.push_back({name.str(), caption_for(scene.shapes), i + val_count >= n ? "val" : "train", scene.shapes});
  }
  m.checksum = compute_checksum(m);
  save_manifest(m);
  return m;
}

std::string compute_checksum(const DatasetManifest& m) {
  std::string blob = nlohmann::json{{"resolution", m.resolution}, {"entries", entries_json(m)}}.dump();
  std::vector<std::uint8_t> bytes(blob.begin(), blob.end());
  for (const auto& e : m.entries) {
    auto img = read_file(m.root / e.path);
    bytes.insert(bytes.end(), img.begin(), img.end());
  }
  return sha256_hex(bytes);
}

void save_manifest(const DatasetManifest& m) {
  nlohmann::json doc{{"schema", "elemedit.manifest/1"}, {"resolution", m.resolution}, {"seed", m.seed},
                     {"vocabulary", m.vocabulary},       {"entries", entries_json(m)}, {"checksum", m.checksum}};
  write_text(m.root / "manifest.json", doc.dump(1));
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  auto doc = nlohmann::json::parse(read_text(root / "manifest.json"));
  if (doc.value("schema", "") != "elemedit.manifest/1") throw InputError("not an elemedit.manifest/1 document");
  DatasetManifest m;
  m.root = root;
  m.resolution = doc.at("resolution").get<int>();
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
  m.checksum = doc.at("checksum").get<std::string>();
  for (const auto& e : doc.at("entries")) {
    ManifestEntry entry{e.at("path").get<std::string>(), e.at("caption").get<std::string>(),
                        e.at("split").get<std::string>(), {}};
    for (const auto& s : e.at("shapes")) entry.shapes.push_back(shape_from_json(s));
    if (!std::filesystem::exists(root / entry.path)) throw InputError("manifest references missing " + entry.path);
    m.entries.push_back(std::move(entry));
  }
  if (compute_checksum(m) != m.checksum) throw InputError("manifest checksum mismatch under " + root.string());
  return m;
}

Image load_entry_image(const DatasetManifest& manifest, std::size_t index) {
  return load_png(manifest.root / manifest.entries.at(index).path);
}

}  // namespace elemedit::dataset
