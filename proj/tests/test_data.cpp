#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "elemedit/dataset.hpp"
#include "elemedit/elements.hpp"
#include "elemedit/metrics.hpp"

using namespace elemedit;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("elemedit_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("element set JSON round-trips byte-exactly", "[elements][io]") {
  ElementSet s(5, 3);
  s[0] = {{1.5f, -0.25f, 3.0e-8f}, {0.25, 0.5, 0.125, 0.375}, true};
  s[3] = {{-1.0f, 0.0f, 1.0f / 3.0f}, {0.9, 0.1, 0.2, 0.2}, true};
  auto text = elements_to_json(s).dump();
  auto back = elements_from_json(nlohmann::json::parse(text));
  REQUIRE(back == s);
  REQUIRE(elements_to_json(back).dump() == text);
  REQUIRE(s.valid_count() == 2);

  auto doc = nlohmann::json::parse(text);
  doc["elements"][0]["embedding"] = "AAAA";
  REQUIRE_THROWS_AS(elements_from_json(doc), InputError);
  doc = nlohmann::json::parse(text);
  doc["schema"] = "nope";
  REQUIRE_THROWS_AS(elements_from_json(doc), InputError);
}

TEST_CASE("base64 and digests", "[elements]") {
  const std::string hello = "hello";
  std::vector<std::uint8_t> bytes(hello.begin(), hello.end());
  REQUIRE(base64_encode(bytes) == "aGVsbG8=");
  REQUIRE(base64_decode("aGVsbG8=") == bytes);
  REQUIRE(base64_decode("") .empty());
  REQUIRE(sha256_hex(bytes) == "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  std::vector<float> v{1.0f, -2.5f, 1e-30f};
  REQUIRE(decode_floats(encode_floats(v)) == v);
  REQUIRE_THROWS_AS(base64_decode("a$b"), InputError);
}

TEST_CASE("metrics", "[metrics]") {
  Image a(16, 16, 0.5f);
  Image b(16, 16, 0.6f);
  SECTION("identical images") {
    REQUIRE(metrics::mse(a, a) == 0.0);
    REQUIRE(metrics::psnr_from_mse(0.0) == metrics::kPsnrCeiling);
    REQUIRE(metrics::ssim(a, a) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("constant offset") {
    double d = 0.6f - 0.5f;
    REQUIRE(metrics::mse(a, b) == Approx(d * d).epsilon(1e-12));
    // flat windows: the contrast term is C2 / C2, luminance term only
    const double c1 = 1e-4;
    const double mx = 0.5f, my = 0.6f;
    REQUIRE(metrics::ssim(a, b) == Approx((2 * mx * my + c1) / (mx * mx + my * my + c1)).epsilon(1e-9));
  }
  SECTION("psnr of mse 0.01 is 20 dB") { REQUIRE(metrics::psnr_from_mse(0.01) == Approx(20.0)); }
  SECTION("ssim is symmetric and at most one") {
    Image n(16, 16);
    for (std::size_t i = 0; i < n.data.size(); ++i) n.data[i] = static_cast<float>((i * 37 % 101) / 100.0);
    REQUIRE(metrics::ssim(n, a) == Approx(metrics::ssim(a, n)));
    REQUIRE(metrics::ssim(n, a) < 1.0);
  }
  SECTION("accumulator pools MSE and keeps PSNR consistent") {
    metrics::MetricsAccumulator acc;
    acc.add(a, a);
    acc.add(a, b);
    auto r = acc.report("val", nlohmann::json::object());
    REQUIRE(r.samples == 2);
    REQUIRE(r.mse == Approx(0.005).epsilon(1e-6));
    REQUIRE(std::abs(r.psnr - 10.0 * std::log10(1.0 / r.mse)) <= 1e-9);
    auto j = metrics::report_to_json(r);
    REQUIRE(j["schema"] == "elemedit.metrics/1");
    REQUIRE(j["version"] == metrics::version_string());
  }
  SECTION("size mismatch") { REQUIRE_THROWS_AS(metrics::mse(a, Image(8, 8)), InputError); }
}

TEST_CASE("PNG round trip and corrupt input", "[image]") {
  Image img(5, 7);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
  auto back = decode_png(encode_png(img));
  REQUIRE(back.height == 5);
  REQUIRE(back.width == 7);
  for (std::size_t i = 0; i < img.data.size(); ++i) REQUIRE(back.data[i] == Approx(img.data[i]).margin(0.5 / 255));
  std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
  REQUIRE_THROWS_AS(decode_png(junk), InputError);
}

TEST_CASE("synthetic scenes", "[dataset]") {
  SECTION("shape count is uniform over 2..5 within 2 points") {
    std::mt19937_64 rng(17);
    std::map<int, int> hist;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++hist[static_cast<int>(dataset::sample_scene(rng).shapes.size())];
    REQUIRE(hist.size() == 4);
    for (int k = dataset::kMinShapes; k <= dataset::kMaxShapes; ++k)
      REQUIRE(std::abs(hist[k] / double(n) - 0.25) <= 0.02);
  }
  SECTION("shapes have distinct colors and disjoint masks; captions use the vocabulary") {
    std::mt19937_64 rng(3);
    auto vocab = dataset::caption_vocabulary();
    REQUIRE(vocab.size() <= 64);
    std::set<std::string> words(vocab.begin(), vocab.end());
    for (int i = 0; i < 200; ++i) {
      auto scene = dataset::sample_scene(rng);
      std::set<std::string> colors;
      std::vector<int> cover(64 * 64, 0);
      for (const auto& s : scene.shapes) {
        colors.insert(s.color);
        auto m = dataset::shape_mask(s, 64);
        int area = 0;
        for (std::size_t p = 0; p < m.size(); ++p) {
          cover[p] += m[p];
          area += m[p];
        }
        REQUIRE(area > 0);
      }
      REQUIRE(colors.size() == scene.shapes.size());
      for (int c : cover) REQUIRE(c <= 1);
      std::istringstream caption(dataset::caption_for(scene.shapes));
      for (std::string w; caption >> w;) REQUIRE(words.count(w) == 1);
    }
  }
}

TEST_CASE("dataset manifest", "[dataset][io]") {
  auto a = scratch("ds_a");
  auto b = scratch("ds_b");
  auto m = dataset::build_synthetic_shapes(20, 9, 32, a, 0.2);
  dataset::build_synthetic_shapes(20, 9, 32, b, 0.2);
  REQUIRE(m.entries.size() == 20);
  REQUIRE(m.split_indices("val").size() == 4);
  SECTION("same seed gives a byte-identical corpus") {
    REQUIRE(read_file(a / "manifest.json") == read_file(b / "manifest.json"));
    for (const auto& e : m.entries) REQUIRE(read_file(a / e.path) == read_file(b / e.path));
  }
  SECTION("load verifies the checksum") {
    auto loaded = dataset::load_manifest(a);
    REQUIRE(loaded.checksum == m.checksum);
    REQUIRE(loaded.entries.size() == 20);
    REQUIRE(dataset::load_entry_image(loaded, 0).width == 32);
    save_png(Image(32, 32, 0.1f), a / m.entries[3].path);
    REQUIRE_THROWS_AS(dataset::load_manifest(a), InputError);
  }
  SECTION("missing image") {
    fs::remove(b / m.entries[0].path);
    REQUIRE_THROWS_AS(dataset::load_manifest(b), InputError);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}
