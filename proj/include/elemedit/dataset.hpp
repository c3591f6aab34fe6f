#pragma once

// Synthetic "colored shapes on textured backgrounds" corpus and its manifest.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "elemedit/image.hpp"

namespace elemedit::dataset {

inline constexpr int kMinShapes = 2;
inline constexpr int kMaxShapes = 5;

struct NamedColor {
  const char* name;
  float r, g, b;
};

/// Shape colors; chosen saturated so they separate from the muted backgrounds.
std::span<const NamedColor> palette();
std::span<const char* const> shape_kinds();

/// Closed caption vocabulary; index 0 is padding, 1 is unknown.
std::vector<std::string> caption_vocabulary();

struct ShapeSpec {
  std::string kind;
  std::string color;
  double cx = 0.0;    // normalized center
  double cy = 0.0;
  double size = 0.0;  // normalized half extent
  bool operator==(const ShapeSpec&) const = default;
};

struct BackgroundSpec {
  float base[3] = {0.5f, 0.5f, 0.5f};
  double freq_x = 0.0, freq_y = 0.0, phase = 0.0, amplitude = 0.0;
  double noise = 0.0;
  std::uint64_t noise_seed = 0;
};

struct Scene {
  std::vector<ShapeSpec> shapes;
  BackgroundSpec background;
};

/// Draws a scene: 2-5 non-overlapping shapes with distinct colors.
Scene sample_scene(std::mt19937_64& rng);

Image render_scene(const Scene& scene, int resolution);

/// Pixel mask (row-major, 1 = inside) of one shape at the given resolution.
std::vector<std::uint8_t> shape_mask(const ShapeSpec& shape, int resolution);

/// Color lookup by palette name.
const NamedColor& color_by_name(const std::string& name);

/// "a red circle and a blue square".
std::string caption_for(const std::vector<ShapeSpec>& shapes);

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  std::string caption;
  std::string split;  // "train" or "val"
  std::vector<ShapeSpec> shapes;
};

struct DatasetManifest {
  std::filesystem::path root;
  int resolution = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;
  std::vector<ManifestEntry> entries;
  std::string checksum;

  [[nodiscard]] std::vector<std::size_t> split_indices(const std::string& split) const;
};

/// Renders n images under `root`, writes manifest.json; deterministic per seed.
DatasetManifest build_synthetic_shapes(std::size_t n, std::uint64_t seed, int resolution,
                                       const std::filesystem::path& root, double val_fraction = 0.1);

/// SHA-256 over the entry list and the image bytes.
std::string compute_checksum(const DatasetManifest& manifest);

void save_manifest(const DatasetManifest& manifest);

/// Loads and verifies root/manifest.json; throws InputError on a checksum
/// mismatch or a missing image.
DatasetManifest load_manifest(const std::filesystem::path& root);

Image load_entry_image(const DatasetManifest& manifest, std::size_t index);

}  // namespace elemedit::dataset
