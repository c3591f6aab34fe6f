#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "elemedit/image.hpp"

namespace elemedit {

/// Normalized centroid (x, y) and bbox size (w, h); all zero for an invalid element.
struct SpatialParams {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  bool operator==(const SpatialParams&) const = default;
};

struct Element {
  std::vector<float> embedding;
  SpatialParams spatial;
  bool valid = false;
  bool operator==(const Element&) const = default;
};

/// Fixed-length set of encoded elements; slot order follows the partition labels.
struct ElementSet {
  int embedding_dim = 0;
  std::vector<Element> elements;

  ElementSet() = default;
  ElementSet(std::size_t count, int dim);

  [[nodiscard]] std::size_t size() const { return elements.size(); }
  [[nodiscard]] std::size_t valid_count() const;
  Element& operator[](std::size_t i) { return elements[i]; }
  const Element& operator[](std::size_t i) const { return elements[i]; }
  bool operator==(const ElementSet&) const = default;

  /// Zeroes the embedding and spatial params and clears the valid flag.
  void invalidate(std::size_t i);
};

/// Sinusoidal features of (x, y, w, h): per scalar v and band k in [0, bands),
/// the pair (sin(2^k pi v), cos(2^k pi v)). Length 8 * bands; all zero when !valid.
std::vector<float> embed_spatial(const SpatialParams& spatial, bool valid, int bands = 4);

/// Same band layout over an arbitrary list of scalars.
void fourier_features(std::span<const double> values, int bands, std::span<float> out);

nlohmann::json elements_to_json(const ElementSet& set);
ElementSet elements_from_json(const nlohmann::json& doc);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Little-endian float32 packing used by the element and checkpoint formats.
std::string encode_floats(std::span<const float> values);
std::vector<float> decode_floats(const std::string& text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace elemedit
