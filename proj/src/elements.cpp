#include "elemedit/elements.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace elemedit {

ElementSet::ElementSet(std::size_t count, int dim) : embedding_dim{dim}, elements(count) {
  for (auto& e : elements) e.embedding.assign(static_cast<std::size_t>(dim), 0.0f);
}

std::size_t ElementSet::valid_count() const {
  return static_cast<std::size_t>(std::count_if(elements.begin(), elements.end(), [](const Element& e) { return e.valid; }));
}

void fourier_features(std::span<const double> values, int bands, std::span<float> out) {
  if (out.size() != values.size() * 2 * static_cast<std::size_t>(bands)) throw InputError("fourier output size");
  std::size_t o = 0;
  for (double v : values)
    for (int k = 0; k < bands; ++k) {
      const double arg = std::ldexp(std::numbers::pi, k) * v;
      out[o++] = static_cast<float>(std::sin(arg));
      out[o++] = static_cast<float>(std::cos(arg));
    }
}

std::vector<float> embed_spatial(const SpatialParams& s, bool valid, int bands) {
  std::vector<float> out(8 * static_cast<std::size_t>(bands), 0.0f);
  if (!valid) return out;
  const double v[4] = {s.x, s.y, s.w, s.h};
  fourier_features(v, bands, out);
  return out;
}

void ElementSet::invalidate(std::size_t i) {
  auto& e = elements.at(i);
  std::fill(e.embedding.begin(), e.embedding.end(), 0.0f);
  e.spatial = {};
  e.valid = false;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw InputError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw InputError("invalid base64 payload");
  // EVP_DecodeBlock keeps the padding bytes as zeros.
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string encode_floats(std::span<const float> values) {
  static_assert(std::endian::native == std::endian::little, "float packing assumes a little-endian host");
  std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return base64_encode(bytes);
}

std::vector<float> decode_floats(const std::string& text) {
  auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(float) != 0) throw InputError("float payload has a ragged length");
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char c : digest) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

nlohmann::json elements_to_json(const ElementSet& set) {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set[i];
    items.push_back({{"index", i},
                     {"valid", e.valid},
                     {"x", e.spatial.x},
                     {"y", e.spatial.y},
                     {"w", e.spatial.w},
                     {"h", e.spatial.h},
                     {"embedding", encode_floats(e.embedding)}});
  }
  return {{"schema", "elemedit.elements/1"},
          {"count", set.size()},
          {"embedding_dim", set.embedding_dim},
          {"elements", items}};
}

ElementSet elements_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != "elemedit.elements/1") throw InputError("not an elemedit.elements/1 document");
  const auto count = doc.at("count").get<std::size_t>();
  const int dim = doc.at("embedding_dim").get<int>();
  const auto& items = doc.at("elements");
  if (items.size() != count) throw InputError("element count does not match the element list");
  ElementSet set(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& it = items[i];
    if (it.at("index").get<std::size_t>() != i) throw InputError("element list is not in index order");
    auto& e = set[i];
    e.valid = it.at("valid").get<bool>();
    e.spatial = {it.at("x").get<double>(), it.at("y").get<double>(), it.at("w").get<double>(), it.at("h").get<double>()};
    e.embedding = decode_floats(it.at("embedding").get<std::string>());
    if (e.embedding.size() != static_cast<std::size_t>(dim)) throw InputError("embedding has the wrong dimension");
  }
  return set;
}

}  // namespace elemedit
