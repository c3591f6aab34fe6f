#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace elemedit {

/// Caller supplied malformed input (shape mismatch, out-of-range index, bad schema...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation needs state that is not there yet (weights not loaded, missing checkpoint).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// RGB image, row-major HWC, channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f);

  [[nodiscard]] bool empty() const { return height == 0 || width == 0; }
  [[nodiscard]] std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  [[nodiscard]] float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const Image&) const = default;
};

/// Bilinear resampling with half-pixel centers (align_corners = false).
Image resize_bilinear(const Image& src, int height, int width);

/// Separable Gaussian blur with edge clamping; sigma <= 0 returns a copy.
Image gaussian_blur(const Image& src, double sigma);

/// 8-bit quantization used for PNG output: round(clamp(v) * 255).
std::uint8_t to_u8(float v);

Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& image);
Image load_png(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace elemedit
