#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"

#include "elemedit/image.hpp"

namespace elemedit::metrics {

/// Default ceiling returned by psnr() for identical images.
inline constexpr double kPsnrCeiling = 100.0;

double mse(const Image& a, const Image& b);

/// 10 log10(1 / mse) for unit-range images, capped at `ceiling`.
double psnr_from_mse(double mse, double ceiling = kPsnrCeiling);

/// Gaussian-window SSIM (7x7, sigma 1.5, k1 = 0.01, k2 = 0.03, unit data
/// range), averaged over valid window positions and channels.
double ssim(const Image& a, const Image& b);

struct MetricsReport {
  std::string split;
  std::size_t samples = 0;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double reduction_tolerance = 1e-9;
  nlohmann::json config;
  std::string version;
};

/// Accumulates per-image errors in submission order and reports the pooled
/// MSE (PSNR derived from it) and mean SSIM.
class MetricsAccumulator {
 public:
  void add(const Image& reference, const Image& reconstruction);
  [[nodiscard]] MetricsReport report(std::string split, nlohmann::json config) const;
  [[nodiscard]] std::size_t count() const { return count_; }

 private:
  double sq_sum_ = 0.0;
  double values_ = 0.0;
  double ssim_sum_ = 0.0;
  std::size_t count_ = 0;
};

nlohmann::json report_to_json(const MetricsReport& r);

const char* version_string();

}  // namespace elemedit::metrics
