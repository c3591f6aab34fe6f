#include "elemedit/metrics.hpp"

#include <cmath>
#include <vector>

namespace elemedit::metrics {

namespace {

void check_same_shape(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) throw InputError("images differ in size");
  if (a.empty()) throw InputError("empty image");
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same_shape(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double psnr_from_mse(double mse, double ceiling) {
  if (mse <= 0.0) return ceiling;
  return std::min(ceiling, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_same_shape(a, b);
  constexpr int kWin = 7;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);
  if (a.height < kWin || a.width < kWin) throw InputError("SSIM needs images of at least 7x7");

  std::vector<double> w(kWin * kWin);
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - kWin / 2, dj = j - kWin / 2;
      w[i * kWin + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      wsum += w[i * kWin + j];
    }
  for (auto& v : w) v /= wsum;

  double total = 0.0;
  std::size_t windows = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y + kWin <= a.height; ++y)
      for (int x = 0; x + kWin <= a.width; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            double wk = w[i * kWin + j];
            double va = a.at(y + i, x + j, c);
            double vb = b.at(y + i, x + j, c);
            mx += wk * va;
            my += wk * vb;
            sxx += wk * va * va;
            syy += wk * vb * vb;
            sxy += wk * va * vb;
          }
        double vx = sxx - mx * mx;
        double vy = syy - my * my;
        double cxy = sxy - mx * my;
        double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
        double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
        total += num / den;
        ++windows;
      }
  return total / static_cast<double>(windows);
}

void MetricsAccumulator::add(const Image& reference, const Image& reconstruction) {
  double m = mse(reference, reconstruction);
  sq_sum_ += m * static_cast<double>(reference.data.size());
  values_ += static_cast<double>(reference.data.size());
  ssim_sum_ += ssim(reference, reconstruction);
  ++count_;
}

MetricsReport MetricsAccumulator::report(std::string split, nlohmann::json config) const {
  MetricsReport r;
  r.split = std::move(split);
  r.samples = count_;
  r.mse = values_ > 0 ? sq_sum_ / values_ : 0.0;
  r.psnr = psnr_from_mse(r.mse);
  r.ssim = count_ ? ssim_sum_ / static_cast<double>(count_) : 0.0;
  r.config = std::move(config);
  r.version = version_string();
  return r;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  return {{"schema", "elemedit.metrics/1"},
          {"split", r.split},
          {"samples", r.samples},
          {"mse", r.mse},
          {"psnr", r.psnr},
          {"ssim", r.ssim},
          {"reduction_tolerance", r.reduction_tolerance},
          {"config", r.config},
          {"version", r.version}};
}

const char* version_string() { return "elemedit 0.1.0"; }

}  // namespace elemedit::metrics
