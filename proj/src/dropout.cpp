#include "elemedit/dropout.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace elemedit::dropout {

void to_json(nlohmann::json& j, const ConditionDropout& c) {
  j = {{"text_only", c.text_only}, {"elements_only", c.elements_only}, {"both", c.both}};
}

void from_json(const nlohmann::json& j, ConditionDropout& c) {
  c.text_only = j.value("text_only", c.text_only);
  c.elements_only = j.value("elements_only", c.elements_only);
  c.both = j.value("both", c.both);
  if (c.text_only < 0 || c.elements_only < 0 || c.both < 0 || c.text_only + c.elements_only + c.both > 1.0) {
    throw InputError("condition dropout probabilities must be non-negative and sum to at most 1");
  }
}

DropDecision sample_condition_dropout(const ConditionDropout& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < p.text_only) return {true, false};
  if (u < p.text_only + p.elements_only) return {false, true};
  if (u < p.text_only + p.elements_only + p.both) return {true, true};
  return {};
}

double Mask::area_fraction() const {
  if (values.empty()) return 0.0;
  return static_cast<double>(std::count(values.begin(), values.end(), 1)) / static_cast<double>(values.size());
}

MaskSampler::MaskSampler(double min_area, double max_area) : min_area_{min_area}, max_area_{max_area} {
  if (!(min_area > 0.0) || !(max_area <= 1.0) || min_area > max_area) throw InputError("mask area range");
}

Mask MaskSampler::sample(int height, int width, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    const bool ellipse = unit(rng) < 0.5;
    const double area = min_area_ + (max_area_ - min_area_) * unit(rng);
    const double aspect = std::exp(std::log(0.5) + std::log(4.0) * unit(rng));  // 0.5 .. 2
    // box fraction so that the shape covers `area` of the image
    const double box = ellipse ? area * 4.0 / std::numbers::pi : area;
    const double bw = std::sqrt(box * aspect);
    const double bh = box / bw;
    if (bw > 1.0 || bh > 1.0) continue;
    const double cx = bw / 2 + (1.0 - bw) * unit(rng);
    const double cy = bh / 2 + (1.0 - bh) * unit(rng);
    Mask m(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = ((x + 0.5) / width - cx) / (bw / 2);
        const double dy = ((y + 0.5) / height - cy) / (bh / 2);
        const bool in = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        m.at(y, x) = in ? 1 : 0;
      }
    const double a = m.area_fraction();
    if (a >= min_area_ && a <= max_area_) return m;
  }
}

std::vector<int> overlapping_cells(const partition::LabelMap& labels, const Mask& mask, std::size_t count) {
  if (labels.height != mask.height || labels.width != mask.width) throw InputError("mask and label map differ in size");
  std::vector<std::uint8_t> hit(count, 0);
  for (std::size_t m = 0; m < labels.labels.size(); ++m) {
    const int l = labels.labels[m];
    if (l < 0 || !mask.values[m]) continue;
    if (static_cast<std::size_t>(l) >= count) throw InputError("label exceeds element count");
    hit[static_cast<std::size_t>(l)] = 1;
  }
  std::vector<int> out;
  for (std::size_t n = 0; n < count; ++n)
    if (hit[n]) out.push_back(static_cast<int>(n));
  return out;
}

ElementSet dropout_elements(const ElementSet& set, const Mask& mask, const partition::LabelMap& labels) {
  ElementSet out = set;
  for (int n : overlapping_cells(labels, mask, set.size())) out.invalidate(static_cast<std::size_t>(n));
  return out;
}

}  // namespace elemedit::dropout
