#pragma once

// Training-time condition dropout and element dropout over masks.

#include <cstdint>
#include <random>
#include <vector>

#include "json.hpp"

#include "elemedit/elements.hpp"
#include "elemedit/partition.hpp"

namespace elemedit::dropout {

/// Per-example probabilities of nulling only the text, only the elements, or both.
struct ConditionDropout {
  double text_only = 0.3;
  double elements_only = 0.1;
  double both = 0.1;
};

void to_json(nlohmann::json& j, const ConditionDropout& c);
void from_json(const nlohmann::json& j, ConditionDropout& c);

struct DropDecision {
  bool null_text = false;
  bool null_elements = false;
  bool operator==(const DropDecision&) const = default;
};

/// One uniform draw split into the three disjoint dropout events.
DropDecision sample_condition_dropout(const ConditionDropout& p, std::mt19937_64& rng);

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;  // row-major, 1 = masked

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0) : height{h}, width{w}, values(static_cast<std::size_t>(h) * w, fill) {}
  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] double area_fraction() const;
};

/// Random axis-aligned rectangles and ellipses covering a bounded share of the image.
class MaskSampler {
 public:
  explicit MaskSampler(double min_area = 0.05, double max_area = 0.40);
  Mask sample(int height, int width, std::mt19937_64& rng) const;

 private:
  double min_area_;
  double max_area_;
};

/// Labels in [0, count) having at least one pixel under the mask, ascending.
std::vector<int> overlapping_cells(const partition::LabelMap& labels, const Mask& mask, std::size_t count);

/// Invalidates the elements of `set` (slots follow `labels`) whose cells touch the mask.
ElementSet dropout_elements(const ElementSet& set, const Mask& mask, const partition::LabelMap& labels);

}  // namespace elemedit::dropout
