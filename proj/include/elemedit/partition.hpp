#pragma once

// Semantically regularized superpixel partition.
//
// Coordinates are in the continuous pixel frame: the pixel at (row r, col c)
// has its center at (c + 0.5, r + 0.5). Normalized values divide by the
// image width (x) or height (y).

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"

#include "elemedit/image.hpp"

namespace elemedit::partition {

inline constexpr int kDropped = -1;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Raised when an affinity provider breaks the [0, 1] / finite score contract.
class ProviderContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regular G x G lattice of query points at cell centers, row-major.
struct QueryGrid {
  int height = 0;
  int width = 0;
  int grid = 0;
  std::vector<Point> points;

  static QueryGrid regular(int height, int width, int grid);

  [[nodiscard]] std::size_t size() const { return points.size(); }
  /// Distance unit for the spatial regularizer: one lattice step along x.
  [[nodiscard]] double spacing() const { return static_cast<double>(width) / grid; }
};

/// Dense (H*W) x N score matrix, row m = pixel in row-major order.
class AffinityScores {
 public:
  AffinityScores() = default;
  AffinityScores(std::size_t pixels, std::size_t queries, float fill = 0.0f)
      : pixels_{pixels}, queries_{queries}, values_(pixels * queries, fill) {}

  [[nodiscard]] std::size_t pixels() const { return pixels_; }
  [[nodiscard]] std::size_t queries() const { return queries_; }
  float& operator()(std::size_t m, std::size_t n) { return values_[m * queries_ + n]; }
  [[nodiscard]] float operator()(std::size_t m, std::size_t n) const { return values_[m * queries_ + n]; }
  [[nodiscard]] std::span<const float> row(std::size_t m) const {
    return {values_.data() + m * queries_, queries_};
  }
  [[nodiscard]] std::span<const float> values() const { return values_; }

 private:
  std::size_t pixels_ = 0;
  std::size_t queries_ = 0;
  std::vector<float> values_;
};

/// Scores every pixel against every query point. Implementations must return
/// finite values in [0, 1] and be deterministic.
class AffinityProvider {
 public:
  virtual ~AffinityProvider() = default;
  virtual AffinityScores score(const Image& image, std::span<const Point> queries) const = 0;
};

/// Gaussian kernel over (optionally blurred) RGB:
/// s(m, n) = exp(-|f_m - f_q(n)|^2 / (2 bandwidth^2)), f_q sampled at the pixel under the query.
class ColorKernelProvider final : public AffinityProvider {
 public:
  explicit ColorKernelProvider(double bandwidth = 0.4, double blur_sigma = 0.0);
  AffinityScores score(const Image& image, std::span<const Point> queries) const override;

 private:
  double bandwidth_;
  double blur_sigma_;
};

/// Adapter for externally computed per-pixel features (H*W x dim, row-major),
/// scored with the same Gaussian kernel.
class FeatureKernelProvider final : public AffinityProvider {
 public:
  FeatureKernelProvider(int height, int width, int dim, std::vector<float> features, double bandwidth);
  AffinityScores score(const Image& image, std::span<const Point> queries) const override;

 private:
  int height_;
  int width_;
  int dim_;
  std::vector<float> features_;
  double bandwidth_;
};

struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int h, int w, int fill = kDropped)
      : height{h}, width{w}, labels(static_cast<std::size_t>(h) * w, fill) {}

  int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] std::size_t size() const { return labels.size(); }
  bool operator==(const LabelMap&) const = default;
};

struct BoxSize {
  int w = 0;
  int h = 0;
  bool operator==(const BoxSize&) const = default;
};

struct Partition {
  LabelMap labels;
  double beta = 0.0;
  int grid = 0;
  std::vector<Point> centroids;   // pixel frame; (0, 0) for empty labels
  std::vector<BoxSize> bbox_sizes;
  double dropped_fraction = 0.0;

  [[nodiscard]] std::size_t element_count() const { return centroids.size(); }
  bool operator==(const Partition&) const = default;
};

struct ImageElement {
  Image patch;            // bbox crop, pixels outside the mask are 0
  Point centroid;         // normalized to [0, 1]
  double w = 0.0;         // normalized bbox width
  double h = 0.0;
  bool valid = false;
  int x0 = 0, y0 = 0;     // bbox, half-open [x0, x1) x [y0, y1)
  int x1 = 0, y1 = 0;
  std::size_t pixel_count = 0;
};

struct PartitionConfig {
  int grid = 8;
  double beta = 0.5;
  double beta_c = 0.2;
  int iterations = 1;
  double bandwidth = 0.4;
  double blur_sigma = 1.0;
};

void to_json(nlohmann::json& j, const PartitionConfig& c);
void from_json(const nlohmann::json& j, PartitionConfig& c);

AffinityScores compute_affinity(const Image& image, const QueryGrid& queries, const AffinityProvider& provider);
AffinityScores compute_affinity(const Image& image, std::span<const Point> queries, const AffinityProvider& provider);

/// Plain argmax_n s(m, n); lowest index wins ties.
LabelMap assign_affinity(const AffinityScores& s, int height, int width);

/// g(m) = argmax_n [s(m, n) - beta * |p_m - c_n| / spacing]; lowest index wins ties.
LabelMap assign_regularized(const AffinityScores& s, const QueryGrid& queries,
                            std::span<const Point> centroids, double beta);

/// Mean pixel-center coordinate per label; labels without pixels take fallback[n].
std::vector<Point> compute_centroids(const LabelMap& labels, std::size_t count, std::span<const Point> fallback);

/// beta_c * new + (1 - beta_c) * queries, elementwise.
std::vector<Point> adjust_centroids(std::span<const Point> centroids_new, std::span<const Point> queries,
                                    double beta_c);

/// Keeps only the largest 4-connected component of every label; the rest
/// become kDropped. Equal-size components: the one whose first pixel comes
/// first in row-major order wins.
LabelMap connected_components_filter(const LabelMap& labels);

/// One element per label in [0, count); empty labels give invalid placeholders.
std::vector<ImageElement> extract_elements(const Image& image, const LabelMap& labels, std::size_t count);

/// Geometry summary (centroids, tight bbox sizes, dropped fraction) of a label map.
Partition describe(const LabelMap& labels, std::size_t count, double beta, int grid);

struct PartitionResult {
  Partition partition;
  std::vector<ImageElement> elements;
};

/// Full pipeline: affinity -> argmax -> centroids -> adjustment -> distance-regularized
/// assignment -> (last iteration) component cleanup -> element extraction.
/// With provider == nullptr a ColorKernelProvider built from the config is used.
PartitionResult partition_image(const Image& image, const PartitionConfig& config,
                                const AffinityProvider* provider = nullptr);

/// Voronoi tiling of the regular query grid (the beta -> infinity limit).
LabelMap voronoi_labels(const QueryGrid& queries);

/// Fixed grid of G x G rectangular cells (ablation baseline).
LabelMap grid_labels(int height, int width, int grid);

/// Classic SLIC in (RGB, xy) space (ablation baseline); cleaned by component filtering.
LabelMap pixel_slic(const Image& image, int grid, double compactness, int iterations);

/// Mean over labels of IoU(labels == n, reference == n), n in [0, count).
double mean_iou(const LabelMap& labels, const LabelMap& reference, std::size_t count);

/// Boundary pixels drawn white, centroids as red dots.
Image render_overlay(const Image& image, const Partition& partition);

/// Row-major run-length encoding: [[label, run], ...].
nlohmann::json encode_labels_rle(const LabelMap& labels);
LabelMap decode_labels_rle(const nlohmann::json& rle, int height, int width);

/// `elemedit.partition/1` document.
nlohmann::json partition_to_json(const Partition& partition, const PartitionConfig& config);
Partition partition_from_json(const nlohmann::json& doc);

}  // namespace elemedit::partition
