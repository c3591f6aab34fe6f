#include "elemedit/partition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <unordered_map>

namespace elemedit::partition {

namespace {

Point pixel_center(std::size_t m, int width) {
  return {static_cast<double>(m % width) + 0.5, static_cast<double>(m / width) + 0.5};
}

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void validate_scores(const AffinityScores& s, std::size_t pixels, std::size_t queries) {
  if (s.pixels() != pixels || s.queries() != queries) {
    throw ProviderContractError("affinity provider returned shape (" + std::to_string(s.pixels()) + ", " +
                                std::to_string(s.queries()) + "), expected (" + std::to_string(pixels) + ", " +
                                std::to_string(queries) + ")");
  }
  for (float v : s.values()) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ProviderContractError("affinity provider returned a score outside [0, 1]: " + std::to_string(v));
    }
  }
}

double gaussian_score(double sq_dist, double bandwidth) {
  return std::exp(-sq_dist / (2.0 * bandwidth * bandwidth));
}

std::size_t query_pixel(const Point& q, int height, int width) {
  int x = std::clamp(static_cast<int>(std::floor(q.x)), 0, width - 1);
  int y = std::clamp(static_cast<int>(std::floor(q.y)), 0, height - 1);
  return static_cast<std::size_t>(y) * width + x;
}

}  // namespace

void to_json(nlohmann::json& j, const PartitionConfig& c) {
  j = nlohmann::json{{"grid", c.grid},           {"beta", c.beta},           {"beta_c", c.beta_c},
                     {"iterations", c.iterations}, {"bandwidth", c.bandwidth}, {"blur_sigma", c.blur_sigma}};
}

void from_json(const nlohmann::json& j, PartitionConfig& c) {
  PartitionConfig d;
  c.grid = j.value("grid", d.grid);
  c.beta = j.value("beta", d.beta);
  c.beta_c = j.value("beta_c", d.beta_c);
  c.iterations = j.value("iterations", d.iterations);
  c.bandwidth = j.value("bandwidth", d.bandwidth);
  c.blur_sigma = j.value("blur_sigma", d.blur_sigma);
}

QueryGrid QueryGrid::regular(int height, int width, int grid) {
  if (height <= 0 || width <= 0) throw InputError("query grid needs a non-empty image");
  if (grid <= 0 || grid > std::min(height, width)) throw InputError("grid must be in [1, min(H, W)]");
  QueryGrid q{height, width, grid, {}};
  q.points.reserve(static_cast<std::size_t>(grid) * grid);
  const double sx = static_cast<double>(width) / grid;
  const double sy = static_cast<double>(height) / grid;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) q.points.push_back({(j + 0.5) * sx, (i + 0.5) * sy});
  return q;
}

ColorKernelProvider::ColorKernelProvider(double bandwidth, double blur_sigma)
    : bandwidth_{bandwidth}, blur_sigma_{blur_sigma} {
  if (!(bandwidth > 0.0)) throw InputError("kernel bandwidth must be positive");
}

AffinityScores ColorKernelProvider::score(const Image& image, std::span<const Point> queries) const {
  const Image features = gaussian_blur(image, blur_sigma_);
  const std::size_t pixels = image.pixel_count();
  AffinityScores s(pixels, queries.size());
  std::vector<std::array<float, 3>> qf(queries.size());
  for (std::size_t n = 0; n < queries.size(); ++n) {
    std::size_t p = query_pixel(queries[n], image.height, image.width);
    for (int c = 0; c < 3; ++c) qf[n][c] = features.data[p * 3 + c];
  }
  for (std::size_t m = 0; m < pixels; ++m) {
    const float* f = features.data.data() + m * 3;
    for (std::size_t n = 0; n < queries.size(); ++n) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        double diff = static_cast<double>(f[c]) - qf[n][c];
        d2 += diff * diff;
      }
      s(m, n) = static_cast<float>(gaussian_score(d2, bandwidth_));
    }
  }
  return s;
}

FeatureKernelProvider::FeatureKernelProvider(int height, int width, int dim, std::vector<float> features,
                                             double bandwidth)
    : height_{height}, width_{width}, dim_{dim}, features_{std::move(features)}, bandwidth_{bandwidth} {
  if (features_.size() != static_cast<std::size_t>(height) * width * dim) {
    throw InputError("feature buffer does not match H * W * dim");
  }
  if (!(bandwidth > 0.0)) throw InputError("kernel bandwidth must be positive");
}

AffinityScores FeatureKernelProvider::score(const Image& image, std::span<const Point> queries) const {
  if (image.height != height_ || image.width != width_) {
    throw InputError("precomputed features were computed for a different image size");
  }
  const std::size_t pixels = image.pixel_count();
  AffinityScores s(pixels, queries.size());
  for (std::size_t n = 0; n < queries.size(); ++n) {
    const float* q = features_.data() + query_pixel(queries[n], height_, width_) * dim_;
    for (std::size_t m = 0; m < pixels; ++m) {
      const float* f = features_.data() + m * dim_;
      double d2 = 0.0;
      for (int k = 0; k < dim_; ++k) {
        double diff = static_cast<double>(f[k]) - q[k];
        d2 += diff * diff;
      }
      s(m, n) = static_cast<float>(gaussian_score(d2, bandwidth_));
    }
  }
  return s;
}

AffinityScores compute_affinity(const Image& image, const QueryGrid& queries, const AffinityProvider& provider) {
  if (image.height != queries.height || image.width != queries.width) {
    throw InputError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " but the query grid expects " + std::to_string(queries.height) + "x" +
                     std::to_string(queries.width));
  }
  return compute_affinity(image, std::span<const Point>(queries.points), provider);
}

AffinityScores compute_affinity(const Image& image, std::span<const Point> queries, const AffinityProvider& provider) {
  if (image.empty()) throw InputError("empty image");
  AffinityScores s = provider.score(image, queries);
  validate_scores(s, image.pixel_count(), queries.size());
  return s;
}

LabelMap assign_affinity(const AffinityScores& s, int height, int width) {
  if (s.pixels() != static_cast<std::size_t>(height) * width) throw InputError("score rows do not match image");
  if (s.queries() == 0) throw InputError("no queries");
  LabelMap out(height, width);
  for (std::size_t m = 0; m < s.pixels(); ++m) {
    auto row = s.row(m);
    int best = 0;
    for (std::size_t n = 1; n < row.size(); ++n) {
      if (std::isnan(row[n])) throw InputError("NaN affinity score");
      if (row[n] > row[best]) best = static_cast<int>(n);
    }
    if (std::isnan(row[0])) throw InputError("NaN affinity score");
    out.labels[m] = best;
  }
  return out;
}

LabelMap assign_regularized(const AffinityScores& s, const QueryGrid& queries, std::span<const Point> centroids,
                            double beta) {
  if (!(beta >= 0.0)) throw InputError("beta must be >= 0");
  if (s.pixels() != static_cast<std::size_t>(queries.height) * queries.width) {
    throw InputError("score rows do not match the query grid image size");
  }
  if (s.queries() != centroids.size() || centroids.empty()) {
    throw InputError("score columns do not match the centroid count");
  }
  for (float v : s.values())
    if (std::isnan(v)) throw InputError("NaN affinity score");

  const double spacing = queries.spacing();
  LabelMap out(queries.height, queries.width);
  for (std::size_t m = 0; m < s.pixels(); ++m) {
    const Point p = pixel_center(m, queries.width);
    auto row = s.row(m);
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t n = 0; n < centroids.size(); ++n) {
      double v = static_cast<double>(row[n]) - beta * (distance(p, centroids[n]) / spacing);
      if (v > best) {
        best = v;
        arg = static_cast<int>(n);
      }
    }
    out.labels[m] = arg;
  }
  return out;
}

std::vector<Point> compute_centroids(const LabelMap& labels, std::size_t count, std::span<const Point> fallback) {
  if (fallback.size() != count) throw InputError("fallback centroid count mismatch");
  std::vector<double> sx(count, 0.0), sy(count, 0.0);
  std::vector<std::size_t> cnt(count, 0);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    int l = labels.labels[m];
    if (l < 0) continue;
    if (static_cast<std::size_t>(l) >= count) throw InputError("label exceeds element count");
    Point p = pixel_center(m, labels.width);
    sx[l] += p.x;
    sy[l] += p.y;
    ++cnt[l];
  }
  std::vector<Point> out(count);
  for (std::size_t n = 0; n < count; ++n) {
    out[n] = cnt[n] ? Point{sx[n] / cnt[n], sy[n] / cnt[n]} : fallback[n];
  }
  return out;
}

std::vector<Point> adjust_centroids(std::span<const Point> centroids_new, std::span<const Point> queries,
                                    double beta_c) {
  if (centroids_new.size() != queries.size()) throw InputError("centroid/query count mismatch");
  if (!(beta_c >= 0.0 && beta_c <= 1.0)) throw InputError("beta_c must be in [0, 1]");
  std::vector<Point> out(queries.size());
  for (std::size_t n = 0; n < queries.size(); ++n) {
    out[n] = {beta_c * centroids_new[n].x + (1.0 - beta_c) * queries[n].x,
              beta_c * centroids_new[n].y + (1.0 - beta_c) * queries[n].y};
  }
  return out;
}

LabelMap connected_components_filter(const LabelMap& labels) {
  const int h = labels.height;
  const int w = labels.width;
  std::vector<int> component(labels.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<int> component_label;

  std::queue<std::size_t> frontier;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    int l = labels.labels[start];
    if (l < 0 || component[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    component_label.push_back(l);
    component[start] = id;
    frontier.push(start);
    while (!frontier.empty()) {
      std::size_t m = frontier.front();
      frontier.pop();
      ++sizes[id];
      int y = static_cast<int>(m / w);
      int x = static_cast<int>(m % w);
      const std::array<std::pair<int, int>, 4> nbrs{{{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}}};
      for (auto [ny, nx] : nbrs) {
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        std::size_t nm = static_cast<std::size_t>(ny) * w + nx;
        if (component[nm] < 0 && labels.labels[nm] == l) {
          component[nm] = id;
          frontier.push(nm);
        }
      }
    }
  }

  // Components are discovered in row-major order of their first pixel, so a
  // strict comparison keeps the earliest one on size ties.
  std::unordered_map<int, int> keep;
  for (int id = 0; id < static_cast<int>(sizes.size()); ++id) {
    auto [it, inserted] = keep.try_emplace(component_label[id], id);
    if (!inserted && sizes[id] > sizes[it->second]) it->second = id;
  }

  LabelMap out(h, w);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    int l = labels.labels[m];
    if (l >= 0 && keep.at(l) == component[m]) out.labels[m] = l;
  }
  return out;
}

std::vector<ImageElement> extract_elements(const Image& image, const LabelMap& labels, std::size_t count) {
  if (image.height != labels.height || image.width != labels.width) {
    throw InputError("label map does not match image size");
  }
  struct Acc {
    int x0 = std::numeric_limits<int>::max(), y0 = std::numeric_limits<int>::max();
    int x1 = -1, y1 = -1;
    double sx = 0, sy = 0;
    std::size_t n = 0;
  };
  std::vector<Acc> acc(count);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      int l = labels.at(y, x);
      if (l < 0) continue;
      if (static_cast<std::size_t>(l) >= count) throw InputError("label exceeds element count");
      auto& a = acc[l];
      a.x0 = std::min(a.x0, x);
      a.y0 = std::min(a.y0, y);
      a.x1 = std::max(a.x1, x + 1);
      a.y1 = std::max(a.y1, y + 1);
      a.sx += x + 0.5;
      a.sy += y + 0.5;
      ++a.n;
    }

  std::vector<ImageElement> out(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto& a = acc[n];
    auto& e = out[n];
    if (a.n == 0) continue;
    e.valid = true;
    e.pixel_count = a.n;
    e.x0 = a.x0;
    e.y0 = a.y0;
    e.x1 = a.x1;
    e.y1 = a.y1;
    e.centroid = {a.sx / a.n / image.width, a.sy / a.n / image.height};
    e.w = static_cast<double>(a.x1 - a.x0) / image.width;
    e.h = static_cast<double>(a.y1 - a.y0) / image.height;
    e.patch = Image(a.y1 - a.y0, a.x1 - a.x0);
    for (int y = a.y0; y < a.y1; ++y)
      for (int x = a.x0; x < a.x1; ++x) {
        if (labels.at(y, x) != static_cast<int>(n)) continue;
        for (int c = 0; c < 3; ++c) e.patch.at(y - a.y0, x - a.x0, c) = image.at(y, x, c);
      }
  }
  return out;
}

Partition describe(const LabelMap& labels, std::size_t count, double beta, int grid) {
  Partition p;
  p.labels = labels;
  p.beta = beta;
  p.grid = grid;
  std::vector<Point> zeros(count);
  p.centroids = compute_centroids(labels, count, zeros);
  p.bbox_sizes.assign(count, {});
  std::vector<int> x0(count, labels.width), y0(count, labels.height), x1(count, -1), y1(count, -1);
  std::size_t dropped = 0;
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      int l = labels.at(y, x);
      if (l < 0) {
        ++dropped;
        continue;
      }
      x0[l] = std::min(x0[l], x);
      y0[l] = std::min(y0[l], y);
      x1[l] = std::max(x1[l], x + 1);
      y1[l] = std::max(y1[l], y + 1);
    }
  for (std::size_t n = 0; n < count; ++n)
    if (x1[n] > 0) p.bbox_sizes[n] = {x1[n] - x0[n], y1[n] - y0[n]};
  p.dropped_fraction = labels.size() ? static_cast<double>(dropped) / static_cast<double>(labels.size()) : 0.0;
  return p;
}

PartitionResult partition_image(const Image& image, const PartitionConfig& config, const AffinityProvider* provider) {
  if (config.iterations < 1) throw InputError("iterations must be >= 1");
  if (!(config.beta >= 0.0)) throw InputError("beta must be >= 0");
  const QueryGrid grid = QueryGrid::regular(image.height, image.width, config.grid);
  std::unique_ptr<AffinityProvider> fallback;
  if (!provider) {
    fallback = std::make_unique<ColorKernelProvider>(config.bandwidth, config.blur_sigma);
    provider = fallback.get();
  }
  const std::size_t n = grid.size();
  std::vector<Point> centroids = grid.points;
  LabelMap labels;
  for (int it = 1; it <= config.iterations; ++it) {
    AffinityScores s = compute_affinity(image, std::span<const Point>(centroids), *provider);
    LabelMap plain = assign_affinity(s, image.height, image.width);
    std::vector<Point> moved = compute_centroids(plain, n, centroids);
    std::vector<Point> adjusted = adjust_centroids(moved, grid.points, config.beta_c);
    labels = assign_regularized(s, grid, adjusted, config.beta);
    if (it == config.iterations) labels = connected_components_filter(labels);
    centroids = compute_centroids(labels, n, adjusted);
  }
  PartitionResult result;
  result.partition = describe(labels, n, config.beta, config.grid);
  result.elements = extract_elements(image, labels, n);
  return result;
}

LabelMap voronoi_labels(const QueryGrid& queries) {
  LabelMap out(queries.height, queries.width);
  for (std::size_t m = 0; m < out.size(); ++m) {
    Point p = pixel_center(m, queries.width);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t n = 0; n < queries.size(); ++n) {
      double d = distance(p, queries.points[n]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(n);
      }
    }
    out.labels[m] = arg;
  }
  return out;
}

LabelMap grid_labels(int height, int width, int grid) {
  if (grid <= 0 || grid > std::min(height, width)) throw InputError("grid must be in [1, min(H, W)]");
  LabelMap out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      int gy = y * grid / height;
      int gx = x * grid / width;
      out.at(y, x) = gy * grid + gx;
    }
  return out;
}

LabelMap pixel_slic(const Image& image, int grid, double compactness, int iterations) {
  const QueryGrid q = QueryGrid::regular(image.height, image.width, grid);
  const double step = q.spacing();
  struct Center {
    double x, y, r, g, b;
  };
  std::vector<Center> centers;
  for (const auto& p : q.points) {
    std::size_t m = query_pixel(p, image.height, image.width);
    centers.push_back({p.x, p.y, image.data[m * 3], image.data[m * 3 + 1], image.data[m * 3 + 2]});
  }
  const std::size_t pixels = image.pixel_count();
  LabelMap labels(image.height, image.width);
  std::vector<double> best(pixels);
  const double spatial_weight = compactness / step;
  for (int it = 0; it < std::max(1, iterations); ++it) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const auto& c = centers[k];
      int xa = std::max(0, static_cast<int>(c.x - 2 * step));
      int xb = std::min(image.width, static_cast<int>(c.x + 2 * step) + 1);
      int ya = std::max(0, static_cast<int>(c.y - 2 * step));
      int yb = std::min(image.height, static_cast<int>(c.y + 2 * step) + 1);
      for (int y = ya; y < yb; ++y)
        for (int x = xa; x < xb; ++x) {
          std::size_t m = static_cast<std::size_t>(y) * image.width + x;
          double dr = image.data[m * 3] - c.r, dg = image.data[m * 3 + 1] - c.g, db = image.data[m * 3 + 2] - c.b;
          double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
          double d = dr * dr + dg * dg + db * db + spatial_weight * spatial_weight * (dx * dx + dy * dy);
          if (d < best[m]) {
            best[m] = d;
            labels.labels[m] = static_cast<int>(k);
          }
        }
    }
    std::vector<Center> acc(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<std::size_t> cnt(centers.size(), 0);
    for (std::size_t m = 0; m < pixels; ++m) {
      int l = labels.labels[m];
      if (l < 0) continue;
      Point p = pixel_center(m, image.width);
      acc[l].x += p.x;
      acc[l].y += p.y;
      acc[l].r += image.data[m * 3];
      acc[l].g += image.data[m * 3 + 1];
      acc[l].b += image.data[m * 3 + 2];
      ++cnt[l];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (!cnt[k]) continue;
      double inv = 1.0 / static_cast<double>(cnt[k]);
      centers[k] = {acc[k].x * inv, acc[k].y * inv, acc[k].r * inv, acc[k].g * inv, acc[k].b * inv};
    }
  }
  return connected_components_filter(labels);
}

double mean_iou(const LabelMap& labels, const LabelMap& reference, std::size_t count) {
  if (labels.height != reference.height || labels.width != reference.width) {
    throw InputError("label maps differ in size");
  }
  if (count == 0) return 0.0;
  std::vector<std::size_t> inter(count, 0), a(count, 0), b(count, 0);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    int la = labels.labels[m];
    int lb = reference.labels[m];
    if (la >= 0 && static_cast<std::size_t>(la) < count) ++a[la];
    if (lb >= 0 && static_cast<std::size_t>(lb) < count) ++b[lb];
    if (la >= 0 && la == lb && static_cast<std::size_t>(la) < count) ++inter[la];
  }
  double sum = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    std::size_t uni = a[n] + b[n] - inter[n];
    sum += uni ? static_cast<double>(inter[n]) / static_cast<double>(uni) : 0.0;
  }
  return sum / static_cast<double>(count);
}

Image render_overlay(const Image& image, const Partition& partition) {
  const auto& labels = partition.labels;
  if (image.height != labels.height || image.width != labels.width) {
    throw InputError("partition does not match image size");
  }
  Image out = image;
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      int l = labels.at(y, x);
      bool edge = l < 0 || (x + 1 < labels.width && labels.at(y, x + 1) != l) ||
                  (y + 1 < labels.height && labels.at(y + 1, x) != l);
      if (!edge) continue;
      float v = l < 0 ? 0.0f : 1.0f;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = v;
    }
  const int r = image.width >= 128 ? 1 : 0;
  for (std::size_t n = 0; n < partition.centroids.size(); ++n) {
    if (partition.bbox_sizes[n].w == 0) continue;
    int cx = static_cast<int>(partition.centroids[n].x);
    int cy = static_cast<int>(partition.centroids[n].y);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        int x = std::clamp(cx + dx, 0, image.width - 1);
        int y = std::clamp(cy + dy, 0, image.height - 1);
        out.at(y, x, 0) = 1.0f;
        out.at(y, x, 1) = 0.0f;
        out.at(y, x, 2) = 0.0f;
      }
  }
  return out;
}

nlohmann::json encode_labels_rle(const LabelMap& labels) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t m = 0;
  while (m < labels.size()) {
    int l = labels.labels[m];
    std::size_t run = 1;
    while (m + run < labels.size() && labels.labels[m + run] == l) ++run;
    runs.push_back({l, run});
    m += run;
  }
  return runs;
}

LabelMap decode_labels_rle(const nlohmann::json& rle, int height, int width) {
  LabelMap out(height, width);
  std::size_t m = 0;
  for (const auto& run : rle) {
    if (!run.is_array() || run.size() != 2) throw InputError("malformed label run");
    int l = run[0].get<int>();
    auto len = run[1].get<std::size_t>();
    if (m + len > out.size()) throw InputError("label runs exceed image size");
    std::fill_n(out.labels.begin() + static_cast<std::ptrdiff_t>(m), len, l);
    m += len;
  }
  if (m != out.size()) throw InputError("label runs do not cover the image");
  return out;
}

nlohmann::json partition_to_json(const Partition& p, const PartitionConfig& config) {
  nlohmann::json centroids = nlohmann::json::array();
  nlohmann::json sizes = nlohmann::json::array();
  for (std::size_t n = 0; n < p.element_count(); ++n) {
    centroids.push_back({p.centroids[n].x / p.labels.width, p.centroids[n].y / p.labels.height});
    sizes.push_back({static_cast<double>(p.bbox_sizes[n].w) / p.labels.width,
                     static_cast<double>(p.bbox_sizes[n].h) / p.labels.height});
  }
  return {{"schema", "elemedit.partition/1"},
          {"height", p.labels.height},
          {"width", p.labels.width},
          {"grid", p.grid},
          {"beta", p.beta},
          {"element_count", p.element_count()},
          {"labels_rle", encode_labels_rle(p.labels)},
          {"centroids", centroids},
          {"bbox_sizes", sizes},
          {"dropped_fraction", p.dropped_fraction},
          {"config", config}};
}

Partition partition_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != "elemedit.partition/1") throw InputError("not an elemedit.partition/1 document");
  int h = doc.at("height").get<int>();
  int w = doc.at("width").get<int>();
  LabelMap labels = decode_labels_rle(doc.at("labels_rle"), h, w);
  return describe(labels, doc.at("element_count").get<std::size_t>(), doc.at("beta").get<double>(),
                  doc.at("grid").get<int>());
}

}  // namespace elemedit::partition
