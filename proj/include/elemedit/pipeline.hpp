#pragma once

// Inference facade over loaded checkpoints, evaluation and ablations.
// This header does not pull in libtorch.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "elemedit/config.hpp"
#include "elemedit/dataset.hpp"
#include "elemedit/elements.hpp"
#include "elemedit/metrics.hpp"
#include "elemedit/partition.hpp"

namespace elemedit {

struct DecodeRequest {
  std::string prompt;
  std::uint64_t seed = 0;
  int steps = 50;
  double guidance = 3.0;
};

/// Read-only after construction; safe for concurrent callers.
class Engine {
 public:
  struct Impl;
  explicit Engine(std::unique_ptr<Impl> impl);
  ~Engine();

  /// Loads model_dir/codec and, if present, model_dir/diffusion.
  /// Throws StateError when the codec checkpoint is missing.
  static std::shared_ptr<Engine> load(const std::filesystem::path& model_dir);

  [[nodiscard]] const PipelineConfig& config() const;
  [[nodiscard]] const std::vector<std::string>& vocabulary() const;
  [[nodiscard]] bool can_decode() const;
  [[nodiscard]] int resolution() const;

  /// Bilinear resize to the model resolution (identity when it already matches).
  [[nodiscard]] Image prepare(const Image& image) const;
  [[nodiscard]] partition::PartitionResult partition(const Image& image) const;
  [[nodiscard]] ElementSet encode(const std::vector<partition::ImageElement>& elements) const;
  [[nodiscard]] Image decode_light(const ElementSet& set) const;
  /// DDIM with guidance; StateError without a diffusion checkpoint.
  [[nodiscard]] Image decode(const ElementSet& set, const DecodeRequest& request) const;
  [[nodiscard]] std::vector<Image> decode_batch(const std::vector<const ElementSet*>& sets,
                                                const std::vector<DecodeRequest>& requests) const;
  /// prepare -> partition -> encode -> decode.
  [[nodiscard]] Image reconstruct(const Image& image, const DecodeRequest& request) const;

  Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

enum class DecodePath { diffusion, light, identity };

struct EvalOptions {
  DecodePath path = DecodePath::diffusion;
  int steps = 50;
  double guidance = 3.0;
  std::uint64_t seed = 0;  // z_T of image i uses seed + i
  std::size_t limit = 0;
  std::size_t batch = 8;
};

/// Reconstruction metrics over one split; StateError when checkpoints are missing.
metrics::MetricsReport evaluate_reconstruction(const std::filesystem::path& model_dir,
                                               const dataset::DatasetManifest& manifest, const std::string& split,
                                               const EvalOptions& options);
metrics::MetricsReport evaluate_engine(const Engine& engine, const dataset::DatasetManifest& manifest,
                                       const std::string& split, const EvalOptions& options);

/// MSE/PSNR/SSIM of predicting the train-split mean image for every image of `split`.
metrics::MetricsReport mean_image_baseline(const dataset::DatasetManifest& manifest, const std::string& split,
                                           int resolution, std::size_t limit = 0);

struct AblationVariant {
  std::string name;
  bool staged = true;            // stage-1 codec training before the diffusion stage
  bool freeze_encoder = true;    // encoder frozen during the diffusion stage
  bool random_partition = true;  // element dropout cells from another image
  bool operator==(const AblationVariant&) const = default;
};

struct AblationPlan {
  PipelineConfig base;
  std::vector<AblationVariant> variants;
  std::vector<double> beta_ladder;  // partition rows; empty skips them
  std::filesystem::path out;        // one model dir per variant below this
  EvalOptions eval;
  std::size_t train_limit = 0;
  bool reuse = true;  // keep finished variant checkpoints
};

struct AblationRow {
  std::string name;
  AblationVariant variant;
  double beta = 0.0;           // partition rows
  double iou_vs_voronoi = 0.0;
  double dropped_fraction = 0.0;
  metrics::MetricsReport report;
  bool partition_row = false;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  bool iou_monotone = true;  // over the beta rows, in ladder order
};

/// Standard variants: staged/frozen/random partition plus one change each.
std::vector<AblationVariant> default_variants();

/// Trains every variant on the manifest's train split and evaluates it.
AblationTable run_ablation(const dataset::DatasetManifest& manifest, const AblationPlan& plan,
                           const std::function<void(const std::string&)>& log = {});

/// Partition statistics of the beta ladder on a split: mean IoU against the
/// grid Voronoi tiling (with centroid adjustment off) and the dropped share.
std::vector<AblationRow> beta_ladder_rows(const dataset::DatasetManifest& manifest, const std::string& split,
                                          const PipelineConfig& base, const std::vector<double>& ladder,
                                          std::size_t limit);

nlohmann::json ablation_to_json(const AblationTable& table);
std::string ablation_to_markdown(const AblationTable& table);

}  // namespace elemedit
