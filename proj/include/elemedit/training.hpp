#pragma once

// Corpus preparation and the two training stages.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "elemedit/codec.hpp"
#include "elemedit/config.hpp"
#include "elemedit/dataset.hpp"
#include "elemedit/diffusion.hpp"
#include "elemedit/dropout.hpp"

namespace elemedit::training {

/// Non-finite loss; training stops and the message carries the diagnostic.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One split, partitioned and cut into element patches, held in memory.
struct Corpus {
  std::vector<Image> images;  // at the model resolution
  std::vector<std::string> captions;
  std::vector<std::vector<dataset::ShapeSpec>> shapes;
  std::vector<partition::LabelMap> labels;
  std::size_t element_count = 0;
  torch::Tensor pixels;   // [M, 3, H, W] in [-1, 1]
  torch::Tensor patches;  // [M, N, 3, P, P] in [0, 1]
  torch::Tensor spatial;  // [M, N, D_p]
  torch::Tensor valid;    // [M, N]
  torch::Tensor tokens;   // [M, L] caption ids

  [[nodiscard]] std::size_t size() const { return images.size(); }
  [[nodiscard]] PatchTensors patch_batch(const torch::Tensor& index) const;
};

/// Reads the split (limit = 0: all), resizes to the model resolution and
/// partitions every image through the ELEMEDIT_CACHE partition cache.
Corpus prepare_corpus(const dataset::DatasetManifest& manifest, const std::string& split,
                      const PipelineConfig& config, const Vocabulary& vocab, std::size_t limit = 0);

/// Elements of `image` cut along `labels` as encoder inputs: patches [N, 3, P, P], spatial [N, D_p], valid [N].
PatchTensors repool(const Image& image, const partition::LabelMap& labels, std::size_t count,
                    const CodecConfig& config);

using Logger = std::function<void(const std::string&)>;

struct TrainOptions {
  std::filesystem::path out;     // checkpoint directory; empty disables checkpoints
  int checkpoint_every = 0;      // epochs (stage 1) or steps (stage 2); 0 = only at the end
  std::size_t eval_limit = 256;  // images used for the initial/final loss probes
  bool train_encoder = true;     // stage 1 only: false optimizes the decoder alone
  Logger log;
  std::vector<std::string> vocabulary;  // echoed into checkpoints
};

struct Stage1Report {
  double initial_loss = 0.0;  // image-space MSE on [-1, 1] pixels, train probe
  double final_loss = 0.0;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> val_mse;     // unit-range MSE of decode_light on the validation split
  double seconds = 0.0;
};

/// Mean reconstruction loss of the light decoder over the first `limit` images.
double codec_loss(Codec& codec, const Corpus& corpus, std::size_t limit, int batch = 32);

/// Adam with decoupled weight decay on the reconstruction MSE, all elements present.
Stage1Report train_stage1(Codec& codec, const Corpus& train, const Corpus* val, const PipelineConfig& config,
                          const TrainOptions& options);

struct Stage2Batch {
  torch::Tensor z0;             // [B, 3, H, W]
  torch::Tensor tokens;         // [B, L]
  torch::Tensor null_text;      // [B] bool
  torch::Tensor null_elements;  // [B] bool
  PatchTensors patches;         // elements after dropout, [B, N, ...]
  std::vector<std::int64_t> index;
};

/// Draws stage-2 batches: uniform examples, condition dropout, element dropout
/// over masks on a foreign (or, for the ablation, the image's own) partition.
class Stage2Sampler {
 public:
  Stage2Sampler(const Corpus& corpus, const PipelineConfig& config, std::uint64_t seed);
  Stage2Batch next();

 private:
  const Corpus& corpus_;
  PipelineConfig config_;
  std::mt19937_64 rng_;
  dropout::MaskSampler masks_;
};

/// Runs `sampler` on a producer thread; batches arrive in the order they were drawn.
class Prefetcher {
 public:
  Prefetcher(Stage2Sampler& sampler, std::size_t depth, std::size_t total);
  ~Prefetcher();
  Prefetcher(const Prefetcher&) = delete;
  Prefetcher& operator=(const Prefetcher&) = delete;
  Stage2Batch next();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Element context tokens [B, N, D_e + D_p]; no gradient reaches a frozen encoder.
torch::Tensor batch_element_tokens(Codec& codec, const PatchTensors& patches, bool freeze_encoder);

/// One epsilon-prediction loss evaluation (no optimizer step). Throws NumericError on a non-finite loss.
torch::Tensor training_step(DiffusionModel& model, Codec& codec, const Stage2Batch& batch,
                            const NoiseSchedule& schedule, bool freeze_encoder);

struct Stage2Report {
  std::vector<double> loss;  // per step
  double initial_loss = 0.0;
  double seconds = 0.0;
  std::string encoder_digest_before, encoder_digest_after;
};

/// Trains the denoiser; with freeze_encoder = false the encoder is optimized too.
Stage2Report train_stage2(DiffusionModel& model, Codec& codec, const Corpus& train, const PipelineConfig& config,
                          const TrainOptions& options);

/// Saves codec/ (and diffusion/ when given) under `model_dir`.
void save_models(const std::filesystem::path& model_dir, Codec& codec, DiffusionModel* model,
                 const PipelineConfig& config, const std::vector<std::string>& vocabulary, std::int64_t codec_epochs,
                 std::int64_t diffusion_steps, const nlohmann::json& extra = nlohmann::json::object());

/// Writes config.lock.json (config, seed, version, command) into a run directory.
void write_config_lock(const std::filesystem::path& run_dir, const PipelineConfig& config,
                       const std::string& command);

}  // namespace elemedit::training
