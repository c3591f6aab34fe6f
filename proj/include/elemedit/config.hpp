#pragma once

// Model and training configuration, stored as JSON.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "elemedit/dropout.hpp"
#include "elemedit/partition.hpp"

namespace elemedit {

struct CodecConfig {
  int resolution = 64;       // training image size (square)
  int patch = 8;             // canonical patch resolution fed to the encoder
  int embed_dim = 16;        // D_e
  int spatial_bands = 4;     // Fourier bands per spatial scalar, D_p = 8 * bands
  int encoder_channels = 32;
  int decoder_width = 128;
  int decoder_heads = 4;
  int decoder_blocks = 4;
  int query_grid = 16;       // R; each query decodes a (resolution / R)^2 pixel block
  int query_bands = 6;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  int epochs = 30;
  int batch = 16;

  [[nodiscard]] int spatial_dim() const { return 8 * spatial_bands; }
  [[nodiscard]] int token_dim() const { return embed_dim + spatial_dim(); }
  [[nodiscard]] int out_patch() const { return resolution / query_grid; }
  void validate() const;
};

struct DiffusionConfig {
  int resolution = 64;
  int base_channels = 64;
  std::vector<int> channel_mult{1, 2, 2};
  std::vector<int> attention_levels{1, 2};  // levels (0 = full resolution) carrying fused attention
  int heads = 4;
  int context_dim = 64;
  int element_map_channels = 16;  // box-splatted element map fed to the UNet input; 0 disables
  int text_max_len = 20;
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  dropout::ConditionDropout condition_dropout;
  double element_dropout = 0.5;   // share of examples whose elements go through mask dropout
  bool random_partition = true;   // dropout cells come from another image's partition
  double mask_min_area = 0.05;
  double mask_max_area = 0.40;
  bool freeze_encoder = true;
  double lr = 6.4e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch = 16;
  int steps = 4000;
  int sample_steps = 50;
  double guidance = 3.0;
  void validate() const;
};

struct PipelineConfig {
  partition::PartitionConfig partition;
  CodecConfig codec;
  DiffusionConfig diffusion;
  std::uint64_t seed = 0;
  void validate() const;
};

void to_json(nlohmann::json& j, const CodecConfig& c);
void from_json(const nlohmann::json& j, CodecConfig& c);
void to_json(nlohmann::json& j, const DiffusionConfig& c);
void from_json(const nlohmann::json& j, DiffusionConfig& c);
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Desk-scale defaults: 64x64 images, G = 8.
PipelineConfig default_config();

/// Reduced profile used by the acceptance run: 32x32 images, G = 8, UNet width 32.
PipelineConfig compact_config();

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

}  // namespace elemedit
