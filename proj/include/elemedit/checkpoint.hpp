#pragma once

// Checkpoint directories: checkpoint.json (schema elemedit.checkpoint/1,
// config echo, vocabulary, progress, weight digest), weights.pt and
// optionally optimizer.pt.
//
// A model directory holds codec/ and, once stage 2 ran, diffusion/.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "elemedit/config.hpp"

namespace elemedit {

struct CheckpointMeta {
  std::string kind;  // "codec" or "diffusion"
  PipelineConfig config;
  std::vector<std::string> vocabulary;
  std::int64_t progress = 0;  // epochs (codec) or steps (diffusion) completed
  std::string weights_sha256;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json meta_to_json(const CheckpointMeta& meta);
CheckpointMeta meta_from_json(const nlohmann::json& doc);

/// Writes the directory atomically enough for a single writer: files first, checkpoint.json last.
void save_checkpoint(const std::filesystem::path& dir, torch::nn::Module& module, torch::optim::Optimizer* optimizer,
                     CheckpointMeta meta);

/// Throws StateError when the directory or its header is missing.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

/// Loads weights (and the optimizer state when given and present); verifies the digest.
void load_checkpoint(const std::filesystem::path& dir, torch::nn::Module& module,
                     torch::optim::Optimizer* optimizer = nullptr);

std::filesystem::path codec_dir(const std::filesystem::path& model_dir);
std::filesystem::path diffusion_dir(const std::filesystem::path& model_dir);

}  // namespace elemedit
