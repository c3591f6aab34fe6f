#pragma once

// Engine internals, for code that already links libtorch.

#include <memory>
#include <optional>

#include "elemedit/codec.hpp"
#include "elemedit/diffusion.hpp"
#include "elemedit/pipeline.hpp"

namespace elemedit {

struct Engine::Impl {
  PipelineConfig config;
  std::vector<std::string> words;
  Vocabulary vocab;
  Codec codec;
  std::optional<DiffusionModel> model;
  NoiseSchedule schedule;

  Impl(PipelineConfig cfg, std::vector<std::string> vocabulary, Codec c, std::optional<DiffusionModel> m);
};

/// Wraps in-memory models (put into eval mode) without touching the disk.
std::shared_ptr<Engine> make_engine(const PipelineConfig& config, const std::vector<std::string>& vocabulary,
                                    Codec codec, std::optional<DiffusionModel> model);

}  // namespace elemedit
