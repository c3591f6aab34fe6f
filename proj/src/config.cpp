#include "elemedit/config.hpp"

#include "elemedit/image.hpp"

namespace elemedit {

namespace {

template <class T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

void CodecConfig::validate() const {
  if (resolution <= 0 || patch <= 0 || embed_dim <= 0 || spatial_bands <= 0) throw InputError("codec sizes must be positive");
  if (query_grid <= 0 || resolution % query_grid != 0) throw InputError("query_grid must divide resolution");
  if (decoder_width % decoder_heads != 0) throw InputError("decoder_width must be a multiple of decoder_heads");
  if (patch % 4 != 0) throw InputError("patch must be a multiple of 4");
  if (epochs <= 0 || batch <= 0) throw InputError("epochs and batch must be positive");
}

void DiffusionConfig::validate() const {
  if (channel_mult.empty()) throw InputError("channel_mult must not be empty");
  const int down = 1 << (channel_mult.size() - 1);
  if (resolution % down != 0) throw InputError("resolution must be divisible by the UNet downsampling factor");
  for (int l : attention_levels)
    if (l < 0 || l >= static_cast<int>(channel_mult.size())) throw InputError("attention level out of range");
  if (element_map_channels < 0) throw InputError("element_map_channels must be non-negative");
  if (base_channels % 8 != 0) throw InputError("base_channels must be a multiple of 8 (group norm)");
  if (timesteps <= 0 || !(beta_start > 0) || !(beta_end < 1) || beta_start > beta_end) throw InputError("bad noise schedule");
  if (element_dropout < 0 || element_dropout > 1) throw InputError("element_dropout must be in [0, 1]");
  if (sample_steps <= 0 || sample_steps > timesteps) throw InputError("sample_steps must be in [1, timesteps]");
  if (guidance < 0) throw InputError("guidance must be non-negative");
  if (batch <= 0 || steps < 0) throw InputError("batch must be positive");
}

void PipelineConfig::validate() const {
  codec.validate();
  diffusion.validate();
  if (codec.resolution != diffusion.resolution) throw InputError("codec and diffusion resolution differ");
  if (partition.grid <= 0 || codec.resolution % partition.grid != 0) throw InputError("grid must divide resolution");
}

void to_json(nlohmann::json& j, const CodecConfig& c) {
  j = {{"resolution", c.resolution},
       {"patch", c.patch},
       {"embed_dim", c.embed_dim},
       {"spatial_bands", c.spatial_bands},
       {"encoder_channels", c.encoder_channels},
       {"decoder_width", c.decoder_width},
       {"decoder_heads", c.decoder_heads},
       {"decoder_blocks", c.decoder_blocks},
       {"query_grid", c.query_grid},
       {"query_bands", c.query_bands},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"betas", {c.beta1, c.beta2}},
       {"epochs", c.epochs},
       {"batch", c.batch}};
}

void from_json(const nlohmann::json& j, CodecConfig& c) {
  read(j, "resolution", c.resolution);
  read(j, "patch", c.patch);
  read(j, "embed_dim", c.embed_dim);
  read(j, "spatial_bands", c.spatial_bands);
  read(j, "encoder_channels", c.encoder_channels);
  read(j, "decoder_width", c.decoder_width);
  read(j, "decoder_heads", c.decoder_heads);
  read(j, "decoder_blocks", c.decoder_blocks);
  read(j, "query_grid", c.query_grid);
  read(j, "query_bands", c.query_bands);
  read(j, "lr", c.lr);
  read(j, "weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  read(j, "epochs", c.epochs);
  read(j, "batch", c.batch);
}

void to_json(nlohmann::json& j, const DiffusionConfig& c) {
  j = {{"resolution", c.resolution},
       {"base_channels", c.base_channels},
       {"channel_mult", c.channel_mult},
       {"attention_levels", c.attention_levels},
       {"heads", c.heads},
       {"context_dim", c.context_dim},
       {"element_map_channels", c.element_map_channels},
       {"text_max_len", c.text_max_len},
       {"timesteps", c.timesteps},
       {"beta_start", c.beta_start},
       {"beta_end", c.beta_end},
       {"condition_dropout", c.condition_dropout},
       {"element_dropout", c.element_dropout},
       {"random_partition", c.random_partition},
       {"mask_area", {c.mask_min_area, c.mask_max_area}},
       {"freeze_encoder", c.freeze_encoder},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"betas", {c.beta1, c.beta2}},
       {"batch", c.batch},
       {"steps", c.steps},
       {"sample_steps", c.sample_steps},
       {"guidance", c.guidance}};
}

void from_json(const nlohmann::json& j, DiffusionConfig& c) {
  read(j, "resolution", c.resolution);
  read(j, "base_channels", c.base_channels);
  read(j, "channel_mult", c.channel_mult);
  read(j, "attention_levels", c.attention_levels);
  read(j, "heads", c.heads);
  read(j, "context_dim", c.context_dim);
  read(j, "element_map_channels", c.element_map_channels);
  read(j, "text_max_len", c.text_max_len);
  read(j, "timesteps", c.timesteps);
  read(j, "beta_start", c.beta_start);
  read(j, "beta_end", c.beta_end);
  read(j, "condition_dropout", c.condition_dropout);
  read(j, "element_dropout", c.element_dropout);
  read(j, "random_partition", c.random_partition);
  if (j.contains("mask_area")) {
    c.mask_min_area = j.at("mask_area").at(0).get<double>();
    c.mask_max_area = j.at("mask_area").at(1).get<double>();
  }
  read(j, "freeze_encoder", c.freeze_encoder);
  read(j, "lr", c.lr);
  read(j, "weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  read(j, "batch", c.batch);
  read(j, "steps", c.steps);
  read(j, "sample_steps", c.sample_steps);
  read(j, "guidance", c.guidance);
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"schema", "elemedit.config/1"},
       {"partition", c.partition},
       {"codec", c.codec},
       {"diffusion", c.diffusion},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("schema") && j.at("schema") != "elemedit.config/1") throw InputError("not an elemedit.config/1 document");
  read(j, "partition", c.partition);
  read(j, "codec", c.codec);
  read(j, "diffusion", c.diffusion);
  read(j, "seed", c.seed);
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.partition.grid = 8;
  c.codec.resolution = 64;
  c.codec.query_grid = 16;
  c.diffusion.resolution = 64;
  return c;
}

PipelineConfig compact_config() {
  PipelineConfig c;
  c.partition.grid = 8;
  c.codec.resolution = 32;
  c.codec.query_grid = 8;
  c.diffusion.resolution = 32;
  c.diffusion.base_channels = 32;
  // trained from scratch here rather than fine-tuned
  c.diffusion.lr = 2e-4;
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  PipelineConfig c;
  try {
    c = j.get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void save_config(const PipelineConfig& config, const std::filesystem::path& path) {
  write_text(path, nlohmann::json(config).dump(2));
}

}  // namespace elemedit
