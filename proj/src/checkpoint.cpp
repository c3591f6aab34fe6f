#include "elemedit/checkpoint.hpp"

#include "elemedit/image.hpp"
#include "elemedit/nn.hpp"

namespace elemedit {

namespace fs = std::filesystem;

namespace {
constexpr const char* kSchema = "elemedit.checkpoint/1";
}

nlohmann::json meta_to_json(const CheckpointMeta& m) {
  return {{"schema", kSchema},       {"kind", m.kind},         {"config", m.config},
          {"vocabulary", m.vocabulary}, {"progress", m.progress}, {"weights_sha256", m.weights_sha256},
          {"extra", m.extra}};
}

CheckpointMeta meta_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != kSchema) throw InputError("not an elemedit.checkpoint/1 document");
  CheckpointMeta m;
  m.kind = doc.at("kind").get<std::string>();
  m.config = doc.at("config").get<PipelineConfig>();
  m.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
  m.progress = doc.at("progress").get<std::int64_t>();
  m.weights_sha256 = doc.at("weights_sha256").get<std::string>();
  m.extra = doc.value("extra", nlohmann::json::object());
  return m;
}

void save_checkpoint(const fs::path& dir, torch::nn::Module& module, torch::optim::Optimizer* optimizer,
                     CheckpointMeta meta) {
  fs::create_directories(dir);
  fs::remove(dir / "checkpoint.json");
  {
    torch::serialize::OutputArchive archive;
    module.save(archive);
    archive.save_to((dir / "weights.pt").string());
  }
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive archive;
    optimizer->save(archive);
    archive.save_to((dir / "optimizer.pt").string());
  } else {
    fs::remove(dir / "optimizer.pt");
  }
  meta.weights_sha256 = nn::parameter_digest(module);
  write_text(dir / "checkpoint.json", meta_to_json(meta).dump(2));
}

CheckpointMeta read_checkpoint_meta(const fs::path& dir) {
  const auto header = dir / "checkpoint.json";
  if (!fs::exists(header) || !fs::exists(dir / "weights.pt"))
    throw StateError("no checkpoint at " + dir.string());
  try {
    return meta_from_json(nlohmann::json::parse(read_text(header)));
  } catch (const nlohmann::json::exception& e) {
    throw StateError("unreadable checkpoint header " + header.string() + ": " + e.what());
  }
}

void load_checkpoint(const fs::path& dir, torch::nn::Module& module, torch::optim::Optimizer* optimizer) {
  auto meta = read_checkpoint_meta(dir);
  {
    torch::serialize::InputArchive archive;
    archive.load_from((dir / "weights.pt").string());
    module.load(archive);
  }
  if (nn::parameter_digest(module) != meta.weights_sha256)
    throw StateError("weight digest mismatch in " + dir.string());
  if (optimizer != nullptr && fs::exists(dir / "optimizer.pt")) {
    torch::serialize::InputArchive archive;
    archive.load_from((dir / "optimizer.pt").string());
    optimizer->load(archive);
  }
}

fs::path codec_dir(const fs::path& model_dir) { return model_dir / "codec"; }
fs::path diffusion_dir(const fs::path& model_dir) { return model_dir / "diffusion"; }

}  // namespace elemedit
