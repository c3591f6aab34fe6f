#include "elemedit/pipeline.hpp"

#include <iomanip>
#include <optional>
#include <sstream>

#include "elemedit/cache.hpp"
#include "elemedit/checkpoint.hpp"
#include "elemedit/engine_impl.hpp"
#include "elemedit/training.hpp"

namespace elemedit {

namespace fs = std::filesystem;

Engine::Impl::Impl(PipelineConfig cfg, std::vector<std::string> vocabulary, Codec c, std::optional<DiffusionModel> m)
    : config{std::move(cfg)},
      words{std::move(vocabulary)},
      vocab{words},
      codec{std::move(c)},
      model{std::move(m)},
      schedule{NoiseSchedule::linear(config.diffusion.timesteps, config.diffusion.beta_start,
                                     config.diffusion.beta_end)} {
  codec->eval();
  if (model) (*model)->eval();
}

std::shared_ptr<Engine> make_engine(const PipelineConfig& config, const std::vector<std::string>& vocabulary,
                                    Codec codec, std::optional<DiffusionModel> model) {
  return std::make_shared<Engine>(std::make_unique<Engine::Impl>(config, vocabulary, std::move(codec), std::move(model)));
}

Engine::Engine(std::unique_ptr<Impl> impl) : impl_{std::move(impl)} {}
Engine::~Engine() = default;

std::shared_ptr<Engine> Engine::load(const fs::path& model_dir) {
  auto meta = read_checkpoint_meta(codec_dir(model_dir));
  auto config = meta.config;
  auto words = meta.vocabulary;
  std::optional<DiffusionModel> model;
  if (fs::exists(diffusion_dir(model_dir) / "checkpoint.json")) {
    auto dmeta = read_checkpoint_meta(diffusion_dir(model_dir));
    config = dmeta.config;
    words = dmeta.vocabulary;
    model.emplace(config.diffusion, config.codec, words.size());
    load_checkpoint(diffusion_dir(model_dir), **model);
  }
  Codec codec(config.codec);
  load_checkpoint(codec_dir(model_dir), *codec);
  return make_engine(config, words, std::move(codec), std::move(model));
}

const PipelineConfig& Engine::config() const { return impl_->config; }
const std::vector<std::string>& Engine::vocabulary() const { return impl_->words; }
bool Engine::can_decode() const { return impl_->model.has_value(); }
int Engine::resolution() const { return impl_->config.codec.resolution; }

Image Engine::prepare(const Image& image) const {
  if (image.empty()) throw InputError("empty image");
  const int r = resolution();
  if (image.height == r && image.width == r) return image;
  return resize_bilinear(image, r, r);
}

partition::PartitionResult Engine::partition(const Image& image) const {
  return partition::partition_image(prepare(image), impl_->config.partition);
}

ElementSet Engine::encode(const std::vector<partition::ImageElement>& elements) const {
  return encode_elements(impl_->codec, elements);
}

Image Engine::decode_light(const ElementSet& set) const { return elemedit::decode_light(impl_->codec, set); }

std::vector<Image> Engine::decode_batch(const std::vector<const ElementSet*>& sets,
                                        const std::vector<DecodeRequest>& requests) const {
  if (!impl_->model) throw StateError("no diffusion checkpoint loaded");
  if (sets.size() != requests.size()) throw InputError("one request per element set");
  if (sets.empty()) return {};
  const int steps = requests.front().steps;
  const double w = requests.front().guidance;
  for (const auto& r : requests) {
    if (r.steps != steps || r.guidance != w) throw InputError("batched requests must share steps and guidance");
    if (r.steps < 1 || r.steps > impl_->schedule.timesteps) throw InputError("steps out of range");
    if (r.guidance < 0.0) throw InputError("guidance must be >= 0");
  }
  for (const auto* s : sets)
    if (s->embedding_dim != impl_->config.codec.embed_dim)
      throw InputError("element embeddings have the wrong dimension");
  std::vector<std::string> captions;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : requests) {
    captions.push_back(r.prompt);
    seeds.push_back(r.seed);
  }
  return decode_elements(*impl_->model, impl_->vocab, impl_->schedule, sets, captions, seeds, steps, w,
                         impl_->config.codec.spatial_bands);
}

Image Engine::decode(const ElementSet& set, const DecodeRequest& request) const {
  return decode_batch({&set}, {request}).front();
}

Image Engine::reconstruct(const Image& image, const DecodeRequest& request) const {
  auto parts = partition(image);
  return decode(encode(parts.elements), request);
}

metrics::MetricsReport evaluate_engine(const Engine& engine, const dataset::DatasetManifest& manifest,
                                       const std::string& split, const EvalOptions& options) {
  auto indices = manifest.split_indices(split);
  if (options.limit > 0 && indices.size() > options.limit) indices.resize(options.limit);
  if (indices.empty()) throw InputError("split '" + split + "' has no images");
  const auto& cfg = engine.config();
  const auto count = static_cast<std::size_t>(cfg.partition.grid) * cfg.partition.grid;
  metrics::MetricsAccumulator acc;
  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  for (std::size_t s = 0; s < indices.size(); s += batch) {
    std::vector<Image> refs;
    std::vector<ElementSet> sets;
    std::vector<DecodeRequest> requests;
    for (std::size_t k = s; k < std::min(indices.size(), s + batch); ++k) {
      const auto i = indices[k];
      Image img = engine.prepare(dataset::load_entry_image(manifest, i));
      if (options.path != DecodePath::identity) {
        auto labels = cache::cached_labels(img, cfg.partition);
        sets.push_back(engine.encode(partition::extract_elements(img, labels, count)));
        requests.push_back({manifest.entries[i].caption, options.seed + k, options.steps, options.guidance});
      }
      refs.push_back(std::move(img));
    }
    std::vector<Image> outs;
    if (options.path == DecodePath::identity) {
      outs = refs;
    } else if (options.path == DecodePath::light) {
      for (const auto& set : sets) outs.push_back(engine.decode_light(set));
    } else {
      std::vector<const ElementSet*> ptrs;
      for (const auto& set : sets) ptrs.push_back(&set);
      outs = engine.decode_batch(ptrs, requests);
    }
    for (std::size_t k = 0; k < refs.size(); ++k) acc.add(refs[k], outs[k]);
  }
  const char* path = options.path == DecodePath::diffusion ? "diffusion"
                     : options.path == DecodePath::light   ? "light"
                                                           : "identity";
  nlohmann::json echo{{"config", cfg}, {"path", path},       {"steps", options.steps},
                      {"guidance", options.guidance}, {"seed", options.seed}, {"limit", options.limit}};
  return acc.report(split, echo);
}

metrics::MetricsReport evaluate_reconstruction(const fs::path& model_dir, const dataset::DatasetManifest& manifest,
                                               const std::string& split, const EvalOptions& options) {
  auto engine = Engine::load(model_dir);
  if (options.path == DecodePath::diffusion && !engine->can_decode())
    throw StateError("no diffusion checkpoint in " + model_dir.string());
  return evaluate_engine(*engine, manifest, split, options);
}

metrics::MetricsReport mean_image_baseline(const dataset::DatasetManifest& manifest, const std::string& split,
                                           int resolution, std::size_t limit) {
  auto load = [&](std::size_t i) {
    Image img = dataset::load_entry_image(manifest, i);
    return img.height == resolution && img.width == resolution ? img : resize_bilinear(img, resolution, resolution);
  };
  auto train = manifest.split_indices("train");
  if (train.empty()) throw InputError("no training images for the mean baseline");
  std::vector<double> sum(static_cast<std::size_t>(resolution) * resolution * 3, 0.0);
  for (auto i : train) {
    auto img = load(i);
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += img.data[p];
  }
  Image mean(resolution, resolution);
  for (std::size_t p = 0; p < sum.size(); ++p) mean.data[p] = static_cast<float>(sum[p] / train.size());
  auto indices = manifest.split_indices(split);
  if (limit > 0 && indices.size() > limit) indices.resize(limit);
  metrics::MetricsAccumulator acc;
  for (auto i : indices) acc.add(load(i), mean);
  return acc.report(split, {{"baseline", "train mean image"}, {"resolution", resolution}});
}

std::vector<AblationVariant> default_variants() {
  return {{"staged-frozen", true, true, true},
          {"joint", false, false, true},
          {"staged-unfrozen", true, false, true},
          {"own-partition", true, true, false}};
}

std::vector<AblationRow> beta_ladder_rows(const dataset::DatasetManifest& manifest, const std::string& split,
                                          const PipelineConfig& base, const std::vector<double>& ladder,
                                          std::size_t limit) {
  auto indices = manifest.split_indices(split);
  if (limit > 0 && indices.size() > limit) indices.resize(limit);
  const int res = base.codec.resolution;
  const int g = base.partition.grid;
  const auto count = static_cast<std::size_t>(g) * g;
  const auto voronoi = partition::voronoi_labels(partition::QueryGrid::regular(res, res, g));
  std::vector<AblationRow> rows;
  for (double beta : ladder) {
    auto pc = base.partition;
    pc.beta = beta;
    pc.beta_c = 0.0;
    double iou = 0.0, dropped = 0.0;
    for (auto i : indices) {
      Image img = dataset::load_entry_image(manifest, i);
      if (img.height != res || img.width != res) img = resize_bilinear(img, res, res);
      auto p = partition::partition_image(img, pc).partition;
      iou += partition::mean_iou(p.labels, voronoi, count);
      dropped += p.dropped_fraction;
    }
    AblationRow row;
    std::ostringstream name;
    name << "beta=" << beta;
    row.name = name.str();
    row.beta = beta;
    row.partition_row = true;
    row.iou_vs_voronoi = iou / static_cast<double>(indices.size());
    row.dropped_fraction = dropped / static_cast<double>(indices.size());
    rows.push_back(row);
  }
  return rows;
}

namespace {

bool has_checkpoint(const fs::path& dir) { return fs::exists(dir / "checkpoint.json"); }

}  // namespace

AblationTable run_ablation(const dataset::DatasetManifest& manifest, const AblationPlan& plan,
                           const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  AblationTable table;
  const auto& words = manifest.vocabulary;
  Vocabulary vocab(words);
  const auto base = plan.base;
  training::TrainOptions topts;
  topts.log = log;
  topts.vocabulary = words;

  std::optional<training::Corpus> train, val;
  auto need_data = [&] {
    if (!train) {
      say("preparing corpus");
      train.emplace(training::prepare_corpus(manifest, "train", base, vocab, plan.train_limit));
      val.emplace(training::prepare_corpus(manifest, "val", base, vocab));
    }
  };

  const fs::path stage1 = plan.out / "stage1";
  auto staged_codec = [&] {
    Codec codec(base.codec);
    if (plan.reuse && has_checkpoint(codec_dir(stage1))) {
      const auto meta = read_checkpoint_meta(codec_dir(stage1));
      if (nlohmann::json(meta.config.codec) == nlohmann::json(base.codec) &&
          nlohmann::json(meta.config.partition) == nlohmann::json(base.partition) && meta.config.seed == base.seed) {
        load_checkpoint(codec_dir(stage1), *codec);
        return codec;
      }
    }
    need_data();
    torch::manual_seed(base.seed);
    codec = Codec(base.codec);
    topts.out = stage1;
    auto rep = training::train_stage1(codec, *train, &*val, base, topts);
    say("stage1 done in " + std::to_string(rep.seconds) + " s");
    return codec;
  };

  for (const auto& v : plan.variants) {
    const fs::path dir = plan.out / v.name;
    auto cfg = base;
    cfg.diffusion.freeze_encoder = v.freeze_encoder;
    cfg.diffusion.random_partition = v.random_partition;
    bool done = plan.reuse && has_checkpoint(diffusion_dir(dir)) && has_checkpoint(codec_dir(dir));
    if (done) {
      // a finished run under an identical configuration
      const auto meta = read_checkpoint_meta(diffusion_dir(dir));
      done = meta.progress == cfg.diffusion.steps && nlohmann::json(meta.config) == nlohmann::json(cfg);
    }
    if (!done) {
      say("training variant " + v.name);
      std::optional<Codec> codec;
      if (v.staged) codec.emplace(staged_codec());
      need_data();
      torch::manual_seed(base.seed + 1);
      if (!v.staged) codec.emplace(base.codec);
      DiffusionModel model(cfg.diffusion, cfg.codec, words.size());
      fs::remove_all(dir);
      training::write_config_lock(dir, cfg, "ablate " + v.name);
      topts.out = dir;
      training::train_stage2(model, *codec, *train, cfg, topts);
    }
    AblationRow row;
    row.name = v.name;
    row.variant = v;
    row.report = evaluate_reconstruction(dir, manifest, "val", plan.eval);
    say(v.name + " mse " + std::to_string(row.report.mse) + " psnr " + std::to_string(row.report.psnr));
    table.rows.push_back(row);
  }
  if (!plan.beta_ladder.empty()) {
    auto rows = beta_ladder_rows(manifest, "val", base, plan.beta_ladder, plan.eval.limit);
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].iou_vs_voronoi + 1e-12 < rows[i - 1].iou_vs_voronoi) table.iou_monotone = false;
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }
  return table;
}

nlohmann::json ablation_to_json(const AblationTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json j{{"name", r.name}};
    if (r.partition_row) {
      j["beta"] = r.beta;
      j["iou_vs_voronoi"] = r.iou_vs_voronoi;
      j["dropped_fraction"] = r.dropped_fraction;
    } else {
      j["staged"] = r.variant.staged;
      j["freeze_encoder"] = r.variant.freeze_encoder;
      j["random_partition"] = r.variant.random_partition;
      j["metrics"] = metrics::report_to_json(r.report);
    }
    rows.push_back(j);
  }
  return {{"schema", "elemedit.ablation/1"}, {"rows", rows}, {"iou_monotone", table.iou_monotone}};
}

std::string ablation_to_markdown(const AblationTable& table) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os << "| variant | staged | frozen encoder | random partition | MSE | PSNR | SSIM |\n";
  os << "|---|---|---|---|---|---|---|\n";
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  for (const auto& r : table.rows) {
    if (r.partition_row) continue;
    os << "| " << r.name << " | " << yn(r.variant.staged) << " | " << yn(r.variant.freeze_encoder) << " | "
       << yn(r.variant.random_partition) << " | " << std::setprecision(5) << r.report.mse << " | "
       << std::setprecision(2) << r.report.psnr << " | " << std::setprecision(4) << r.report.ssim << " |\n";
  }
  bool any = false;
  for (const auto& r : table.rows) {
    if (!r.partition_row) continue;
    if (!any) {
      os << "\n| beta | IoU vs Voronoi | dropped fraction |\n|---|---|---|\n";
      any = true;
    }
    os << "| " << r.beta << " | " << std::setprecision(4) << r.iou_vs_voronoi << " | " << r.dropped_fraction
       << " |\n";
  }
  if (any) os << "\nIoU monotone in beta: " << yn(table.iou_monotone) << "\n";
  return os.str();
}

}  // namespace elemedit
