#include "elemedit/training.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "elemedit/cache.hpp"
#include "elemedit/checkpoint.hpp"
#include "elemedit/metrics.hpp"
#include "elemedit/nn.hpp"
#include "elemedit/queue.hpp"

namespace elemedit::training {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

void check_finite(const torch::Tensor& loss, const std::string& where) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite loss (" << v << ") at " << where;
    throw NumericError(os.str());
  }
}

torch::optim::AdamW make_adamw(std::vector<torch::Tensor> params, double lr, double wd, double b1, double b2) {
  return torch::optim::AdamW(std::move(params),
                             torch::optim::AdamWOptions(lr).weight_decay(wd).betas({b1, b2}));
}

ElementTensors batch_element_inputs(Codec& codec, const PatchTensors& patches, bool train_encoder) {
  if (train_encoder) return codec->encode_batch(patches);
  torch::NoGradGuard ng;
  return codec->encode_batch(patches);
}

}  // namespace

PatchTensors Corpus::patch_batch(const torch::Tensor& index) const {
  return {patches.index_select(0, index), spatial.index_select(0, index), valid.index_select(0, index)};
}

PatchTensors repool(const Image& image, const partition::LabelMap& labels, std::size_t count,
                    const CodecConfig& config) {
  return patch_tensors(partition::extract_elements(image, labels, count), config);
}

Corpus prepare_corpus(const dataset::DatasetManifest& manifest, const std::string& split,
                      const PipelineConfig& config, const Vocabulary& vocab, std::size_t limit) {
  auto indices = manifest.split_indices(split);
  if (limit > 0 && indices.size() > limit) indices.resize(limit);
  if (indices.empty()) throw InputError("split '" + split + "' has no images");
  const int res = config.codec.resolution;
  const auto count = static_cast<std::size_t>(config.partition.grid) * config.partition.grid;

  Corpus c;
  c.element_count = count;
  std::vector<torch::Tensor> pixels, patches, spatial, valid, tokens;
  for (auto i : indices) {
    Image img = dataset::load_entry_image(manifest, i);
    if (img.height != res || img.width != res) img = resize_bilinear(img, res, res);
    auto labels = cache::cached_labels(img, config.partition);
    auto pt = repool(img, labels, count, config.codec);
    pixels.push_back(nn::image_to_tensor(img));
    patches.push_back(pt.patches);
    spatial.push_back(pt.spatial);
    valid.push_back(pt.valid);
    auto ids = vocab.encode(manifest.entries[i].caption, config.diffusion.text_max_len);
    tokens.push_back(torch::tensor(ids, torch::kInt64));
    c.images.push_back(std::move(img));
    c.captions.push_back(manifest.entries[i].caption);
    c.shapes.push_back(manifest.entries[i].shapes);
    c.labels.push_back(std::move(labels));
  }
  c.pixels = torch::stack(pixels);
  c.patches = torch::stack(patches);
  c.spatial = torch::stack(spatial);
  c.valid = torch::stack(valid);
  c.tokens = torch::stack(tokens);
  return c;
}

double codec_loss(Codec& codec, const Corpus& corpus, std::size_t limit, int batch) {
  torch::NoGradGuard ng;
  const bool was_training = codec->is_training();
  codec->eval();
  const auto n = static_cast<int64_t>(limit == 0 ? corpus.size() : std::min(limit, corpus.size()));
  double total = 0.0;
  for (int64_t s = 0; s < n; s += batch) {
    auto idx = torch::arange(s, std::min<int64_t>(n, s + batch), torch::kInt64);
    auto out = codec->decode(codec->encode_batch(corpus.patch_batch(idx)));
    total += torch::mse_loss(out, corpus.pixels.index_select(0, idx), torch::Reduction::Sum).item<double>();
  }
  codec->train(was_training);
  return total / static_cast<double>(corpus.pixels[0].numel() * n);
}

Stage1Report train_stage1(Codec& codec, const Corpus& train, const Corpus* val, const PipelineConfig& config,
                          const TrainOptions& options) {
  const auto& cc = config.codec;
  const auto start = Clock::now();
  Stage1Report report;
  report.initial_loss = codec_loss(codec, train, options.eval_limit);
  say(options.log, "stage1 initial loss " + std::to_string(report.initial_loss));

  auto opt = make_adamw(options.train_encoder ? codec->parameters() : codec->decoder->parameters(), cc.lr,
                        cc.weight_decay, cc.beta1, cc.beta2);
  std::mt19937_64 rng(config.seed * 7919 + 1);
  std::vector<int64_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  codec->train();
  for (int epoch = 1; epoch <= cc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cc.batch)) {
      const auto e = std::min(order.size(), s + static_cast<std::size_t>(cc.batch));
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + static_cast<std::ptrdiff_t>(s),
                                                    order.begin() + static_cast<std::ptrdiff_t>(e)),
                               torch::kInt64);
      auto elements = batch_element_inputs(codec, train.patch_batch(idx), options.train_encoder);
      auto out = codec->decode(elements);
      auto loss = torch::mse_loss(out, train.pixels.index_select(0, idx));
      check_finite(loss, "stage 1 epoch " + std::to_string(epoch) + " batch " + std::to_string(batches));
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += loss.item<double>();
      ++batches;
    }
    report.epoch_loss.push_back(sum / batches);
    std::string line = "stage1 epoch " + std::to_string(epoch) + " loss " + std::to_string(report.epoch_loss.back());
    if (val != nullptr) {
      // [-1, 1] pixel MSE is four times the unit-range MSE
      report.val_mse.push_back(codec_loss(codec, *val, 0) / 4.0);
      line += " val_mse " + std::to_string(report.val_mse.back());
    }
    say(options.log, line + " (" + std::to_string(seconds_since(start)) + " s)");
    const bool last = epoch == cc.epochs;
    if (!options.out.empty() && (last || (options.checkpoint_every > 0 && epoch % options.checkpoint_every == 0))) {
      CheckpointMeta meta{"codec", config, options.vocabulary, epoch, "", {}};
      meta.extra = {{"epoch_loss", report.epoch_loss}, {"val_mse", report.val_mse},
                    {"initial_loss", report.initial_loss}, {"seconds", seconds_since(start)}};
      save_checkpoint(codec_dir(options.out), *codec, &opt, meta);
    }
  }
  codec->eval();
  report.final_loss = codec_loss(codec, train, options.eval_limit);
  report.seconds = seconds_since(start);
  return report;
}

Stage2Sampler::Stage2Sampler(const Corpus& corpus, const PipelineConfig& config, std::uint64_t seed)
    : corpus_{corpus},
      config_{config},
      rng_{seed},
      masks_{config.diffusion.mask_min_area, config.diffusion.mask_max_area} {}

Stage2Batch Stage2Sampler::next() {
  const auto& dc = config_.diffusion;
  const int b = dc.batch;
  const int res = config_.codec.resolution;
  const auto n = corpus_.element_count;
  std::uniform_int_distribution<std::size_t> pick(0, corpus_.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  Stage2Batch out;
  std::vector<uint8_t> null_text, null_elem;
  std::vector<torch::Tensor> patches, spatial, valid;
  for (int k = 0; k < b; ++k) {
    const auto i = pick(rng_);
    out.index.push_back(static_cast<int64_t>(i));
    auto d = dropout::sample_condition_dropout(dc.condition_dropout, rng_);
    null_text.push_back(d.null_text);
    null_elem.push_back(d.null_elements);
    const auto ii = static_cast<int64_t>(i);
    PatchTensors pt{corpus_.patches[ii], corpus_.spatial[ii], corpus_.valid[ii]};
    if (!d.null_elements && u(rng_) < dc.element_dropout) {
      const partition::LabelMap* labels = &corpus_.labels[i];
      if (dc.random_partition && corpus_.size() > 1) {
        std::size_t j = pick(rng_);
        while (j == i) j = pick(rng_);
        labels = &corpus_.labels[j];
        pt = repool(corpus_.images[i], *labels, n, config_.codec);
      } else {
        pt = {pt.patches.clone(), pt.spatial.clone(), pt.valid.clone()};
      }
      auto mask = masks_.sample(res, res, rng_);
      for (int cell : dropout::overlapping_cells(*labels, mask, n)) {
        pt.patches[cell].zero_();
        pt.spatial[cell].zero_();
        pt.valid[cell] = 0.0;
      }
    }
    patches.push_back(pt.patches);
    spatial.push_back(pt.spatial);
    valid.push_back(pt.valid);
  }
  auto idx = torch::tensor(out.index, torch::kInt64);
  out.z0 = corpus_.pixels.index_select(0, idx);
  out.tokens = corpus_.tokens.index_select(0, idx);
  out.null_text = torch::tensor(std::vector<int64_t>(null_text.begin(), null_text.end())).to(torch::kBool);
  out.null_elements = torch::tensor(std::vector<int64_t>(null_elem.begin(), null_elem.end())).to(torch::kBool);
  out.patches = {torch::stack(patches), torch::stack(spatial), torch::stack(valid)};
  return out;
}

struct Prefetcher::State {
  explicit State(std::size_t depth) : queue(depth) {}
  BoundedQueue<Stage2Batch> queue;
  std::thread worker;
  std::exception_ptr error;
};

Prefetcher::Prefetcher(Stage2Sampler& sampler, std::size_t depth, std::size_t total)
    : state_{std::make_unique<State>(depth)} {
  auto* st = state_.get();
  st->worker = std::thread([st, &sampler, total] {
    try {
      for (std::size_t i = 0; i < total; ++i)
        if (!st->queue.push(sampler.next())) break;
    } catch (...) {
      st->error = std::current_exception();
    }
    st->queue.close();
  });
}

Prefetcher::~Prefetcher() {
  state_->queue.close();
  if (state_->worker.joinable()) state_->worker.join();
}

Stage2Batch Prefetcher::next() {
  auto b = state_->queue.pop();
  if (!b) {
    if (state_->worker.joinable()) state_->worker.join();
    if (state_->error) std::rethrow_exception(state_->error);
    throw std::logic_error("prefetcher exhausted");
  }
  return std::move(*b);
}

torch::Tensor batch_element_tokens(Codec& codec, const PatchTensors& patches, bool freeze_encoder) {
  if (freeze_encoder) {
    torch::NoGradGuard ng;
    return element_tokens(codec->encode_batch(patches));
  }
  return element_tokens(codec->encode_batch(patches));
}

torch::Tensor training_step(DiffusionModel& model, Codec& codec, const Stage2Batch& batch,
                            const NoiseSchedule& schedule, bool freeze_encoder) {
  const auto b = batch.z0.size(0);
  auto t = torch::randint(1, schedule.timesteps + 1, {b}, torch::kInt64);
  auto eps = torch::randn_like(batch.z0);
  auto zt = forward_sample(batch.z0, t, eps, schedule);
  auto text = model->text_context(batch.tokens, batch.null_text);
  auto tokens = batch_element_tokens(codec, batch.patches, freeze_encoder);
  auto elems = model->element_context(tokens, batch.null_elements);
  auto map = model->element_map(tokens, batch.null_elements);
  auto loss = torch::mse_loss(model(zt, t, text, elems, map), eps);
  check_finite(loss, "stage 2 step");
  return loss;
}

Stage2Report train_stage2(DiffusionModel& model, Codec& codec, const Corpus& train, const PipelineConfig& config,
                          const TrainOptions& options) {
  const auto& dc = config.diffusion;
  const auto start = Clock::now();
  Stage2Report report;
  const auto schedule = NoiseSchedule::linear(dc.timesteps, dc.beta_start, dc.beta_end);
  report.encoder_digest_before = nn::parameter_digest(*codec->encoder);

  auto params = model->parameters();
  if (!dc.freeze_encoder) {
    auto enc = codec->encoder->parameters();
    params.insert(params.end(), enc.begin(), enc.end());
  }
  for (auto& p : codec->encoder->parameters()) p.set_requires_grad(!dc.freeze_encoder);
  auto opt = make_adamw(params, dc.lr, dc.weight_decay, dc.beta1, dc.beta2);

  Stage2Sampler sampler(train, config, config.seed * 104729 + 2);
  Prefetcher prefetch(sampler, 4, static_cast<std::size_t>(dc.steps));
  model->train();
  if (dc.freeze_encoder)
    codec->eval();
  else
    codec->train();
  double window = 0.0;
  for (int step = 1; step <= dc.steps; ++step) {
    auto batch = prefetch.next();
    torch::Tensor loss;
    try {
      loss = training_step(model, codec, batch, schedule, dc.freeze_encoder);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " " + std::to_string(step));
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
    const double v = loss.item<double>();
    if (step == 1) report.initial_loss = v;
    report.loss.push_back(v);
    window += v;
    if (step % 50 == 0 || step == dc.steps) {
      const int span = step % 50 == 0 ? 50 : step % 50;
      say(options.log, "stage2 step " + std::to_string(step) + " loss " + std::to_string(window / span) + " (" +
                           std::to_string(seconds_since(start)) + " s)");
      window = 0.0;
    }
    const bool last = step == dc.steps;
    if (!options.out.empty() && (last || (options.checkpoint_every > 0 && step % options.checkpoint_every == 0))) {
      CheckpointMeta meta{"diffusion", config, options.vocabulary, step, "", {}};
      meta.extra = {{"initial_loss", report.initial_loss}, {"seconds", seconds_since(start)},
                    {"freeze_encoder", dc.freeze_encoder}, {"random_partition", dc.random_partition}};
      save_checkpoint(diffusion_dir(options.out), *model, &opt, meta);
      if (!dc.freeze_encoder || !fs::exists(codec_dir(options.out) / "checkpoint.json")) {
        CheckpointMeta cm{"codec", config, options.vocabulary, 0, "", {{"trained_in_stage2", !dc.freeze_encoder}}};
        save_checkpoint(codec_dir(options.out), *codec, nullptr, cm);
      }
    }
  }
  for (auto& p : codec->encoder->parameters()) p.set_requires_grad(true);
  model->eval();
  codec->eval();
  report.encoder_digest_after = nn::parameter_digest(*codec->encoder);
  report.seconds = seconds_since(start);
  return report;
}

void save_models(const fs::path& model_dir, Codec& codec, DiffusionModel* model, const PipelineConfig& config,
                 const std::vector<std::string>& vocabulary, std::int64_t codec_epochs, std::int64_t diffusion_steps,
                 const nlohmann::json& extra) {
  save_checkpoint(codec_dir(model_dir), *codec, nullptr, {"codec", config, vocabulary, codec_epochs, "", extra});
  if (model != nullptr)
    save_checkpoint(diffusion_dir(model_dir), **model, nullptr,
                    {"diffusion", config, vocabulary, diffusion_steps, "", extra});
}

void write_config_lock(const fs::path& run_dir, const PipelineConfig& config, const std::string& command) {
  fs::create_directories(run_dir);
  nlohmann::json doc{{"schema", "elemedit.config-lock/1"},
                     {"config", config},
                     {"seed", config.seed},
                     {"version", metrics::version_string()},
                     {"command", command}};
  write_text(run_dir / "config.lock.json", doc.dump(2));
}

}  // namespace elemedit::training
