// elemedit command line: dataset generation, partition, training, editing,
// decoding, evaluation, ablations and the HTTP server.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "elemedit/checkpoint.hpp"
#include "elemedit/codec.hpp"
#include "elemedit/config.hpp"
#include "elemedit/dataset.hpp"
#include "elemedit/editing.hpp"
#include "elemedit/pipeline.hpp"
#include "elemedit/server.hpp"
#include "elemedit/training.hpp"

using namespace elemedit;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

PipelineConfig config_from(const std::string& path, const std::string& profile) {
  if (!path.empty()) return load_config(path);
  if (profile == "compact") return compact_config();
  return default_config();
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

server::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

DecodePath parse_path(const std::string& s) {
  if (s == "diffusion") return DecodePath::diffusion;
  if (s == "light") return DecodePath::light;
  if (s == "identity") return DecodePath::identity;
  throw InputError("unknown decode path " + s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elemedit: editable image elements"};
  app.require_subcommand(1);
  const std::string cmdline = command_line(argc, argv);

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "render the synthetic shapes corpus");
  std::string mk_out;
  std::size_t mk_n = 1000;
  std::uint64_t mk_seed = 0;
  int mk_res = 64;
  double mk_val = 0.1;
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->add_option("--n", mk_n, "number of images")->check(CLI::PositiveNumber);
  mk->add_option("--seed", mk_seed, "generator seed");
  mk->add_option("--resolution", mk_res, "image size")->check(CLI::PositiveNumber);
  mk->add_option("--val-fraction", mk_val, "share of validation images")->check(CLI::Range(0.0, 1.0));

  // partition
  auto* part = app.add_subcommand("partition", "partition an image into elements");
  std::string part_image, part_config, part_out, part_profile = "default";
  part->add_option("--image", part_image)->required()->check(CLI::ExistingFile);
  part->add_option("--config", part_config)->check(CLI::ExistingFile);
  part->add_option("--profile", part_profile)->check(CLI::IsMember({"default", "compact"}));
  part->add_option("--out", part_out)->required();

  // encode
  auto* enc = app.add_subcommand("encode", "partition and encode an image into elements.json");
  std::string enc_image, enc_ckpt, enc_out;
  enc->add_option("--image", enc_image)->required()->check(CLI::ExistingFile);
  enc->add_option("--ckpt", enc_ckpt, "model directory")->required();
  enc->add_option("--out", enc_out, "elements.json path")->required();

  // train-codec
  auto* tc = app.add_subcommand("train-codec", "stage 1: content encoder and light decoder");
  std::string tc_data, tc_config, tc_out, tc_profile = "default";
  int tc_epochs = 0;
  std::size_t tc_limit = 0;
  tc->add_option("--data", tc_data)->required();
  tc->add_option("--config", tc_config)->check(CLI::ExistingFile);
  tc->add_option("--profile", tc_profile)->check(CLI::IsMember({"default", "compact"}));
  tc->add_option("--out", tc_out)->required();
  tc->add_option("--epochs", tc_epochs, "override the configured epoch count");
  tc->add_option("--limit", tc_limit, "use at most this many training images");

  // train-diffusion
  auto* td = app.add_subcommand("train-diffusion", "stage 2: element-conditioned denoiser");
  std::string td_data, td_codec, td_config, td_out, td_profile = "default";
  int td_steps = 0;
  std::size_t td_limit = 0;
  bool td_joint = false;
  td->add_option("--data", td_data)->required();
  td->add_option("--codec", td_codec, "model directory holding codec/ (omit with --joint)");
  td->add_option("--config", td_config)->check(CLI::ExistingFile);
  td->add_option("--profile", td_profile)->check(CLI::IsMember({"default", "compact"}));
  td->add_option("--out", td_out)->required();
  td->add_option("--steps", td_steps, "override the configured step count");
  td->add_option("--limit", td_limit, "use at most this many training images");
  td->add_flag("--joint", td_joint, "train a fresh encoder through the diffusion loss");

  // reconstruct
  auto* rc = app.add_subcommand("reconstruct", "partition, encode and decode an image");
  std::string rc_image, rc_ckpt, rc_prompt, rc_out;
  int rc_steps = 50;
  double rc_guidance = 3.0;
  std::uint64_t rc_seed = 0;
  rc->add_option("--image", rc_image)->required()->check(CLI::ExistingFile);
  rc->add_option("--ckpt", rc_ckpt)->required();
  rc->add_option("--prompt", rc_prompt);
  rc->add_option("--steps", rc_steps);
  rc->add_option("--guidance", rc_guidance);
  rc->add_option("--seed", rc_seed);
  rc->add_option("--out", rc_out)->required();

  // edit
  auto* ed = app.add_subcommand("edit", "apply an edit script to elements.json");
  std::string ed_elements, ed_script, ed_out;
  ed->add_option("--elements", ed_elements)->required()->check(CLI::ExistingFile);
  ed->add_option("--script", ed_script)->required()->check(CLI::ExistingFile);
  ed->add_option("--out", ed_out)->required();

  // decode
  auto* dc = app.add_subcommand("decode", "decode elements.json to an image");
  std::string dc_elements, dc_ckpt, dc_prompt, dc_out;
  int dc_steps = 50;
  double dc_guidance = 3.0;
  std::uint64_t dc_seed = 0;
  bool dc_light = false;
  dc->add_option("--elements", dc_elements)->required()->check(CLI::ExistingFile);
  dc->add_option("--ckpt", dc_ckpt)->required();
  dc->add_option("--prompt", dc_prompt);
  dc->add_option("--steps", dc_steps);
  dc->add_option("--guidance", dc_guidance);
  dc->add_option("--seed", dc_seed);
  dc->add_flag("--light", dc_light, "use the stage-1 light decoder");
  dc->add_option("--out", dc_out)->required();

  // eval
  auto* ev = app.add_subcommand("eval", "reconstruction metrics over a split");
  std::string ev_ckpt, ev_data, ev_split = "val", ev_path = "diffusion", ev_out;
  EvalOptions ev_opts;
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val"}));
  ev->add_option("--path", ev_path)->check(CLI::IsMember({"diffusion", "light", "identity"}));
  ev->add_option("--steps", ev_opts.steps);
  ev->add_option("--guidance", ev_opts.guidance);
  ev->add_option("--seed", ev_opts.seed);
  ev->add_option("--limit", ev_opts.limit);
  ev->add_option("--out", ev_out, "report JSON path");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and compare the training variants");
  std::string ab_data, ab_config, ab_out, ab_profile = "default";
  std::vector<std::string> ab_variants;
  std::vector<double> ab_ladder{0.0, 8.0, 64.0, 1e6};
  int ab_steps = 0;
  std::size_t ab_limit = 0, ab_eval_limit = 0;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--config", ab_config)->check(CLI::ExistingFile);
  ab->add_option("--profile", ab_profile)->check(CLI::IsMember({"default", "compact"}));
  ab->add_option("--out", ab_out)->required();
  ab->add_option("--variants", ab_variants, "subset of staged-frozen, joint, staged-unfrozen, own-partition");
  ab->add_option("--betas", ab_ladder, "beta ladder for the partition rows");
  ab->add_option("--steps", ab_steps, "override the stage-2 step count");
  ab->add_option("--limit", ab_limit, "training images");
  ab->add_option("--eval-limit", ab_eval_limit, "validation images");

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP API for the interactive editor");
  std::string sv_ckpt, sv_host = "127.0.0.1", sv_snapshots;
  int sv_port = 8080;
  std::size_t sv_queue = 8;
  sv->add_option("--ckpt", sv_ckpt, "model directory");
  sv->add_option("--host", sv_host);
  sv->add_option("--port", sv_port);
  sv->add_option("--queue", sv_queue, "inference queue capacity");
  sv->add_option("--snapshots", sv_snapshots, "restore sessions from and save them to this directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mk) {
      auto m = dataset::build_synthetic_shapes(mk_n, mk_seed, mk_res, mk_out, mk_val);
      std::cout << "wrote " << m.entries.size() << " images to " << mk_out << " (checksum " << m.checksum << ")\n";
    } else if (*part) {
      auto cfg = config_from(part_config, part_profile);
      auto img = load_png(part_image);
      auto res = partition::partition_image(img, cfg.partition);
      training::write_config_lock(part_out, cfg, cmdline);
      write_text(fs::path(part_out) / "partition.json", partition::partition_to_json(res.partition, cfg.partition).dump());
      save_png(partition::render_overlay(img, res.partition), fs::path(part_out) / "overlay.png");
      std::size_t valid = 0;
      for (const auto& e : res.elements) valid += e.valid;
      std::cout << valid << " elements, dropped fraction " << res.partition.dropped_fraction << "\n";
    } else if (*enc) {
      auto engine = Engine::load(enc_ckpt);
      auto res = engine->partition(load_png(enc_image));
      auto set = engine->encode(res.elements);
      fs::path out(enc_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_text(out, elements_to_json(set).dump());
      std::cout << set.valid_count() << " valid elements of " << set.size() << "\n";
    } else if (*tc) {
      auto cfg = config_from(tc_config, tc_profile);
      if (tc_epochs > 0) cfg.codec.epochs = tc_epochs;
      auto manifest = dataset::load_manifest(tc_data);
      Vocabulary vocab(manifest.vocabulary);
      training::write_config_lock(tc_out, cfg, cmdline);
      auto train = training::prepare_corpus(manifest, "train", cfg, vocab, tc_limit);
      auto val = training::prepare_corpus(manifest, "val", cfg, vocab);
      torch::manual_seed(cfg.seed);
      Codec codec(cfg.codec);
      training::TrainOptions opts;
      opts.out = tc_out;
      opts.checkpoint_every = 5;
      opts.log = log_line;
      opts.vocabulary = manifest.vocabulary;
      auto rep = training::train_stage1(codec, train, &val, cfg, opts);
      write_text(fs::path(tc_out) / "stage1_loss.json",
                 nlohmann::json{{"initial_loss", rep.initial_loss}, {"final_loss", rep.final_loss},
                                {"epoch_loss", rep.epoch_loss}, {"val_mse", rep.val_mse}, {"seconds", rep.seconds}}
                     .dump(2));
      std::cout << "stage 1 loss " << rep.initial_loss << " -> " << rep.final_loss << "\n";
    } else if (*td) {
      auto cfg = config_from(td_config, td_profile);
      if (td_steps > 0) cfg.diffusion.steps = td_steps;
      if (td_joint) cfg.diffusion.freeze_encoder = false;
      auto manifest = dataset::load_manifest(td_data);
      Vocabulary vocab(manifest.vocabulary);
      Codec codec(cfg.codec);
      if (!td_joint) {
        if (td_codec.empty()) throw InputError("--codec is required unless --joint is given");
        auto meta = read_checkpoint_meta(codec_dir(td_codec));
        cfg.codec = meta.config.codec;
        cfg.partition = meta.config.partition;
        codec = Codec(cfg.codec);
        load_checkpoint(codec_dir(td_codec), *codec);
      }
      training::write_config_lock(td_out, cfg, cmdline);
      auto train = training::prepare_corpus(manifest, "train", cfg, vocab, td_limit);
      torch::manual_seed(cfg.seed + 1);
      DiffusionModel model(cfg.diffusion, cfg.codec, manifest.vocabulary.size());
      training::TrainOptions opts;
      opts.out = td_out;
      opts.checkpoint_every = 500;
      opts.log = log_line;
      opts.vocabulary = manifest.vocabulary;
      auto rep = training::train_stage2(model, codec, train, cfg, opts);
      std::cout << "stage 2 loss " << rep.initial_loss << " -> " << rep.loss.back() << "\n";
    } else if (*rc) {
      auto engine = Engine::load(rc_ckpt);
      auto out = engine->reconstruct(load_png(rc_image), {rc_prompt, rc_seed, rc_steps, rc_guidance});
      save_png(out, rc_out);
    } else if (*ed) {
      auto set = elements_from_json(nlohmann::json::parse(read_text(ed_elements)));
      auto script = editing::script_from_json(nlohmann::json::parse(read_text(ed_script)));
      auto res = editing::apply_script(set, script);
      write_text(ed_out, elements_to_json(res.set).dump());
      std::cout << "deleted:";
      for (int i : res.deleted) std::cout << " " << i;
      std::cout << "\n";
    } else if (*dc) {
      auto engine = Engine::load(dc_ckpt);
      auto set = elements_from_json(nlohmann::json::parse(read_text(dc_elements)));
      auto out = dc_light ? engine->decode_light(set) : engine->decode(set, {dc_prompt, dc_seed, dc_steps, dc_guidance});
      save_png(out, dc_out);
    } else if (*ev) {
      ev_opts.path = parse_path(ev_path);
      auto manifest = dataset::load_manifest(ev_data);
      auto rep = evaluate_reconstruction(ev_ckpt, manifest, ev_split, ev_opts);
      auto doc = metrics::report_to_json(rep);
      if (!ev_out.empty()) {
        fs::path out(ev_out);
        if (out.has_parent_path()) training::write_config_lock(out.parent_path(), Engine::load(ev_ckpt)->config(), cmdline);
        write_text(out, doc.dump(2));
      }
      std::cout << doc.dump(2) << "\n";
    } else if (*ab) {
      auto manifest = dataset::load_manifest(ab_data);
      AblationPlan plan;
      plan.base = config_from(ab_config, ab_profile);
      if (ab_steps > 0) plan.base.diffusion.steps = ab_steps;
      auto all = default_variants();
      if (ab_variants.empty()) {
        plan.variants = all;
      } else {
        for (const auto& name : ab_variants) {
          auto it = std::find_if(all.begin(), all.end(), [&](const auto& v) { return v.name == name; });
          if (it == all.end()) throw InputError("unknown variant " + name);
          plan.variants.push_back(*it);
        }
      }
      plan.beta_ladder = ab_ladder;
      plan.out = ab_out;
      plan.train_limit = ab_limit;
      plan.eval.limit = ab_eval_limit;
      training::write_config_lock(ab_out, plan.base, cmdline);
      auto table = run_ablation(manifest, plan, log_line);
      write_text(fs::path(ab_out) / "ablation.json", ablation_to_json(table).dump(2));
      write_text(fs::path(ab_out) / "ablation.md", ablation_to_markdown(table));
      std::cout << ablation_to_markdown(table);
    } else if (*sv) {
      std::shared_ptr<const Engine> engine;
      if (!sv_ckpt.empty()) {
        try {
          engine = Engine::load(sv_ckpt);
        } catch (const StateError& e) {
          log_line(std::string("serving without a model: ") + e.what());
        }
      }
      server::ServiceOptions opts;
      opts.queue_capacity = sv_queue;
      opts.snapshot_dir = sv_snapshots;
      server::Service service(engine, opts);
      if (!sv_snapshots.empty() && fs::exists(sv_snapshots) && engine)
        log_line("restored " + std::to_string(service.load_snapshots(sv_snapshots)) + " sessions");
      server::HttpServer http(service);
      const int port = http.bind(sv_host, sv_port);
      if (port < 0) throw std::runtime_error("cannot bind " + sv_host + ":" + std::to_string(sv_port));
      g_server = &http;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      log_line("listening on http://" + sv_host + ":" + std::to_string(port));
      http.run();
      g_server = nullptr;
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
