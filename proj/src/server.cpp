#include "elemedit/server.hpp"

#include <cstdio>
#include <random>

#include "httplib.h"

namespace elemedit::server {

namespace fs = std::filesystem;

namespace {

Response json_response(int status, const nlohmann::json& body) { return {status, "application/json", body.dump()}; }

Response error_response(int status, const std::string& code, const std::string& message) {
  return json_response(status, error_json(code, message));
}

Response png_response(const std::vector<std::uint8_t>& png) {
  return {200, "image/png", std::string(png.begin(), png.end())};
}

Response not_found(const std::string& id) { return error_response(404, "unknown_session", "no session " + id); }

Response busy() { return error_response(429, "queue_full", "inference queue is full, retry later"); }

std::string png_base64(const Image& image) { return base64_encode(encode_png(image)); }

nlohmann::json session_json(const SessionState& s, int resolution) {
  return {{"schema", "elemedit.session/1"},
          {"session_id", s.id},
          {"resolution", resolution},
          {"element_count", s.current.size()},
          {"elements", geometry_json(s.current)},
          {"dropped_fraction", s.partition.dropped_fraction},
          {"script_length", s.script.ops.size()},
          {"seed", s.seed}};
}

}  // namespace

nlohmann::json error_json(const std::string& code, const std::string& message) {
  return {{"schema", "elemedit.error/1"}, {"error", {{"code", code}, {"message", message}}}};
}

nlohmann::json geometry_json(const ElementSet& set) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set[i];
    const auto b = editing::box_of(e.spatial);
    out.push_back({{"id", i},
                   {"valid", e.valid},
                   {"x", e.spatial.x},
                   {"y", e.spatial.y},
                   {"w", e.spatial.w},
                   {"h", e.spatial.h},
                   {"bbox", {b.x0, b.y0, b.x1, b.y1}}});
  }
  return out;
}

InferenceQueue::InferenceQueue(std::size_t capacity) : jobs_{capacity} {
  worker_ = std::thread([this] {
    while (auto job = jobs_.pop()) (*job)();
  });
}

InferenceQueue::~InferenceQueue() {
  jobs_.close();
  if (worker_.joinable()) worker_.join();
}

Service::Service(std::shared_ptr<const Engine> engine, ServiceOptions options)
    : engine_{std::move(engine)}, options_{std::move(options)}, queue_{options_.queue_capacity} {
  std::random_device rd;
  salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

Service::~Service() {
  if (!options_.snapshot_dir.empty()) save_snapshots(options_.snapshot_dir);
}

Response Service::health() const {
  return json_response(200, {{"schema", "elemedit.health/1"},
                             {"model_loaded", engine_ != nullptr},
                             {"decoder_loaded", engine_ != nullptr && engine_->can_decode()},
                             {"resolution", engine_ ? engine_->resolution() : 0},
                             {"version", metrics::version_string()}});
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::Session> Service::open_session(const Image& image, std::uint64_t seed, const std::string& id) {
  auto s = std::make_shared<Session>();
  auto& st = s->state;
  st.id = id;
  st.seed = seed;
  st.source = engine_->prepare(image);
  auto parts = engine_->partition(st.source);
  st.partition = std::move(parts.partition);
  st.initial = engine_->encode(parts.elements);
  st.current = st.initial;
  return s;
}

Response Service::create_session(const std::string& body, const std::string& content_type) {
  std::vector<std::uint8_t> png;
  std::uint64_t seed = 0;
  if (content_type.rfind("application/json", 0) == 0) {
    try {
      auto j = nlohmann::json::parse(body);
      png = base64_decode(j.at("image_png").get<std::string>());
      seed = j.value("seed", std::uint64_t{0});
    } catch (const std::exception& e) {
      return error_response(400, "invalid_request", e.what());
    }
  } else {
    png.assign(body.begin(), body.end());
  }
  Image image;
  try {
    image = decode_png(png);
  } catch (const std::exception& e) {
    return error_response(400, "invalid_image", e.what());
  }
  if (!engine_) return error_response(503, "model_not_loaded", "no model checkpoint loaded");
  {
    std::shared_lock lock(sessions_mutex_);
    if (sessions_.size() >= options_.max_sessions)
      return error_response(429, "too_many_sessions", "session limit reached");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(salt_ ^ (++counter_ * 0x9E3779B97F4A7C15ULL)));
  const std::string id(buf);
  std::shared_ptr<Session> session;
  try {
    session = queue_.submit([&] { return open_session(image, seed, id); }).get();
  } catch (const QueueFull&) {
    return busy();
  }
  auto doc = session_json(session->state, engine_->resolution());
  doc["overlay_png"] = png_base64(partition::render_overlay(session->state.source, session->state.partition));
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[id] = session;
  }
  return json_response(200, doc);
}

Response Service::get_session(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard lock(s->mutex);
  return json_response(200, session_json(s->state, engine_ ? engine_->resolution() : 0));
}

Response Service::delete_session(const std::string& id) {
  std::unique_lock lock(sessions_mutex_);
  if (sessions_.erase(id) == 0) return not_found(id);
  return json_response(200, {{"schema", "elemedit.deleted/1"}, {"session_id", id}});
}

nlohmann::json Service::resolve_compose_sources(nlohmann::json script) {
  if (!script.is_object() || !script.contains("ops") || !script["ops"].is_array()) return script;
  for (auto& op : script["ops"]) {
    if (!op.is_object() || op.value("op", "") != "compose" || !op.contains("source_session")) continue;
    const auto src_id = op["source_session"].get<std::string>();
    auto src = find(src_id);
    if (!src) throw InputError("unknown source session " + src_id);
    ElementSet set;
    {
      std::lock_guard lock(src->mutex);
      set = src->state.current;
    }
    op["source"] = elements_to_json(set);
    op.erase("source_session");
  }
  return script;
}

Response Service::edit(const std::string& id, const std::string& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const std::exception& e) {
    return error_response(400, "invalid_json", e.what());
  }
  editing::EditScript delta;
  try {
    delta = editing::script_from_json(resolve_compose_sources(std::move(doc)));
  } catch (const std::exception& e) {
    return error_response(422, "invalid_script", e.what());
  }
  std::lock_guard lock(s->mutex);
  editing::ScriptResult result;
  try {
    result = editing::apply_script(s->state.current, delta);
  } catch (const std::exception& e) {
    return error_response(422, "invalid_edit", e.what());
  }
  s->state.current = std::move(result.set);
  s->state.script.ops.insert(s->state.script.ops.end(), delta.ops.begin(), delta.ops.end());
  return json_response(200, {{"schema", "elemedit.edit/1"},
                             {"session_id", id},
                             {"elements", geometry_json(s->state.current)},
                             {"deleted", result.deleted},
                             {"touched", result.touched},
                             {"script_length", s->state.script.ops.size()}});
}

Response Service::get_script(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard lock(s->mutex);
  return json_response(200, editing::script_to_json(s->state.script));
}

Response Service::put_script(const std::string& id, const std::string& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const std::exception& e) {
    return error_response(400, "invalid_json", e.what());
  }
  editing::EditScript script;
  try {
    script = editing::script_from_json(resolve_compose_sources(std::move(doc)));
  } catch (const std::exception& e) {
    return error_response(422, "invalid_script", e.what());
  }
  std::lock_guard lock(s->mutex);
  editing::ScriptResult result;
  try {
    result = editing::apply_script(s->state.initial, script);
  } catch (const std::exception& e) {
    return error_response(422, "invalid_edit", e.what());
  }
  s->state.current = std::move(result.set);
  s->state.script = std::move(script);
  auto out = session_json(s->state, engine_ ? engine_->resolution() : 0);
  out["deleted"] = result.deleted;
  return json_response(200, out);
}

Response Service::elements(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard lock(s->mutex);
  return json_response(200, elements_to_json(s->state.current));
}

Response Service::overlay(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard lock(s->mutex);
  return png_response(encode_png(partition::render_overlay(s->state.source, s->state.partition)));
}

Response Service::decode(const std::string& id, const std::string& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  nlohmann::json doc = nlohmann::json::object();
  if (!body.empty()) {
    try {
      doc = nlohmann::json::parse(body);
    } catch (const std::exception& e) {
      return error_response(400, "invalid_json", e.what());
    }
  }
  if (!engine_ || !engine_->can_decode())
    return error_response(503, "checkpoint_missing", "no diffusion checkpoint loaded");
  std::lock_guard lock(s->mutex);
  DecodeRequest req;
  req.seed = s->state.seed;
  try {
    if (!doc.is_object()) throw InputError("decode body must be an object");
    req.prompt = doc.value("prompt", std::string{});
    req.seed = doc.value("seed", req.seed);
    req.steps = doc.value("steps", 50);
    req.guidance = doc.value("guidance", 3.0);
    if (req.steps < 1 || req.steps > engine_->config().diffusion.timesteps)
      throw InputError("steps must be in [1, T]");
    if (!(req.guidance >= 0.0)) throw InputError("guidance must be >= 0");
  } catch (const std::exception& e) {
    return error_response(422, "invalid_request", e.what());
  }
  std::vector<std::uint8_t> png;
  try {
    const ElementSet set = s->state.current;
    png = queue_.submit([&] { return encode_png(engine_->decode(set, req)); }).get();
  } catch (const QueueFull&) {
    return busy();
  } catch (const StateError& e) {
    return error_response(503, "checkpoint_missing", e.what());
  }
  s->state.last_decoded = png;
  return png_response(png);
}

Response Service::last_image(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard lock(s->mutex);
  if (s->state.last_decoded.empty()) return error_response(404, "no_image", "nothing decoded yet");
  return png_response(s->state.last_decoded);
}

std::optional<SessionState> Service::state(const std::string& id) {
  auto s = find(id);
  if (!s) return std::nullopt;
  std::lock_guard lock(s->mutex);
  return s->state;
}

void Service::save_snapshots(const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::shared_ptr<Session>> all;
  {
    std::shared_lock lock(sessions_mutex_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  for (auto& s : all) {
    std::lock_guard lock(s->mutex);
    const auto& st = s->state;
    nlohmann::json doc{{"schema", "elemedit.session-snapshot/1"},
                       {"session_id", st.id},
                       {"seed", st.seed},
                       {"height", st.source.height},
                       {"width", st.source.width},
                       {"source", encode_floats(st.source.data)},
                       {"script", editing::script_to_json(st.script)}};
    write_text(dir / (st.id + ".json"), doc.dump());
  }
}

std::size_t Service::load_snapshots(const fs::path& dir) {
  if (!engine_) throw StateError("cannot restore sessions without a model");
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    auto doc = nlohmann::json::parse(read_text(entry.path()));
    if (doc.value("schema", "") != "elemedit.session-snapshot/1") continue;
    Image src(doc.at("height").get<int>(), doc.at("width").get<int>());
    src.data = decode_floats(doc.at("source").get<std::string>());
    auto s = open_session(src, doc.at("seed").get<std::uint64_t>(), doc.at("session_id").get<std::string>());
    s->state.script = editing::script_from_json(doc.at("script"));
    s->state.current = editing::apply_script(s->state.initial, s->state.script).set;
    std::unique_lock lock(sessions_mutex_);
    sessions_[s->state.id] = s;
    ++n;
  }
  return n;
}

HttpServer::HttpServer(Service& service) : service_{service}, http_{std::make_unique<httplib::Server>()} {
  using Req = httplib::Request;
  using Res = httplib::Response;
  auto send = [](Res& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto wrap = [send](auto fn) {
    return [send, fn](const Req& req, Res& res) {
      try {
        send(res, fn(req));
      } catch (const std::exception& e) {
        send(res, error_response(500, "internal", e.what()));
      }
    };
  };
  auto& s = service_;
  http_->set_payload_max_length(32u << 20);
  http_->Get("/health", wrap([&s](const Req&) { return s.health(); }));
  http_->Post("/session", wrap([&s](const Req& r) { return s.create_session(r.body, r.get_header_value("Content-Type")); }));
  const std::string sid = "/session/([0-9A-Za-z_-]+)";
  http_->Get(sid, wrap([&s](const Req& r) { return s.get_session(r.matches[1]); }));
  http_->Delete(sid, wrap([&s](const Req& r) { return s.delete_session(r.matches[1]); }));
  http_->Post(sid + "/edit", wrap([&s](const Req& r) { return s.edit(r.matches[1], r.body); }));
  http_->Get(sid + "/script", wrap([&s](const Req& r) { return s.get_script(r.matches[1]); }));
  http_->Put(sid + "/script", wrap([&s](const Req& r) { return s.put_script(r.matches[1], r.body); }));
  http_->Get(sid + "/elements", wrap([&s](const Req& r) { return s.elements(r.matches[1]); }));
  http_->Get(sid + "/overlay", wrap([&s](const Req& r) { return s.overlay(r.matches[1]); }));
  http_->Post(sid + "/decode", wrap([&s](const Req& r) { return s.decode(r.matches[1], r.body); }));
  http_->Get(sid + "/image", wrap([&s](const Req& r) { return s.last_image(r.matches[1]); }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  return http_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::run() { return http_->listen_after_bind(); }

void HttpServer::wait_until_ready() { http_->wait_until_ready(); }

void HttpServer::stop() {
  if (http_->is_running()) http_->stop();
}

}  // namespace elemedit::server
