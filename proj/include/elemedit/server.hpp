#pragma once

// HTTP API over an Engine: sessions hold a source image, its partition and
// element set, and the accumulated edit script.
//
// Routes (JSON bodies, schema-versioned; images are PNG):
//   GET    /health
//   POST   /session                  PNG body or {"image_png": base64}
//   GET    /session/{id}
//   DELETE /session/{id}
//   POST   /session/{id}/edit        elemedit.script/1 delta
//   GET    /session/{id}/script
//   PUT    /session/{id}/script      replaces the history, replayed from the initial encode
//   GET    /session/{id}/elements    elemedit.elements/1
//   GET    /session/{id}/overlay     PNG
//   POST   /session/{id}/decode      {prompt, seed, steps, guidance} -> PNG
//   GET    /session/{id}/image       last decoded PNG

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include "json.hpp"

#include "elemedit/editing.hpp"
#include "elemedit/pipeline.hpp"
#include "elemedit/queue.hpp"

namespace httplib {
class Server;
}

namespace elemedit::server {

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class QueueFull : public std::runtime_error {
 public:
  QueueFull() : std::runtime_error("inference queue is full") {}
};

/// Single worker thread running submitted jobs in FIFO order.
class InferenceQueue {
 public:
  explicit InferenceQueue(std::size_t capacity);
  ~InferenceQueue();
  InferenceQueue(const InferenceQueue&) = delete;
  InferenceQueue& operator=(const InferenceQueue&) = delete;

  /// Throws QueueFull when `capacity` jobs are already waiting.
  template <class F>
  auto submit(F&& fn) -> std::future<decltype(fn())> {
    using R = decltype(fn());
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    auto fut = task->get_future();
    if (!jobs_.try_push([task] { (*task)(); })) throw QueueFull();
    return fut;
  }

  [[nodiscard]] std::size_t waiting() const { return jobs_.size(); }

 private:
  BoundedQueue<std::function<void()>> jobs_;
  std::thread worker_;
};

struct SessionState {
  std::string id;
  Image source;  // at the model resolution
  partition::Partition partition;
  ElementSet initial;
  ElementSet current;
  editing::EditScript script;
  std::vector<std::uint8_t> last_decoded;  // PNG
  std::uint64_t seed = 0;
};

struct ServiceOptions {
  std::size_t queue_capacity = 8;
  std::size_t max_sessions = 1024;
  std::filesystem::path snapshot_dir;  // empty: no snapshots
};

class Service {
 public:
  /// `engine` may be null: the API answers, model-backed routes return 503.
  Service(std::shared_ptr<const Engine> engine, ServiceOptions options = {});
  ~Service();

  Response health() const;
  Response create_session(const std::string& body, const std::string& content_type);
  Response get_session(const std::string& id);
  Response delete_session(const std::string& id);
  Response edit(const std::string& id, const std::string& body);
  Response get_script(const std::string& id);
  Response put_script(const std::string& id, const std::string& body);
  Response elements(const std::string& id);
  Response overlay(const std::string& id);
  Response decode(const std::string& id, const std::string& body);
  Response last_image(const std::string& id);

  /// Copy of a session's state (tests and snapshots).
  std::optional<SessionState> state(const std::string& id);

  /// One elemedit.session-snapshot/1 file per session.
  void save_snapshots(const std::filesystem::path& dir);
  /// Rebuilds sessions by re-encoding the source and replaying the script; returns the count.
  std::size_t load_snapshots(const std::filesystem::path& dir);

  InferenceQueue& queue() { return queue_; }

 private:
  struct Session {
    std::mutex mutex;
    SessionState state;
  };
  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<Session> open_session(const Image& image, std::uint64_t seed, const std::string& id);
  /// Compose ops may name a palette session ("source_session") instead of
  /// carrying the elements; this inlines that session's current set.
  nlohmann::json resolve_compose_sources(nlohmann::json script);

  std::shared_ptr<const Engine> engine_;
  ServiceOptions options_;
  InferenceQueue queue_;
  std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> counter_{0};
  std::uint64_t salt_;
};

/// Binds the Service routes onto an httplib server.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool run();
  /// Returns once run() accepts connections.
  void wait_until_ready();
  void stop();

 private:
  Service& service_;
  std::unique_ptr<httplib::Server> http_;
};

nlohmann::json geometry_json(const ElementSet& set);
nlohmann::json error_json(const std::string& code, const std::string& message);

}  // namespace elemedit::server
