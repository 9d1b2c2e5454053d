#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "skyweave/mission.hpp"

namespace skyweave {

struct ServiceConfig {
  std::string bind = "127.0.0.1:8080";
  WorldConfig world;
  double dt = 0.1;  // world seconds per tick before sim_speed
  double sim_speed = 1;
  bool auto_swap = false;  // request the swap as soon as an update is ready
  bool realtime = true;    // pace ticks against the wall clock
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

// Mission state behind the HTTP/WebSocket front end.  Requests never touch
// the world or the enactor directly: they queue control messages that the
// tick loop runs before its next tick.  Update synthesis runs on a worker.
class MissionService {
 public:
  explicit MissionService(ServiceConfig cfg);
  ~MissionService();

  HttpResponse handle(const std::string& method, const std::string& target, const std::string& body);

  // One enactment tick.  Frames go to every subscriber.
  void step();
  std::uint64_t ticks() const { return ticks_; }

  using Sink = std::function<void(const std::string&)>;
  int subscribe(Sink s);
  void unsubscribe(int id);

  // Blocks until the update worker is idle.
  void wait_idle();

 private:
  HttpResponse post_spec(const std::string& body);
  HttpResponse post_module(const std::string& body);
  HttpResponse post_update(const std::string& body);
  HttpResponse post_hotswap();
  HttpResponse post_command(const std::string& label);
  HttpResponse get_state();
  HttpResponse get_run(const std::string& id);
  void publish(const std::string& type, nlohmann::json payload);
  void control(std::function<void()> f);
  void worker_main(DcuProblem p, std::string name, ReconfigManifest m, std::uint64_t version);

  ServiceConfig cfg_;
  mutable std::mutex m_;  // guards everything below except the enactor's own queues
  World world_;
  std::string spec_text_;
  std::string problem_;
  std::optional<Document> doc_;
  std::optional<Controller> controller_;
  std::unique_ptr<Enactor> en_;
  std::size_t logged_ = 0;
  std::vector<std::function<void()>> controls_;
  std::optional<SwapRequest> ready_;
  std::atomic<bool> busy_{false};
  std::thread worker_;
  std::condition_variable idle_cv_;
  std::map<int, RunRecord> runs_;
  int run_id_ = 0;
  std::atomic<std::uint64_t> ticks_{0};

  std::mutex subs_m_;
  std::map<int, Sink> subs_;
  int next_sub_ = 0;
};

// Serves the service over HTTP and WebSocket /stream until stop is set.
// `on_listen` receives the bound port (useful with port 0).
void serve(MissionService& svc, const std::string& bind, const std::atomic<bool>& stop, double tick_seconds,
           bool realtime, const std::function<void(unsigned short)>& on_listen = {});

}  // namespace skyweave
