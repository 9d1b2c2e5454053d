#include "skyweave/service.hpp"

#include <chrono>
#include <cmath>

namespace skyweave {

using nlohmann::json;

namespace {

struct Target {
  std::string path;
  std::map<std::string, std::string> query;
};

Target split_target(const std::string& t) {
  Target r;
  auto q = t.find('?');
  r.path = t.substr(0, q);
  if (q == std::string::npos) return r;
  std::string rest = t.substr(q + 1);
  std::size_t at = 0;
  while (at <= rest.size()) {
    auto amp = rest.find('&', at);
    std::string kv = rest.substr(at, amp == std::string::npos ? std::string::npos : amp - at);
    auto eq = kv.find('=');
    if (!kv.empty()) r.query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
    if (amp == std::string::npos) break;
    at = amp + 1;
  }
  return r;
}

// Body is either a JSON object or raw FSL text with the name in the query.
json body_object(const std::string& body, const Target& t, const char* text_key) {
  auto first = body.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && body[first] == '{') return json::parse(body);
  json j = json::object();
  j[text_key] = body;
  for (auto& [k, v] : t.query) j[k] = v;
  return j;
}

HttpResponse error(int status, const std::string& kind, const std::string& msg) {
  return {status, {{"error", kind}, {"message", msg}}};
}

json diagnostics_json(const std::vector<Diagnostic>& ds) {
  json out = json::array();
  for (auto& d : ds) out.push_back(format(d));
  return out;
}

bool plain_label(const std::string& l) {
  if (l.empty() || l.size() > 64) return false;
  for (char c : l)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '?') return false;
  return true;
}

}  // namespace

MissionService::MissionService(ServiceConfig cfg) : cfg_(std::move(cfg)), world_(cfg_.world) {}

MissionService::~MissionService() {
  if (worker_.joinable()) worker_.join();
}

void MissionService::control(std::function<void()> f) {
  std::lock_guard lk(m_);
  controls_.push_back(std::move(f));
}

int MissionService::subscribe(Sink s) {
  std::lock_guard lk(subs_m_);
  subs_[next_sub_] = std::move(s);
  return next_sub_++;
}

void MissionService::unsubscribe(int id) {
  std::lock_guard lk(subs_m_);
  subs_.erase(id);
}

void MissionService::publish(const std::string& type, json payload) {
  std::string frame = json{{"type", type}, {"payload", std::move(payload)}}.dump();
  std::lock_guard lk(subs_m_);
  for (auto& [_, s] : subs_) s(frame);
}

void MissionService::wait_idle() {
  std::unique_lock lk(m_);
  idle_cv_.wait(lk, [&] { return !busy_; });
}

HttpResponse MissionService::handle(const std::string& method, const std::string& target, const std::string& body) {
  Target t = split_target(target);
  try {
    if (method == "POST" && t.path == "/spec") return post_spec(body.empty() ? "" : body_object(body, t, "fsl").dump());
    if (method == "POST" && t.path == "/validate") {
      ParseResult pr = parse(mission_text(cfg_.world, body_object(body, t, "fsl").value("fsl", std::string())));
      return {200, {{"ok", pr.ok()}, {"diagnostics", diagnostics_json(pr.diagnostics)}}};
    }
    if (method == "POST" && t.path == "/module") return post_module(body);
    if (method == "POST" && t.path == "/update") return post_update(body_object(body, t, "fsl").dump());
    if (method == "POST" && t.path == "/hotswap") return post_hotswap();
    if (method == "POST" && t.path.rfind("/command/", 0) == 0) return post_command(t.path.substr(9));
    if (method == "GET" && t.path == "/state") return get_state();
    if (method == "GET" && t.path.rfind("/runs/", 0) == 0) return get_run(t.path.substr(6));
  } catch (const json::exception& e) {
    return error(400, "BadRequest", e.what());
  }
  return error(404, "NotFound", method + " " + t.path);
}

HttpResponse MissionService::post_spec(const std::string& body) {
  if (body.empty()) return error(400, "BadRequest", "empty spec");
  json j = json::parse(body);
  std::string fsl = j.at("fsl");
  std::string text = mission_text(cfg_.world, fsl);
  ParseResult pr = parse(text);
  if (!pr.ok()) return {400, {{"error", "InvalidSpec"}, {"diagnostics", diagnostics_json(pr.diagnostics)}}};
  std::string problem = j.value("problem", "");
  if (problem.empty()) {
    if (pr.doc.control_problems.size() != 1) return error(400, "InvalidSpec", "name the control problem to solve");
    problem = pr.doc.control_problems.front().name;
  }
  if (busy_) return error(409, "Busy", "an update is being synthesized");
  ControlProblem p;
  try {
    p = control_problem(pr.doc, problem);
  } catch (const std::exception& e) {
    return error(400, "InvalidSpec", e.what());
  }
  auto t0 = std::chrono::steady_clock::now();
  Verdict v = solve(p);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  SynthMetric metric{problem, v.realizable, ms, v.arena_states, v.controller ? v.controller->lts.num_states() : 0,
                     peak_rss_kb()};
  json summary{{"problem", problem},
               {"realizable", v.realizable},
               {"arena_states", v.arena_states},
               {"wall_ms", ms},
               {"controller_states", metric.controller_states}};
  publish("verdict", summary);
  if (!v.realizable) {
    if (v.witness) summary["witness"] = {{"reason", v.witness->reason}, {"trace", v.witness->trace}};
    return {422, summary};
  }
  std::lock_guard lk(m_);
  int id = ++run_id_;
  summary["run"] = id;
  RunRecord rec;
  rec.scenario = problem;
  rec.seed = cfg_.world.seed;
  rec.synth.push_back(metric);
  rec.controllers.push_back(write_controller(*v.controller));
  runs_[id] = std::move(rec);
  controls_.push_back([this, text, problem, c = *v.controller, doc = std::move(pr.doc)]() mutable {
    if (en_ && runs_.count(run_id_ - 1)) {
      runs_[run_id_ - 1].log = en_->log();
      runs_[run_id_ - 1].final_mode = en_->mode();
    }
    spec_text_ = text;
    problem_ = problem;
    doc_ = std::move(doc);
    controller_ = c;
    ready_.reset();
    // a new mission starts from the configured world
    world_ = World(cfg_.world);
    en_ = std::make_unique<Enactor>(c, world_.bound());
    logged_ = 0;
  });
  return {201, summary};
}

HttpResponse MissionService::post_module(const std::string& body) {
  json m = json::parse(body);
  auto mod = std::make_shared<std::unique_ptr<HybridModule>>();
  try {
    *mod = make_module(m, cfg_.world.grid);
  } catch (const std::exception& e) {
    return error(400, "BadModule", e.what());
  }
  bool bind = m.value("bind", false);
  std::string id = (*mod)->id();
  control([this, mod, bind, id] {
    try {
      world_.upload(std::move(*mod));
      if (en_) en_->uploaded(id);
      if (bind) world_.bind(id);
      publish("event", {{"module", id}, {"uploaded", true}, {"bound", bind}});
    } catch (const SimError& e) {
      publish("event", {{"module", id}, {"error", e.what()}});
    }
  });
  return {202, {{"module", id}}};
}

HttpResponse MissionService::post_update(const std::string& body) {
  json j = json::parse(body);
  std::unique_lock lk(m_);
  if (!doc_ || !controller_ || !en_) return error(409, "NoMission", "no mission is running");
  if (busy_ || ready_ || en_->swap_pending()) return error(409, "Busy", "an update is already pending");
  if (en_->version() > 0) return error(409, "Busy", "this mission has already been updated");
  ParseResult pr = parse(spec_text_ + "\n" + j.value("fsl", std::string()));
  if (!pr.ok()) return {400, {{"error", "InvalidSpec"}, {"diagnostics", diagnostics_json(pr.diagnostics)}}};
  std::string name = j.value("update", j.value("name", std::string()));
  if (name.empty()) {
    if (pr.doc.update_problems.size() != 1) return error(400, "InvalidSpec", "name the update problem");
    name = pr.doc.update_problems.front().name;
  }
  DcuProblem p;
  try {
    p = update_problem(pr.doc, name, *controller_);
  } catch (const std::exception& e) {
    return error(400, "InvalidSpec", e.what());
  }
  ReconfigManifest m;
  if (j.contains("manifest")) {
    m.bind = j["manifest"].value("bind", std::vector<std::string>{});
    m.unbind = j["manifest"].value("unbind", std::vector<std::string>{});
  }
  busy_ = true;
  if (worker_.joinable()) worker_.join();
  worker_ = std::thread(&MissionService::worker_main, this, std::move(p), name, m, en_->version());
  return {202, {{"queued", name}}};
}

void MissionService::worker_main(DcuProblem p, std::string name, ReconfigManifest m, std::uint64_t version) {
  publish("synth-progress", {{"update", name}, {"stage", "solving"}});
  SolveOptions opts;
  int last = -1;
  opts.progress = [&](int it, std::size_t z) {
    if (it == last) return;
    last = it;
    publish("synth-progress", {{"update", name}, {"stage", "iteration"}, {"iteration", it}, {"winning", z}});
  };
  json verdict{{"update", name}};
  std::shared_ptr<const UpdateSolution> sol;
  auto t0 = std::chrono::steady_clock::now();
  try {
    UpdateVerdict v = solve_update(p, opts);
    verdict["realizable"] = v.realizable;
    verdict["arena_states"] = v.arena_states;
    if (v.realizable) {
      publish("synth-progress", {{"update", name}, {"stage", "verifying"}});
      auto rep = verify_update(*v.solution, p);
      verdict["verified"] = rep.ok;
      if (!rep.ok) verdict["diagnostic"] = rep.violations.front();
      if (rep.ok) sol = std::make_shared<const UpdateSolution>(std::move(*v.solution));
    } else {
      verdict["diagnostic"] = "the update problem has no solution";
      if (v.witness) verdict["witness"] = {{"reason", v.witness->reason}, {"trace", v.witness->trace}};
    }
  } catch (const std::exception& e) {
    verdict["realizable"] = false;
    verdict["diagnostic"] = e.what();
  }
  verdict["wall_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  verdict["status"] = sol ? "ready" : "unrealizable";
  {
    std::lock_guard lk(m_);
    if (sol) {
      ready_ = SwapRequest{sol, version, m};
      if (runs_.count(run_id_)) {
        runs_[run_id_].controllers.push_back(write_update(*sol));
        runs_[run_id_].synth.push_back({name, true, verdict["wall_ms"], verdict["arena_states"],
                                        sol->next.lts.num_states(), peak_rss_kb()});
      }
      if (cfg_.auto_swap)
        controls_.push_back([this] {
          if (ready_ && en_ && !en_->swap_pending()) {
            en_->request_swap(*ready_);
            ready_.reset();
          }
        });
    }
    // published under the lock so a client that reacts with /hotswap finds it ready
    publish("verdict", verdict);
    busy_ = false;
  }
  idle_cv_.notify_all();
}

HttpResponse MissionService::post_hotswap() {
  std::lock_guard lk(m_);
  if (!ready_) return error(409, "NotReady", "no update is ready");
  if (!en_ || en_->swap_pending()) return error(409, "Busy", "a swap is already pending");
  en_->request_swap(*ready_);  // takes effect at the next tick boundary
  ready_.reset();
  return {202, {{"hotswap", "requested"}}};
}

HttpResponse MissionService::post_command(const std::string& label) {
  if (!plain_label(label)) return error(400, "BadLabel", label);
  std::lock_guard lk(m_);
  if (!en_) return error(409, "NoMission", "no mission is running");
  en_->post(label);
  return {202, {{"posted", label}}};
}

HttpResponse MissionService::get_state() {
  std::lock_guard lk(m_);
  json j{{"tick", ticks_.load()},
         {"time", world_.time()},
         {"busy", busy_.load()},
         {"ready", ready_.has_value()},
         {"bound", world_.bound()},
         {"telemetry", world_.telemetry()},
         {"run", run_id_}};
  if (en_) {
    j["mode"] = to_string(en_->mode());
    j["problem"] = problem_;
    j["state"] = en_->state();
    j["version"] = en_->version();
    j["swap_pending"] = en_->swap_pending();
    j["fallbacks"] = en_->fallbacks();
  } else {
    j["mode"] = "idle";
  }
  return {200, j};
}

HttpResponse MissionService::get_run(const std::string& id) {
  int n;
  try {
    n = std::stoi(id);
  } catch (...) {
    return error(404, "NotFound", "run " + id);
  }
  std::lock_guard lk(m_);
  auto it = runs_.find(n);
  if (it == runs_.end()) return error(404, "NotFound", "run " + id);
  RunRecord r = it->second;
  if (n == run_id_ && en_) {
    r.log = en_->log();
    r.final_mode = en_->mode();
  }
  return {200, r.to_json()};
}

void MissionService::step() {
  std::lock_guard lk(m_);
  for (auto& f : std::exchange(controls_, {})) f();
  double total = cfg_.dt * cfg_.sim_speed;
  // telemetry at least every 0.1 s of world time
  int parts = std::max(1, static_cast<int>(std::ceil(total / 0.1 - 1e-9)));
  RunRecord* rec = runs_.count(run_id_) ? &runs_[run_id_] : nullptr;
  for (int k = 0; k < parts; ++k) {
    for (auto& ev : world_.step(total / parts)) {
      auto c = world_.cell();
      if (rec) rec->world_log.push_back(std::to_string(ticks_) + " " + ev + " " + (c ? std::to_string(*c) : "-"));
      if (en_) en_->post(ev);
    }
    publish("telemetry", world_.telemetry());
  }
  if (en_) {
    TickOutput out = en_->tick();
    for (auto& cmd : out.commands) {
      if (cmd == dcu_events::kStopOld || cmd == dcu_events::kStartNew) continue;
      if (cmd == dcu_events::kReconfig) {
        if (out.reconfig) {
          try {
            for (auto& u : out.reconfig->unbind) world_.unbind(u);
            for (auto& b : out.reconfig->bind) world_.bind(b);
          } catch (const SimError& e) {
            en_->on_unexpected(cmd, e.what());
          }
        }
        continue;
      }
      if (rec) rec->world_log.push_back(std::to_string(ticks_) + " cmd " + cmd + " -");
      try {
        for (auto& ev : world_.dispatch(cmd)) en_->post(ev);
      } catch (const SimError& e) {
        en_->on_unexpected(cmd, e.what());
      }
    }
    const auto& log = en_->log();
    for (; logged_ < log.size(); ++logged_) {
      auto r = parse_log_line(log[logged_]);
      publish("event", {{"tick", r.tick}, {"dir", r.dir}, {"label", r.label}, {"before", r.before}, {"after", r.after}});
    }
  }
  ++ticks_;
}

}  // namespace skyweave
