#include "skyweave/mission.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace skyweave {

using nlohmann::json;
namespace fs = std::filesystem;

long peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("VmHWM:", 0) == 0) return std::stol(line.substr(6));
  return 0;
}

std::string mission_text(const WorldConfig& w, const std::string& fsl) {
  return w.movement ? movement_fsl(w.grid, w.model) + fsl : fsl;
}

bool RunRecord::passed() const {
  for (auto& v : verdicts)
    if (!v.pass) return false;
  return true;
}

std::string RunRecord::event_log() const {
  std::string s;
  for (auto& l : log) s += l + "\n";
  return s;
}

json RunRecord::to_json() const {
  json j{{"scenario", scenario}, {"seed", seed}, {"final_mode", to_string(final_mode)},
         {"log", log},           {"world_log", world_log}, {"controllers", controllers}};
  for (auto& m : synth)
    j["synthesis"].push_back({{"what", m.what},
                              {"realizable", m.realizable},
                              {"wall_ms", m.wall_ms},
                              {"arena_states", m.arena_states},
                              {"controller_states", m.controller_states},
                              {"peak_rss_kb", m.peak_rss_kb}});
  for (auto& v : verdicts) j["verdicts"].push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  return j;
}

std::vector<std::string> trace_of(const std::vector<std::string>& log) {
  std::vector<std::string> t;
  for (auto& l : log) {
    auto r = parse_log_line(l);
    if (r.dir == "in" || r.dir == "out" || r.dir == "swap") t.push_back(r.label);
  }
  return t;
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExprPtr formula_of(const std::string& text, const Document& doc) {
  if (auto* a = doc.assertion(text)) return a->formula;
  auto r = parse("assert safety Q_ = " + text + ".");
  if (r.doc.asserts.empty()) throw std::runtime_error("bad formula: " + text);
  return r.doc.asserts.front().formula;
}

// Enactor log tick of the first record with this label, if any.
std::optional<std::uint64_t> first_tick(const std::vector<std::string>& log, const std::string& label) {
  for (auto& l : log) {
    auto r = parse_log_line(l);
    if (r.label == label && (r.dir == "in" || r.dir == "out" || r.dir == "swap")) return r.tick;
  }
  return std::nullopt;
}

// `formula` is an assert name, inline text, or a list of either.
AssertionResult check_safety(const json& a, const Document& doc, const RunRecord& r) {
  std::vector<std::string> texts;
  if (a.at("formula").is_array())
    texts = a["formula"].get<std::vector<std::string>>();
  else
    texts.push_back(a["formula"]);
  std::string shown;
  for (auto& t : texts) shown += (shown.empty() ? "" : ", ") + t;
  AssertionResult res{a.value("name", "holds " + shown), true, ""};
  std::vector<ScopedSafety> parts;
  for (auto& t : texts) parts.push_back({formula_of(t, doc), a.value("from", ""), a.value("until", "")});
  auto defs = doc.fluent_defs();
  for (auto& f : update_fluents()) defs.push_back(f);
  auto trace = trace_of(r.log);
  std::set<std::string> alpha(trace.begin(), trace.end());
  for (auto& d : defs) {
    alpha.insert(d.init.begin(), d.init.end());
    alpha.insert(d.term.begin(), d.term.end());
  }
  std::set<std::string> atoms;
  for (auto& p : parts) collect_atoms(*p.formula, atoms);
  std::set<std::string> fluent_names;
  for (auto& d : defs) fluent_names.insert(d.name);
  for (auto& x : atoms)
    if (!fluent_names.count(x)) alpha.insert(x);
  for (auto& p : parts) {
    if (!p.arm_on.empty()) alpha.insert(p.arm_on);
    if (!p.disarm_on.empty()) alpha.insert(p.disarm_on);
  }
  Monitor m = compile_monitor(parts, defs, alpha);
  StateId s = m.lts.initial();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    s = m.lts.out(s, *m.lts.label_id(trace[k])).front().target;
    if (m.is_error(s)) {
      res.pass = false;
      res.detail = "violated at event " + std::to_string(k) + " (" + trace[k] + ")";
      return res;
    }
  }
  res.detail = std::to_string(trace.size()) + " events";
  return res;
}

// Window after the first `after` label; the second half of it is the tail.
AssertionResult check_recurrent(const json& a, const RunRecord& r) {
  AssertionResult res{a.value("name", "recurrent"), true, ""};
  auto trace = trace_of(r.log);
  std::size_t start = 0;
  if (a.contains("after")) {
    auto it = std::find(trace.begin(), trace.end(), a["after"].get<std::string>());
    if (it == trace.end()) return {res.name, false, "no " + a["after"].get<std::string>()};
    start = it - trace.begin();
  }
  std::size_t tail = start + (trace.size() - start) / 2;
  std::map<std::string, int> seen;
  for (std::size_t k = tail; k < trace.size(); ++k) seen[trace[k]]++;
  for (auto& l : a.value("labels", std::vector<std::string>{}))
    if (seen[l] < 2) {
      res.pass = false;
      res.detail += l + " seen " + std::to_string(seen[l]) + " times in tail; ";
    }
  if (a.contains("only")) {
    auto only = a["only"].get<std::set<std::string>>();
    std::string prefix = a.value("prefix", "at.");
    for (auto& [l, n] : seen)
      if (l.rfind(prefix, 0) == 0 && !only.count(l)) {
        res.pass = false;
        res.detail += l + " outside the allowed set; ";
      }
  }
  if (res.pass) res.detail = std::to_string(trace.size() - tail) + " events in tail";
  return res;
}

// Iterator cover: between the last reset before the first n.next after
// `after` and that n.next, the cells reached are exactly the region, once each.
AssertionResult check_coverage(const json& a, const WorldConfig& w, const RunRecord& r) {
  std::string region = a.at("region");
  AssertionResult res{a.value("name", "covers " + region), false, ""};
  auto rit = w.grid.regions.find(region);
  if (rit == w.grid.regions.end()) return {res.name, false, "unknown region"};
  std::uint64_t from = 0;
  if (a.contains("after")) {
    auto t = first_tick(r.log, a["after"]);
    if (!t) return {res.name, false, "no " + a["after"].get<std::string>()};
    from = *t;
  }
  std::optional<std::uint64_t> done;
  std::optional<std::uint64_t> last_reset;
  for (auto& l : r.log) {
    auto rec = parse_log_line(l);
    if (rec.dir == "out" && rec.label == "reset") last_reset = rec.tick;
    if (rec.dir == "in" && rec.label == "n.next" && rec.tick >= from) {
      done = rec.tick;
      break;
    }
  }
  if (!done) return {res.name, false, "iteration never finished"};
  // world events of a tick come before its command, so arrivals logged in
  // the reset's own tick belong to the previous round
  std::uint64_t lo = last_reset.value_or(0);
  std::map<int, int> visits;
  for (auto& l : r.world_log) {
    std::istringstream is(l);
    std::uint64_t t;
    std::string ev, cell;
    is >> t >> ev >> cell;
    if (t < lo || (last_reset && t == lo) || t > *done || ev != "at.next") continue;
    visits[std::stoi(cell)]++;
  }
  std::set<int> got;
  for (auto& [c, n] : visits) {
    got.insert(c);
    if (n != 1) res.detail += "cell " + std::to_string(c) + " reached " + std::to_string(n) + " times; ";
  }
  if (got != rit->second) res.detail += "reached " + std::to_string(got.size()) + " of " + std::to_string(rit->second.size()) + " cells; ";
  res.pass = res.detail.empty();
  if (res.pass) res.detail = std::to_string(got.size()) + " cells, ticks " + std::to_string(lo) + ".." + std::to_string(*done);
  return res;
}

}  // namespace

AssertionResult check_assertion(const json& a, const Document& doc, const RunRecord& r) {
  std::string kind = a.at("kind");
  if (kind == "safety") return check_safety(a, doc, r);
  if (kind == "recurrent") return check_recurrent(a, r);
  if (kind == "mode") {
    std::string want = a.at("is");
    return {a.value("name", "mode " + want), want == to_string(r.final_mode), to_string(r.final_mode)};
  }
  if (kind == "count") {
    std::string dir = a.value("dir", "fallback");
    std::string label = a.value("label", "");
    long n = 0;
    for (auto& l : r.log) {
      auto rec = parse_log_line(l);
      if (rec.dir == dir && (label.empty() || rec.label == label)) ++n;
    }
    long want = a.at("equals");
    return {a.value("name", dir + " count"), n == want, std::to_string(n)};
  }
  throw std::runtime_error("unknown assertion kind '" + kind + "'");
}

namespace {

struct PendingUpdate {
  std::uint64_t ready_tick;
  std::shared_ptr<const UpdateSolution> sol;
  std::uint64_t version;
  ReconfigManifest manifest;
};

ReconfigManifest manifest_of(const json& j) {
  ReconfigManifest m;
  m.bind = j.value("bind", std::vector<std::string>{});
  m.unbind = j.value("unbind", std::vector<std::string>{});
  return m;
}

struct Setup {
  json sc;
  WorldConfig wc;
  ParseResult pr;
};

Setup load_setup(const fs::path& root, const RunOptions& opts) {
  Setup st;
  try {
    st.sc = json::parse(slurp(root / "scenario.json"));
    json wj = json::parse(slurp(root / st.sc.value("world", "world.json")));
    if (opts.seed) wj["seed"] = *opts.seed;
    st.wc = world_from_json(wj);
    st.pr = parse(mission_text(st.wc, slurp(root / st.sc.at("spec").get<std::string>())));
  } catch (const std::exception& e) {
    throw ScenarioError(0, e.what());
  }
  if (!st.pr.ok()) throw ScenarioError(0, format(st.pr.diagnostics.front()));
  return st;
}

}  // namespace

RunRecord run_scenario(const std::string& dir, const RunOptions& opts) {
  fs::path root(dir);
  if (fs::is_regular_file(root)) root = root.parent_path();
  Setup st = load_setup(root, opts);
  const json& sc = st.sc;
  const WorldConfig& wc = st.wc;
  const ParseResult& pr = st.pr;
  const Document& doc = pr.doc;

  RunRecord rec;
  rec.scenario = sc.value("name", root.filename().string());
  rec.seed = wc.seed;

  auto timed = [&](const std::string& what, auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    auto v = fn();
    SynthMetric m;
    m.what = what;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    m.realizable = v.realizable;
    m.arena_states = v.arena_states;
    m.peak_rss_kb = peak_rss_kb();
    return std::make_pair(std::move(v), m);
  };

  ControlProblem old;
  try {
    old = control_problem(doc, sc.at("problem"));
  } catch (const std::exception& e) {
    throw ScenarioError(0, e.what());
  }
  auto [verdict, metric] = timed(sc.at("problem").get<std::string>(), [&] { return solve(old); });
  if (!verdict.realizable) throw ScenarioError(0, "mission " + sc.at("problem").get<std::string>() + " is unrealizable");
  metric.controller_states = verdict.controller->lts.num_states();
  rec.synth.push_back(metric);
  rec.controllers.push_back(write_controller(*verdict.controller));
  const Controller original = *verdict.controller;

  World world(wc);
  Enactor en(original, world.bound());
  double dt = sc.value("dt", 0.1) * opts.sim_speed;
  long ticks = opts.ticks.value_or(sc.value("ticks", 2000L));
  bool auto_swap = sc.value("auto_swap", true);

  std::vector<json> timeline = sc.value("timeline", std::vector<json>{});
  long prev = -1;
  for (std::size_t i = 0; i < timeline.size(); ++i) {
    long t = timeline[i].at("tick");
    if (t <= prev) throw ScenarioError(i + 1, "timeline ticks must increase");
    prev = t;
  }
  std::optional<PendingUpdate> ready;
  std::size_t next = 0;
  bool updated = false;

  for (long k = 0; k < ticks; ++k) {
    for (; next < timeline.size() && timeline[next].at("tick").get<long>() == k; ++next) {
      const json& act = timeline[next];
      std::size_t step = next + 1;
      try {
        if (act.contains("upload")) {
          auto m = make_module(act["upload"], world.grid());
          std::string id = m->id();
          world.upload(std::move(m));
          en.uploaded(id);
          rec.world_log.push_back(std::to_string(en.tick_index()) + " upload " + id);
        }
        if (act.contains("inject")) en.post(act["inject"].get<std::string>());
        if (act.contains("update")) {
          if (updated) throw ScenarioError(step, "only one update per run");
          std::string name = act["update"];
          DcuProblem p = update_problem(doc, name, original);
          auto [uv, um] = timed(name, [&] { return solve_update(p); });
          if (uv.solution) um.controller_states = uv.solution->next.lts.num_states();
          rec.synth.push_back(um);
          std::string expect = act.value("expect", "realizable");
          bool ok = uv.realizable == (expect == "realizable");
          rec.verdicts.push_back({"update " + name + " " + expect, ok, uv.realizable ? "realizable" : "unrealizable"});
          if (uv.realizable) {
            if (act.value("verify", true)) {
              auto rep = verify_update(*uv.solution, p);
              rec.verdicts.push_back({"verify " + name, rep.ok, rep.ok ? "ok" : rep.violations.front()});
            }
            updated = true;
            ready = PendingUpdate{static_cast<std::uint64_t>(k + act.value("latency", 0L)),
                                  std::make_shared<const UpdateSolution>(std::move(*uv.solution)), en.version(),
                                  manifest_of(act.value("manifest", json::object()))};
            rec.controllers.push_back(write_update(*ready->sol));
          }
        }
        if (act.contains("hotswap") && ready) {
          en.request_swap({ready->sol, ready->version, ready->manifest});
          ready.reset();
        }
        if (act.contains("assert")) {
          rec.log = en.log();
          rec.verdicts.push_back(check_assertion(act["assert"], doc, rec));
        }
      } catch (const ScenarioError&) {
        throw;
      } catch (const std::exception& e) {
        throw ScenarioError(step, e.what());
      }
    }
    if (ready && auto_swap && static_cast<std::uint64_t>(k) >= ready->ready_tick) {
      en.request_swap({ready->sol, ready->version, ready->manifest});
      ready.reset();
    }

    if (opts.spurious_at && *opts.spurious_at == k) {
      const Lts& lts = en.controller().lts;
      for (int c : world.grid().cells()) {
        std::string l = "at." + std::to_string(c);
        auto id = lts.label_id(l);
        if (!id || lts.out(en.state(), *id).empty()) {
          rec.world_log.push_back(std::to_string(en.tick_index()) + " spurious " + l);
          en.post(l);
          break;
        }
      }
    }
    for (auto& ev : world.step(dt)) {
      auto c = world.cell();
      rec.world_log.push_back(std::to_string(en.tick_index()) + " " + ev + " " + (c ? std::to_string(*c) : "-"));
      en.post(ev);
    }
    TickOutput out = en.tick();
    for (auto& cmd : out.commands) {
      if (cmd == dcu_events::kStopOld || cmd == dcu_events::kStartNew) continue;
      if (cmd == dcu_events::kReconfig) {
        if (out.reconfig) {
          try {
            for (auto& u : out.reconfig->unbind) world.unbind(u);
            for (auto& b : out.reconfig->bind) world.bind(b);
          } catch (const SimError& e) {
            en.on_unexpected(cmd, e.what());
          }
        }
        continue;
      }
      rec.world_log.push_back(std::to_string(en.tick_index() - 1) + " cmd " + cmd + " -");
      try {
        for (auto& ev : world.dispatch(cmd)) en.post(ev);
      } catch (const SimError& e) {
        en.on_unexpected(cmd, e.what());
      }
    }
    if (en.mode() == Mode::Landed) break;
  }
  rec.log = en.log();
  rec.final_mode = en.mode();
  for (auto& a : sc.value("assertions", std::vector<json>{})) {
    if (a.value("kind", "") == "coverage")
      rec.verdicts.push_back(check_coverage(a, wc, rec));
    else
      rec.verdicts.push_back(check_assertion(a, doc, rec));
  }
  return rec;
}

}  // namespace skyweave
