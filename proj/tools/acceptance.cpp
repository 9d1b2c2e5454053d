// Acceptance suite: one PASS/FAIL line per criterion.  Exit status is the
// number of failed criteria.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "skyweave/mission.hpp"

using namespace skyweave;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kPatrolSynthSeconds = 1.0;
constexpr double kInconsistentSeconds = 30.0;
constexpr int kRandomArenas = 600;
constexpr double kLargeSynthSeconds = 60.0;
constexpr double kLargeUpdateSeconds = 300.0;
constexpr int kAtomicitySchedules = 1200;
constexpr long kSpuriousTick = 120;
constexpr long kSpuriousBudget = 2500;

const std::string kRoot = SKYWEAVE_SOURCE_DIR;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The world and mission text a scenario directory names.
Document scenario_doc(const std::string& name) {
  fs::path dir = fs::path(kRoot) / "scenarios" / name;
  auto sc = nlohmann::json::parse(slurp(dir / "scenario.json"));
  WorldConfig wc = load_world((dir / sc.value("world", std::string("world.json"))).string());
  return parse_or_throw(mission_text(wc, slurp(dir / sc.at("spec").get<std::string>())));
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (auto& e : fs::directory_iterator(kRoot + "/scenarios"))
    if (fs::exists(e.path() / "scenario.json")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

int cell_of(const std::string& label, const char* prefix) {
  std::string p(prefix);
  return label.rfind(p, 0) == 0 ? std::stoi(label.substr(p.size())) : -1;
}

struct Result {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, const std::string& what, const std::function<Result()>& check) {
  Result r;
  auto t0 = std::chrono::steady_clock::now();
  try {
    r = check();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  failures += !r.pass;
  std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << n << " " << what << ": " << r.detail << " (" << std::fixed
            << std::setprecision(2) << seconds_since(t0) << " s)" << std::endl;
}

// Is the graph acyclic once edges labelled `cut` are removed?  Kahn's algorithm.
bool acyclic_without(const std::map<int, std::vector<std::pair<int, std::string>>>& g, const std::string& cut) {
  std::map<int, int> indeg;
  for (auto& [s, es] : g) {
    indeg.try_emplace(s, 0);
    for (auto& [t, l] : es)
      if (l != cut) ++indeg[t];
  }
  std::queue<int> q;
  for (auto& [s, d] : indeg)
    if (d == 0) q.push(s);
  std::size_t removed = 0;
  while (!q.empty()) {
    int s = q.front();
    q.pop();
    ++removed;
    auto it = g.find(s);
    if (it == g.end()) continue;
    for (auto& [t, l] : it->second)
      if (l != cut && --indeg[t] == 0) q.push(t);
  }
  return removed == indeg.size();
}

Result patrol() {
  Document doc = scenario_doc("patrol_2x3");
  auto t0 = std::chrono::steady_clock::now();
  ControlProblem p = control_problem(doc, "Patrol");
  Verdict v = solve(p);
  double secs = seconds_since(t0);
  if (!v.realizable) return {false, "unrealizable"};

  // closed loop keyed by (product state, where the vehicle is or is heading)
  Lts prod = compose(p.env, v.controller->lts);
  std::map<std::pair<StateId, int>, int> ids;
  std::map<int, std::vector<std::pair<int, std::string>>> g;
  std::vector<std::pair<StateId, int>> stack{{prod.initial(), 0}};
  int bad = 0;
  auto id = [&](std::pair<StateId, int> k) { return ids.emplace(k, static_cast<int>(ids.size())).first->second; };
  id(stack.front());
  std::set<std::pair<StateId, int>> seen;
  while (!stack.empty()) {
    auto k = stack.back();
    stack.pop_back();
    if (!seen.insert(k).second) continue;
    if (k.second >= 3) ++bad;
    g[id(k)];
    for (const Edge& e : prod.out(k.first)) {
      const std::string& l = prod.label(e.label);
      int cell = k.second;
      if (cell_of(l, "go.") >= 0) cell = cell_of(l, "go.");
      if (cell_of(l, "at.") >= 0) cell = cell_of(l, "at.");
      std::pair<StateId, int> n{e.target, cell};
      g[id(k)].push_back({id(n), l});
      stack.push_back(n);
    }
  }
  bool cycles = acyclic_without(g, "at.0") && acyclic_without(g, "at.2");
  std::ostringstream d;
  d << seen.size() << " closed-loop states, " << bad << " in cells 3-5, every cycle visits at.0 and at.2: "
    << (cycles ? "yes" : "no") << ", synthesis " << secs * 1000 << " ms";
  return {bad == 0 && cycles && secs < kPatrolSynthSeconds, d.str()};
}

// Between stopOld and startNew every reachable state has the vehicle at 4 or 5.
bool bottom_row_between(const ControlProblem& check, const Lts& combined) {
  Lts prod = compose(check.env, combined);
  std::set<std::tuple<StateId, int, bool, bool>> seen;
  std::vector<std::tuple<StateId, int, bool, bool>> stack{{prod.initial(), 0, false, false}};
  while (!stack.empty()) {
    auto k = stack.back();
    stack.pop_back();
    if (!seen.insert(k).second) continue;
    auto [s, cell, stopped, started] = k;
    if (stopped && !started && cell != 4 && cell != 5) return false;
    for (const Edge& e : prod.out(s)) {
      const std::string& l = prod.label(e.label);
      int next = cell_of(l, "at.") >= 0 ? cell_of(l, "at.") : cell;
      stack.push_back({e.target, next, stopped || l == "stopOld", started || l == "startNew"});
    }
  }
  return true;
}

Result inconsistent() {
  Document doc = scenario_doc("inconsistent_patrol");
  auto t0 = std::chrono::steady_clock::now();
  Controller c = *solve(control_problem(doc, "Old")).controller;
  bool strict = solve_update(update_problem(doc, "Strict", c)).realizable;
  DcuProblem bottom = update_problem(doc, "Bottom", c);
  UpdateVerdict v = solve_update(bottom);
  double secs = seconds_since(t0);
  if (!v.realizable) return {false, "Strict " + std::string(strict ? "realizable" : "unrealizable") + ", Bottom unrealizable"};
  bool verified = verify_update(*v.solution, bottom).ok;
  bool between = bottom_row_between(update_check_problem(bottom), v.solution->combined);
  std::ostringstream d;
  d << "empty theta " << (strict ? "realizable" : "unrealizable") << ", bottom-row theta realizable, verified "
    << verified << ", at4||at5 between stopOld and startNew " << between << ", " << secs << " s";
  return {!strict && verified && between && secs < kInconsistentSeconds, d.str()};
}

struct Delay {
  int swaps = 0;
  int before_both = 0;   // startNew while p1 or p3 is still on board
  int with_p2 = 0;       // startNew with both on board after grab.2
};

// Every hotSwap taken while holding p1 and p3: does startNew wait until both
// have been released?
Delay delayed_switch(const ControlProblem& check, const Lts& combined) {
  Lts prod = compose(check.env, combined);
  struct Key {
    StateId s;
    int with, pending;
    bool watch, grabbed2;
    auto operator<=>(const Key&) const = default;
  };
  std::set<Key> seen;
  std::vector<Key> stack{{prod.initial(), 0, 0, false, false}};
  Delay d;
  while (!stack.empty()) {
    Key k = stack.back();
    stack.pop_back();
    if (!seen.insert(k).second) continue;
    for (const Edge& e : prod.out(k.s)) {
      const std::string& l = prod.label(e.label);
      Key n = k;
      n.s = e.target;
      if (int p = cell_of(l, "grab."); p > 0) n.with |= 1 << (p - 1);
      if (int p = cell_of(l, "release."); p > 0) n.with &= ~(1 << (p - 1)), n.pending &= ~(1 << (p - 1));
      if (l == "grab.2") n.grabbed2 = true;
      if (l == "hotSwap" && (k.with & 5) == 5) n.watch = true, n.pending = 5, n.grabbed2 = false, ++d.swaps;
      if (l == "startNew" && k.watch) {
        d.before_both += k.pending != 0;
        d.with_p2 += k.pending == 5 && k.grabbed2;
        n.watch = false;
      }
      stack.push_back(n);
    }
  }
  return d;
}

Result delivery() {
  Document doc = scenario_doc("delivery");
  Controller c = *solve(control_problem(doc, "Old")).controller;
  std::ostringstream d;
  bool ok = true;
  Delay delay;
  for (std::string name : {"Update", "LightUpdate"}) {
    DcuProblem p = update_problem(doc, name, c);
    UpdateVerdict v = solve_update(p);
    if (!v.realizable) return {false, name + " unrealizable"};
    std::size_t total = 0, mapped = 0;
    for (StateId s : reachable(c.lts)) ++total, mapped += v.solution->f[s] != kNoState;
    bool verified = verify_update(*v.solution, p).ok;
    d << name << ": f defined on " << mapped << "/" << total << " states, verified " << verified << "; ";
    ok = ok && mapped == total && verified;
    if (name == "LightUpdate") delay = delayed_switch(update_check_problem(p), v.solution->combined);
  }
  d << "hotSwap holding p1,p3 in " << delay.swaps << " contexts, startNew before both releases in "
    << delay.before_both << ", startNew with both on board after grab.2 in " << delay.with_p2;
  return {ok && delay.swaps > 0 && delay.before_both == 0, d.str()};
}

Result reconfig() {
  Document doc = parse_or_throw(slurp(kRoot + "/specs/reconfig_toy.fsl"));
  DcuProblem p = update_problem(doc, "Reconf");
  UpdateVerdict v = solve_update(p);
  if (!v.realizable) return {false, "unrealizable"};
  bool verified = verify_update(*v.solution, p).ok;
  Lts prod = compose(update_check_problem(p).env, v.solution->combined);
  std::set<std::pair<StateId, int>> seen;
  std::vector<std::pair<StateId, int>> stack{{prod.initial(), 0}};
  std::set<int> where;
  int early_grabs = 0;
  while (!stack.empty()) {
    auto [s, cell] = stack.back();
    stack.pop_back();
    if (!seen.insert({s, cell}).second) continue;
    for (const Edge& e : prod.out(s)) {
      const std::string& l = prod.label(e.label);
      int next = cell;
      if (cell >= 0 && cell_of(l, "at.") >= 0) next = cell_of(l, "at.");
      if (l == "reconfig") where.insert(cell), next = -1;  // -1: reconfigured
      if (l == "grab.4" && cell >= 0) ++early_grabs;
      stack.push_back({e.target, next});
    }
  }
  std::ostringstream d;
  d << "reconfig at cells {";
  for (int w : where) d << " " << w;
  d << " }, grab.4 before reconfig " << early_grabs << ", verified " << verified;
  bool shared = !where.empty() && std::all_of(where.begin(), where.end(), [](int w) { return w == 2 || w == 5; });
  return {shared && early_grabs == 0 && verified, d.str()};
}

Result solver_oracle() {
  std::mt19937 rng(2024);
  int agree = 0, realizable = 0;
  for (int k = 0; k < kRandomArenas; ++k) {
    GameArena a = oracle::random_arena(rng, 6, 4);
    bool expect = oracle::brute_force_realizable(a);
    agree += solve_gr1(a).realizable == expect;
    realizable += expect;
  }
  std::ostringstream d;
  d << agree << "/" << kRandomArenas << " agree (" << realizable << " realizable)";
  return {agree == kRandomArenas, d.str()};
}

Result scale() {
  std::ostringstream d;
  bool ok = true;
  Document big = scenario_doc("patrol_163");
  auto t0 = std::chrono::steady_clock::now();
  Verdict v = solve(control_problem(big, "Old"));
  double synth = seconds_since(t0);
  if (!v.realizable) return {false, "163-cell patrol unrealizable"};
  t0 = std::chrono::steady_clock::now();
  bool upd = solve_update(update_problem(big, "New", *v.controller)).realizable;
  double update = seconds_since(t0);
  d << "163-cell synthesis " << synth << " s (arena " << v.arena_states << "), update " << update << " s";
  ok = ok && upd && synth <= kLargeSynthSeconds && update <= kLargeUpdateSeconds;

  Document sr = scenario_doc("search_rescue_48");
  Verdict old = solve(control_problem(sr, "Old"));
  if (!old.realizable) return {false, "search and rescue old mission unrealizable"};
  t0 = std::chrono::steady_clock::now();
  UpdateVerdict uv = solve_update(update_problem(sr, "Low", *old.controller));
  double sr_update = seconds_since(t0);
  d << "; 48-cell search and rescue update " << sr_update << " s (arena " << uv.arena_states << ")";
  ok = ok && uv.realizable && sr_update <= kLargeUpdateSeconds;
  d << "; peak RSS " << peak_rss_kb() / 1024 << " MB";
  return {ok, d.str()};
}

Result cover() {
  WorldConfig wc = load_world(kRoot + "/scenarios/iterator_cover/world.json");
  RunRecord r = run_scenario(kRoot + "/scenarios/iterator_cover");
  std::ostringstream d;
  d << wc.grid.rows << "x" << wc.grid.cols << " grid, |A| = " << wc.grid.regions.at("A").size() << "; ";
  for (auto& a : r.verdicts) d << a.name << " " << (a.pass ? "ok" : "FAILED (" + a.detail + ")") << "; ";
  return {r.passed() && wc.grid.regions.at("A").size() == 20, d.str()};
}

// Shortest label path from the initial state to every reachable state.
std::map<StateId, std::vector<std::string>> paths(const Controller& c) {
  std::map<StateId, std::vector<std::string>> out{{c.lts.initial(), {}}};
  std::queue<StateId> q;
  q.push(c.lts.initial());
  while (!q.empty()) {
    StateId s = q.front();
    q.pop();
    for (const Edge& e : c.lts.out(s))
      if (!out.count(e.target)) {
        out[e.target] = out[s];
        out[e.target].push_back(c.lts.label(e.label));
        q.push(e.target);
      }
  }
  return out;
}

// Drives an enactor to the end of `path`.  Runs of uncontrolled events are
// drained one tick each; controlled labels must be what the tick emits.
bool drive(Enactor& en, const Controller& c, const std::vector<std::string>& path) {
  std::size_t i = 0;
  while (i < path.size()) {
    std::size_t j = i;
    while (j < path.size() && !c.alphabet.controlled.count(path[j])) en.post(path[j++]);
    if (j == path.size()) return true;  // trailing run stays in the inbox
    if (en.tick().commands != std::vector<std::string>{path[j]}) return false;
    i = j + 1;
  }
  return true;
}

Result robustness() {
  std::ostringstream d;
  int clean = 0;
  auto names = scenario_names();
  for (auto& name : names) {
    RunOptions o;
    o.spurious_at = kSpuriousTick;
    o.ticks = kSpuriousBudget;
    RunRecord r = run_scenario(kRoot + "/scenarios/" + name, o);
    int fallbacks = 0;
    for (auto& l : r.log) fallbacks += parse_log_line(l).dir == "fallback";
    if (fallbacks == 1 && r.final_mode == Mode::Landed)
      ++clean;
    else
      d << name << ": " << fallbacks << " fallbacks, " << to_string(r.final_mode) << "; ";
  }
  d << clean << "/" << names.size() << " scenarios fall back once and land; ";

  // hotSwap against inbox interleavings, compared with the quiescent swap:
  // drain under C, map through f, emit the selection of C'
  Document doc = scenario_doc("delivery");
  Controller c = *solve(control_problem(doc, "Old")).controller;
  DcuProblem p = update_problem(doc, "LightUpdate", c);
  auto sol = std::make_shared<const UpdateSolution>(std::move(*solve_update(p).solution));
  const Controller& n = sol->next;
  auto all = paths(c);
  std::vector<StateId> states;
  for (auto& [s, _] : all) states.push_back(s);
  std::mt19937_64 rng(11);
  int same = 0;
  for (int k = 0; k < kAtomicitySchedules; ++k) {
    StateId s = states[rng() % states.size()];
    std::vector<std::string> batch;
    StateId t = s;
    std::size_t len = rng() % 4;
    while (batch.size() < len) {
      std::vector<Edge> opts;
      for (const Edge& e : c.lts.out(t))
        if (!c.alphabet.controlled.count(c.lts.label(e.label))) opts.push_back(e);
      if (opts.empty()) break;
      const Edge& e = opts[rng() % opts.size()];
      batch.push_back(c.lts.label(e.label));
      t = e.target;
    }
    // events still queued from the path are drained first as well
    auto& path = all[s];
    Enactor en(c);
    if (!drive(en, c, path)) continue;
    std::size_t at = rng() % (batch.size() + 1);
    for (std::size_t i = 0; i <= batch.size(); ++i) {
      if (i == at) en.request_swap({sol, 0, {}});
      if (i < batch.size()) en.post(batch[i]);
    }
    TickOutput out = en.tick();
    StateId want = sol->f[t];
    auto sel = n.selected(want);
    bool ok = sel ? out.commands == std::vector<std::string>{*sel} &&
                        en.state() == n.lts.out(want, *n.selection[want]).front().target
                  : out.commands.empty() && en.state() == want;
    same += ok && en.version() == 1;
  }
  d << same << "/" << kAtomicitySchedules << " swap schedules match the quiescent swap";
  return {clean == static_cast<int>(names.size()) && same == kAtomicitySchedules, d.str()};
}

Result determinism() {
  std::ostringstream d;
  int same = 0;
  auto names = scenario_names();
  for (auto& name : names) {
    RunRecord a = run_scenario(kRoot + "/scenarios/" + name);
    RunRecord b = run_scenario(kRoot + "/scenarios/" + name);
    if (a.event_log() == b.event_log() && a.world_log == b.world_log && !a.log.empty())
      ++same;
    else
      d << name << " differs; ";
  }
  d << same << "/" << names.size() << " scenarios reproduce byte-identical logs";
  return {same == static_cast<int>(names.size()), d.str()};
}

}  // namespace

int main() {
  report(1, "patrol synthesis on the 2x3 grid", patrol);
  report(2, "inconsistent update pair", inconsistent);
  report(3, "delivery update and delayed switch", delivery);
  report(4, "reconfiguration over shared cells", reconfig);
  report(5, "solver against brute force", solver_oracle);
  report(6, "scale", scale);
  report(7, "iterator cover", cover);
  report(8, "enactment robustness", robustness);
  report(9, "determinism", determinism);
  std::cout << (9 - failures) << "/9 criteria pass" << std::endl;
  return failures;
}
