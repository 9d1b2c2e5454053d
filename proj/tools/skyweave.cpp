#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "skyweave/service.hpp"

using namespace skyweave;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kError = 1, kUnrealizable = 2, kVerifyFailed = 3, kAssertionFailed = 4 };

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Loaded {
  WorldConfig world;
  Document doc;
};

Loaded load(const std::string& spec, const std::string& world) {
  Loaded l;
  if (!world.empty()) l.world = load_world(world);
  ParseResult pr = parse(world.empty() ? slurp(spec) : mission_text(l.world, slurp(spec)));
  if (!pr.ok()) {
    for (auto& d : pr.diagnostics) std::cerr << format(d, spec) << "\n";
    throw std::runtime_error("invalid spec");
  }
  l.doc = std::move(pr.doc);
  return l;
}

bool is_update(const Document& doc, const std::string& name) {
  for (auto& u : doc.update_problems)
    if (u.name == name) return true;
  return false;
}

std::string pick_problem(const Document& doc, const std::string& name) {
  if (!name.empty()) return name;
  if (doc.control_problems.size() == 1) return doc.control_problems.front().name;
  throw std::runtime_error("the spec has several problems; pick one with --problem");
}

// Synthesizes the controller an update problem replaces.
Controller old_controller(const Document& doc, const std::string& update, const std::string& old_table) {
  if (!old_table.empty()) return read_controller(slurp(old_table));
  for (auto& u : doc.update_problems)
    if (u.name == update) {
      Verdict v = solve(control_problem(doc, u.old));
      if (!v.realizable) throw std::runtime_error("old problem " + u.old + " is unrealizable");
      return *v.controller;
    }
  throw std::runtime_error("no update problem " + update);
}

void print_witness(const std::optional<Witness>& w) {
  if (!w) return;
  std::cerr << "witness: " << w->reason << "\n";
  for (auto& l : w->trace) std::cerr << "  " << l << "\n";
}

int cmd_run(const std::string& dir, const RunOptions& o, const std::string& out) {
  RunRecord r = run_scenario(dir, o);
  for (auto& m : r.synth)
    std::cout << "synth " << m.what << (m.realizable ? " realizable" : " unrealizable") << " arena=" << m.arena_states
              << " states=" << m.controller_states << " " << m.wall_ms << " ms\n";
  for (auto& v : r.verdicts) std::cout << (v.pass ? "pass " : "FAIL ") << v.name << ": " << v.detail << "\n";
  std::cout << "mode " << to_string(r.final_mode) << ", " << r.log.size() << " log records, seed " << r.seed << "\n";
  if (!out.empty()) std::ofstream(out) << r.to_json().dump(2) << "\n";
  return r.passed() ? kOk : kAssertionFailed;
}

int cmd_synth(const std::string& spec, const std::string& world, const std::string& problem, const std::string& out,
              const std::string& old_table) {
  Loaded l = load(spec, world);
  std::string name = pick_problem(l.doc, problem);
  std::string table;
  if (is_update(l.doc, name)) {
    UpdateVerdict v = solve_update(update_problem(l.doc, name, old_controller(l.doc, name, old_table)));
    std::cerr << name << ": arena " << v.arena_states << " states\n";
    if (!v.realizable) {
      std::cerr << name << " is unrealizable\n";
      print_witness(v.witness);
      return kUnrealizable;
    }
    table = write_update(*v.solution);
  } else {
    Verdict v = solve(control_problem(l.doc, name));
    std::cerr << name << ": arena " << v.arena_states << " states\n";
    if (!v.realizable) {
      std::cerr << name << " is unrealizable\n";
      print_witness(v.witness);
      return kUnrealizable;
    }
    table = write_controller(*v.controller);
  }
  if (out.empty())
    std::cout << table;
  else
    std::ofstream(out) << table;
  return kOk;
}

int cmd_verify(const std::string& spec, const std::string& tbl, const std::string& world, const std::string& problem,
               const std::string& old_table) {
  Loaded l = load(spec, world);
  std::string text = slurp(tbl);
  VerifyReport rep;
  if (text.find("\nfmap ") != std::string::npos) {
    std::string name = problem;
    if (name.empty() && l.doc.update_problems.size() == 1) name = l.doc.update_problems.front().name;
    if (name.empty()) throw std::runtime_error("the table is an update; pick the update problem with --problem");
    Controller cur = old_controller(l.doc, name, old_table);
    DcuProblem p = update_problem(l.doc, name, cur);
    UpdateTable t = read_update(text);
    UpdateSolution sol;
    sol.next = std::move(t.next);
    sol.f = std::move(t.f);
    recombine(sol, cur);
    rep = verify_update(sol, p);
  } else {
    rep = verify_closed_loop(control_problem(l.doc, pick_problem(l.doc, problem)), read_controller(text));
  }
  std::cout << (rep.ok ? "ok" : "FAILED") << " (" << rep.product_states << " product states)\n";
  for (auto& v : rep.violations) std::cout << "  " << v << "\n";
  return rep.ok ? kOk : kVerifyFailed;
}

std::atomic<bool> g_stop{false};

int cmd_serve(ServiceConfig cfg, const std::string& spec, const std::string& problem, double tick) {
  MissionService svc(cfg);
  if (!spec.empty()) {
    json body{{"fsl", slurp(spec)}};
    if (!problem.empty()) body["problem"] = problem;
    HttpResponse r = svc.handle("POST", "/spec", body.dump());
    if (r.status != 201) {
      std::cerr << r.body.dump(2) << "\n";
      return r.status == 422 ? kUnrealizable : kError;
    }
  }
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  serve(svc, cfg.bind, g_stop, tick, cfg.realtime,
        [&](unsigned short port) { std::cerr << "listening on port " << port << "\n"; });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skyweave: reactive mission synthesis and hot-swapping for a simulated UAV"};
  app.require_subcommand(1);

  std::string dir, out, spec, world, problem, tbl, old_table, bind = "127.0.0.1:8080";
  std::uint64_t seed = 0;
  double sim_speed = 1, dt = 0.1;
  long ticks = 0, spurious = 0;
  bool auto_swap = false, fast = false;

  auto* run = app.add_subcommand("run", "run a scenario directory and check its assertions");
  run->add_option("dir", dir, "scenario directory")->required();
  run->add_option("--seed", seed, "override the world seed");
  run->add_option("--sim-speed", sim_speed, "world seconds per tick, as a multiple of dt");
  run->add_option("--ticks", ticks, "override the tick budget");
  run->add_option("--spurious-at", spurious, "inject an unexpected arrival at this tick");
  run->add_option("--out", out, "write the run record as JSON");

  auto* synth = app.add_subcommand("synth", "synthesize a controller table");
  synth->add_option("spec", spec, "mission .fsl")->required();
  synth->add_option("--world", world, "world config; adds the movement model");
  synth->add_option("--problem", problem, "control or update problem");
  synth->add_option("--old", old_table, "table of the controller being updated");
  synth->add_option("-o,--out", out, "output table (default stdout)");

  auto* verify = app.add_subcommand("verify", "check a controller table against its problem");
  verify->add_option("spec", spec, "mission .fsl")->required();
  verify->add_option("table", tbl, "controller or update table")->required();
  verify->add_option("--world", world, "world config; adds the movement model");
  verify->add_option("--problem", problem, "control or update problem");
  verify->add_option("--old", old_table, "table of the controller being updated");

  auto* srv = app.add_subcommand("serve", "serve the HTTP/WebSocket mission API");
  srv->add_option("--bind", bind, "address:port");
  srv->add_option("--world", world, "world config")->required();
  srv->add_option("--spec", spec, "start this mission right away");
  srv->add_option("--problem", problem, "control problem of --spec");
  srv->add_option("--seed", seed, "override the world seed");
  srv->add_option("--sim-speed", sim_speed, "world seconds per tick, as a multiple of dt");
  srv->add_option("--dt", dt, "tick period in seconds");
  srv->add_flag("--auto-swap", auto_swap, "hot-swap as soon as an update is ready");
  srv->add_flag("--fast", fast, "do not pace ticks against the wall clock");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunOptions o;
      if (run->count("--seed")) o.seed = seed;
      o.sim_speed = sim_speed;
      if (run->count("--ticks")) o.ticks = ticks;
      if (run->count("--spurious-at")) o.spurious_at = spurious;
      return cmd_run(dir, o, out);
    }
    if (*synth) return cmd_synth(spec, world, problem, out, old_table);
    if (*verify) return cmd_verify(spec, tbl, world, problem, old_table);
    ServiceConfig cfg;
    cfg.bind = bind;
    cfg.world = load_world(world);
    if (srv->count("--seed")) cfg.world.seed = seed;
    cfg.sim_speed = sim_speed;
    cfg.dt = dt;
    cfg.auto_swap = auto_swap;
    cfg.realtime = !fast;
    return cmd_serve(cfg, spec, problem, dt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
}
