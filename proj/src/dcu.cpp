#include "skyweave/dcu.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace skyweave {

using namespace dcu_events;

std::vector<FluentDef> update_fluents() {
  return {{"HotSwap", {kHotSwap}, {}, false},
          {"OldStopped", {kStopOld}, {}, false},
          {"NewStarted", {kStartNew}, {}, false},
          {"Reconfigured", {kReconfig}, {}, false}};
}

namespace {

Lts latch(const std::string& ev) {
  Lts::Builder b({ev});
  StateId s0 = b.add_state(), s1 = b.add_state();
  b.add_transition(s0, ev, s1);
  return b.build();
}

Lts blocker(const std::set<std::string>& labels) {
  Lts::Builder b(labels);
  b.add_state();
  return b.build();
}

// R with a one-shot identity reconfig when the user did not model one.
Lts reconfigurable_env(const DcuProblem& p) {
  if (p.reconfigurable.has_label(kReconfig)) return p.reconfigurable;
  return compose(p.reconfigurable, latch(kReconfig));
}

void check_fresh(const DcuProblem& p) {
  auto fresh_error = [](const std::string& what) { throw DcuError(DcuError::Kind::FreshnessViolation, what); };
  for (const auto& ev : {kHotSwap, kStopOld, kStartNew}) {
    if (p.reconfigurable.has_label(ev)) fresh_error("environment uses reserved event '" + ev + "'");
    if (p.current.lts.has_label(ev)) fresh_error("old controller uses reserved event '" + ev + "'");
  }
  if (p.current.lts.has_label(kReconfig) || p.old.env.has_label(kReconfig))
    fresh_error("old environment already contains '" + kReconfig + "'");
  const std::set<std::string> reserved{kHotSwap, kStopOld, kStartNew, kReconfig,
                                       "HotSwap", "OldStopped", "NewStarted", "Reconfigured"};
  for (auto& f : p.fluents) {
    if (reserved.count(f.name)) fresh_error("fluent '" + f.name + "' is reserved for updates");
    for (auto* s : {&f.init, &f.term})
      for (auto& l : *s)
        if (reserved.count(l)) fresh_error("fluent '" + f.name + "' mentions reserved event '" + l + "'");
  }
  auto scan = [&](const ExprPtr& e, const char* where) {
    std::set<std::string> atoms;
    collect_atoms(*e, atoms);
    for (auto& a : atoms)
      if (reserved.count(a)) fresh_error(std::string(where) + " mentions '" + a + "'; only theta may");
  };
  for (auto& s : p.old.safety) scan(s.formula, "old safety");
  for (auto& e : p.new_safety) scan(e, "new safety");
  for (auto& e : p.new_liveness.assumptions) scan(e, "new liveness");
  for (auto& e : p.new_liveness.guarantees) scan(e, "new liveness");
  for (auto* v : {&p.new_liveness.assumptions, &p.new_liveness.guarantees})
    for (auto& e : *v)
      if (!is_boolean(*e))
        throw DcuError(DcuError::Kind::UnsupportedLiveness,
                       "new liveness must be []<> over boolean conditions, got " + to_string(*e));
}

struct EnvU {
  ControlProblem problem;
  std::vector<StateId> pre_c;  // E_u state -> C state, kNoState after the swap
};

EnvU build_env_u(const DcuProblem& p) {
  check_fresh(p);
  const Lts r = reconfigurable_env(p);
  const Lts& c = p.current.lts;

  Lts cr = compose(c, r);
  Lts pre = compose(cr, blocker({kReconfig, kStopOld, kStartNew}));
  for (StateId s = 0; s < pre.num_states(); ++s)
    for (const Edge& e : pre.out(s))
      if (!c.has_label(pre.label(e.label)))
        throw DcuError(DcuError::Kind::EnvironmentMismatch,
                       "event '" + pre.label(e.label) + "' can happen before reconfig but is unknown to the old controller");

  Lts rs = compose(r, latch(kStopOld));
  Lts post = compose(rs, latch(kStartNew));
  std::map<StateId, StateId> fresh_post;  // r state -> post state with both latches open
  for (StateId s = 0; s < post.num_states(); ++s) {
    StateId a = post.provenance(s)[0], b = post.provenance(s)[1];
    if (b != 0 || rs.provenance(a)[1] != 0) continue;
    fresh_post[rs.provenance(a)[0]] = s;
  }
  StateMap swap;
  EnvU out;
  out.pre_c.assign(pre.num_states(), kNoState);
  for (StateId s = 0; s < pre.num_states(); ++s) {
    StateId crs = pre.provenance(s)[0];
    StateId cs = cr.provenance(crs)[0], es = cr.provenance(crs)[1];
    swap.entries[s] = {MapTarget{fresh_post.at(es), {}}};
    out.pre_c[s] = cs;
  }
  Lts eu = interrupt(pre, post, kHotSwap, swap);
  out.pre_c.resize(eu.num_states(), kNoState);

  ControlProblem& u = out.problem;
  for (auto& l : eu.alphabet()) {
    if (l == kStopOld || l == kStartNew || l == kReconfig || (l != kHotSwap && p.alphabet.is_controlled(l)))
      u.alphabet.controlled.insert(l);
    else
      u.alphabet.uncontrolled.insert(l);
  }
  u.passive.assign(eu.num_states(), false);
  for (StateId s = 0; s < pre.num_states(); ++s) u.passive[s] = true;
  u.env = std::move(eu);
  UpdateGoal g = build_update_goal(p);
  u.fluents = std::move(g.fluents);
  u.safety = std::move(g.safety);
  u.liveness = std::move(g.liveness);
  return out;
}

}  // namespace

UpdateGoal build_update_goal(const DcuProblem& p) {
  UpdateGoal g;
  g.fluents = p.fluents;
  for (auto& f : update_fluents()) g.fluents.push_back(f);
  for (auto& s : p.old.safety) g.safety.push_back({s.formula, {}, kStopOld});
  for (auto& t : p.theta) g.safety.push_back({t, {}, {}});
  for (auto& s : p.new_safety) g.safety.push_back({s, kStartNew, {}});
  for (auto& e : p.new_liveness.assumptions)
    if (!is_boolean(*e)) throw DcuError(DcuError::Kind::UnsupportedLiveness, "non-recurrence assumption " + to_string(*e));
  g.liveness.assumptions.push_back(fx::atom("HotSwap"));
  for (auto& a : p.new_liveness.assumptions) g.liveness.assumptions.push_back(a);
  g.liveness.guarantees.push_back(fx::conj({fx::atom("OldStopped"), fx::atom("NewStarted"), fx::atom("Reconfigured")}));
  for (auto& e : p.new_liveness.guarantees) {
    if (!is_boolean(*e)) throw DcuError(DcuError::Kind::UnsupportedLiveness, "non-recurrence guarantee " + to_string(*e));
    g.liveness.guarantees.push_back(e);
  }
  return g;
}

ControlProblem build_update_environment(const DcuProblem& p) { return build_env_u(p).problem; }

ControlProblem update_check_problem(const DcuProblem& p) {
  check_fresh(p);
  ControlProblem v;
  Lts r = reconfigurable_env(p);
  Lts l1 = latch(kStopOld), l2 = latch(kStartNew), l3 = latch(kHotSwap);
  v.env = compose_all({&r, &l1, &l2, &l3});
  for (auto& l : v.env.alphabet()) {
    if (l == kStopOld || l == kStartNew || l == kReconfig || (l != kHotSwap && p.alphabet.is_controlled(l)))
      v.alphabet.controlled.insert(l);
    else
      v.alphabet.uncontrolled.insert(l);
  }
  UpdateGoal g = build_update_goal(p);
  v.fluents = std::move(g.fluents);
  v.safety = std::move(g.safety);
  v.liveness = std::move(g.liveness);
  return v;
}

void recombine(UpdateSolution& sol, const Controller& current) {
  StateMap m;
  m.default_disabled = true;
  for (StateId c = 0; c < sol.f.size(); ++c)
    if (sol.f[c] != kNoState) m.entries[c] = {MapTarget{sol.f[c], {}}};
  sol.combined = interrupt(current.lts, sol.next.lts, kHotSwap, m);
  Controller& cc = sol.combined_controller;
  cc = Controller{};
  cc.lts = sol.combined;
  cc.alphabet = sol.next.alphabet;
  for (auto& l : current.alphabet.controlled)
    if (!cc.alphabet.uncontrolled.count(l)) cc.alphabet.controlled.insert(l);
  for (auto& l : current.alphabet.uncontrolled)
    if (!cc.alphabet.controlled.count(l)) cc.alphabet.uncontrolled.insert(l);
  cc.alphabet.uncontrolled.insert(kHotSwap);
  cc.selection.assign(cc.lts.num_states(), std::nullopt);
  for (StateId s = 0; s < cc.lts.num_states(); ++s) {
    const auto& pv = cc.lts.provenance(s);
    std::optional<std::string> sel;
    if (pv[0] == 0) sel = current.selected(pv[1]);
    else if (pv[0] == 1) sel = sol.next.selected(pv[1]);
    if (sel) cc.selection[s] = cc.lts.label_id(*sel);
  }
}

UpdateVerdict solve_update(const DcuProblem& p, const SolveOptions& opts) {
  EnvU eu = build_env_u(p);
  GameArena arena = build_arena(eu.problem);
  Verdict v = solve_gr1(arena, opts);
  UpdateVerdict out;
  out.arena_states = arena.size();
  out.realizable = v.realizable;
  out.witness = v.witness;
  if (!v.realizable || !v.controller) return out;
  const Controller& cu = *v.controller;
  const auto hs = cu.lts.label_id(kHotSwap);

  // candidate swap targets per old controller state
  std::map<StateId, std::vector<StateId>> cand;
  std::vector<StateId> roots;
  for (StateId x = 0; x < cu.lts.num_states(); ++x) {
    StateId es = arena.env_state[cu.arena_state[x]];
    StateId c = eu.pre_c[es];
    if (c == kNoState || !hs) continue;
    for (const Edge& e : cu.lts.out(x, *hs)) {
      cand[c].push_back(e.target);
      roots.push_back(e.target);
    }
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());

  // C' is everything the combined controller can reach after a swap
  std::set<std::string> al(cu.lts.alphabet().begin(), cu.lts.alphabet().end());
  al.erase(kHotSwap);
  Lts::Builder b(al);
  std::vector<StateId> id(cu.lts.num_states(), kNoState);
  std::deque<StateId> q;
  UpdateSolution sol;
  auto visit = [&](StateId x) {
    if (id[x] != kNoState) return;
    id[x] = b.add_state();
    sol.next.arena_state.push_back(cu.arena_state[x]);
    sol.next.memory.push_back(cu.memory[x]);
    sol.next.selection.push_back(cu.selected(x) ? std::optional<LabelId>(b.label_id(*cu.selected(x))) : std::nullopt);
    q.push_back(x);
  };
  for (StateId x : roots) visit(x);
  while (!q.empty()) {
    StateId x = q.front();
    q.pop_front();
    for (const Edge& e : cu.lts.out(x)) {
      visit(e.target);
      b.add_transition(id[x], cu.lts.label(e.label), id[e.target]);
    }
  }

  sol.f.assign(p.current.lts.num_states(), kNoState);
  for (auto& [c, ys] : cand) {
    StateId best = ys.front();
    for (StateId y : ys) {
      if (cu.arena_state[y] != cu.arena_state[best])
        throw DcuError(DcuError::Kind::AmbiguousSwapState,
                       "old controller state " + std::to_string(c) +
                           " does not determine the update state; the new specification depends on history it does not track");
      if (id[y] < id[best]) best = y;
    }
    sol.f[c] = id[best];
  }
  for (StateId c : reachable(p.current.lts))
    if (sol.f[c] == kNoState)
      throw DcuError(DcuError::Kind::PartialF, "no swap target for reachable old state " + std::to_string(c));
  b.set_initial(sol.f[p.current.lts.initial()]);
  sol.next.lts = b.build();
  sol.next.alphabet = eu.problem.alphabet;
  sol.next.alphabet.uncontrolled.erase(kHotSwap);
  sol.arena_states = arena.size();
  recombine(sol, p.current);
  out.solution = std::move(sol);
  return out;
}

VerifyReport verify_update(const UpdateSolution& sol, const DcuProblem& p) {
  return verify_closed_loop(update_check_problem(p), sol.combined_controller);
}

DcuProblem update_problem(const Document& doc, const std::string& name, const std::optional<Controller>& current) {
  const UpdateProblemDecl* d = doc.update_problem(name);
  if (!d) throw ElaborationError({Diagnostic::Kind::UnresolvedName, "no update problem '" + name + "'", {}});
  DcuProblem p;
  p.old = control_problem(doc, d->old);
  if (current) {
    p.current = *current;
  } else {
    Verdict v = solve(p.old);
    if (!v.realizable)
      throw ElaborationError({Diagnostic::Kind::FragmentError, "old problem '" + d->old + "' is unrealizable", d->span});
    p.current = std::move(*v.controller);
  }
  p.reconfigurable = build_system(doc, d->env);
  std::set<std::string> ctrl;
  if (d->controllable) ctrl = *d->controllable;
  else if (doc.controllable) ctrl = *doc.controllable;
  for (auto& l : p.reconfigurable.alphabet()) {
    if (ctrl.count(l)) p.alphabet.controlled.insert(l);
    else p.alphabet.uncontrolled.insert(l);
  }
  p.fluents = doc.fluent_defs();
  auto formula = [&](const std::string& n) {
    auto a = doc.assertion(n);
    if (!a) throw ElaborationError({Diagnostic::Kind::UnresolvedName, "no assertion '" + n + "'", d->span});
    return a->formula;
  };
  for (auto& s : d->safety) p.new_safety.push_back(formula(s));
  for (auto& t : d->theta) p.theta.push_back(formula(t));
  if (!d->liveness.empty()) {
    auto l = doc.liveness_decl(d->liveness);
    if (!l) throw ElaborationError({Diagnostic::Kind::UnresolvedName, "no liveness '" + d->liveness + "'", d->span});
    p.new_liveness = {l->assumptions, l->guarantees};
  }
  return p;
}

std::string write_update(const UpdateSolution& sol) {
  std::ostringstream os;
  os << write_controller(sol.next);
  os << "fmap";
  std::size_t n = 0;
  for (StateId f : sol.f) n += f != kNoState;
  os << " " << n << "\n";
  for (StateId c = 0; c < sol.f.size(); ++c)
    if (sol.f[c] != kNoState) os << c << " " << sol.f[c] << "\n";
  return os.str();
}

UpdateTable read_update(const std::string& text) {
  auto at = text.find("\nfmap ");
  if (at == std::string::npos) throw std::runtime_error("update table: no fmap section");
  UpdateTable t{read_controller(text.substr(0, at + 1)), {}};
  std::istringstream in(text.substr(at + 6));
  std::size_t n = 0;
  if (!(in >> n)) throw std::runtime_error("update table: bad fmap size");
  for (std::size_t k = 0; k < n; ++k) {
    StateId c, f;
    if (!(in >> c >> f)) throw std::runtime_error("update table: truncated fmap");
    if (f >= t.next.lts.num_states()) throw std::runtime_error("update table: fmap target out of range");
    if (c >= t.f.size()) t.f.resize(c + 1, kNoState);
    t.f[c] = f;
  }
  return t;
}

}  // namespace skyweave
