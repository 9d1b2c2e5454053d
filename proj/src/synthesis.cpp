#include "skyweave/synthesis.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <map>
#include <sstream>
#include <unordered_map>

namespace skyweave {

GameArena make_arena(std::size_t n, StateId initial, const std::vector<std::string>& labels,
                     const std::vector<std::tuple<StateId, LabelId, StateId, bool>>& moves,
                     std::vector<char> error, std::vector<std::vector<char>> assumptions,
                     std::vector<std::vector<char>> guarantees) {
  GameArena a;
  a.labels = labels;
  a.initial = initial;
  auto sorted = moves;
  std::sort(sorted.begin(), sorted.end());
  a.offsets.assign(n + 1, 0);
  for (auto& [s, l, t, c] : sorted) a.offsets[s + 1]++;
  for (std::size_t i = 0; i < n; ++i) a.offsets[i + 1] += a.offsets[i];
  for (auto& [s, l, t, c] : sorted) a.moves.push_back({l, t, c});
  a.error = error.empty() ? std::vector<char>(n, 0) : std::move(error);
  a.assumptions = std::move(assumptions);
  a.guarantees = std::move(guarantees);
  a.env_state.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.env_state[i] = static_cast<StateId>(i);
  return a;
}

namespace {

std::vector<ExprPtr> observed_formulas(const Gr1Liveness& l) {
  std::vector<ExprPtr> obs = l.assumptions;
  obs.insert(obs.end(), l.guarantees.begin(), l.guarantees.end());
  return obs;
}

std::set<std::string> env_labels(const ControlProblem& p) {
  return std::set<std::string>(p.env.alphabet().begin(), p.env.alphabet().end());
}

}  // namespace

GameArena build_arena(const ControlProblem& p) {
  const auto labels = env_labels(p);
  Monitor m = compile_monitor(p.safety, p.fluents, labels, observed_formulas(p.liveness));
  Lts prod = compose(p.env, m.lts);
  GameArena a;
  a.labels = prod.alphabet();
  a.initial = prod.initial();
  const std::size_t n = prod.num_states();
  a.offsets.assign(n + 1, 0);
  a.error.assign(n, 0);
  a.env_state.resize(n);
  const std::size_t na = p.liveness.assumptions.size(), ng = p.liveness.guarantees.size();
  a.assumptions.assign(na, std::vector<char>(n, 0));
  a.guarantees.assign(ng, std::vector<char>(n, 0));
  std::vector<char> ctrl_label(a.labels.size(), 0);
  for (LabelId l = 0; l < a.labels.size(); ++l) ctrl_label[l] = p.alphabet.is_controlled(a.labels[l]);
  a.moves.reserve(prod.num_transitions());
  for (StateId s = 0; s < n; ++s) {
    const auto& pv = prod.provenance(s);
    StateId es = pv[0], ms = pv[1];
    a.env_state[s] = es;
    a.error[s] = m.is_error(ms);
    for (std::size_t i = 0; i < na; ++i) a.assumptions[i][s] = m.observed[ms][i];
    for (std::size_t j = 0; j < ng; ++j) a.guarantees[j][s] = m.observed[ms][na + j];
    const bool passive = es < p.passive.size() && p.passive[es];
    auto out = prod.out(s);
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (k > 0 && out[k].label == out[k - 1].label)
        throw SynthesisError(SynthesisError::Kind::NondeterministicArena,
                             "environment is nondeterministic on '" + a.labels[out[k].label] + "' at state " +
                                 (p.env.name(es).empty() ? std::to_string(es) : p.env.name(es)));
      a.moves.push_back({out[k].label, out[k].target, !passive && ctrl_label[out[k].label] != 0});
    }
    a.offsets[s + 1] = a.moves.size();
  }
  return a;
}

namespace {

class Solver {
 public:
  explicit Solver(const GameArena& a) : a_(a), n_(a.size()) {
    if (a.assumptions.size() > 64) throw SynthesisError(SynthesisError::Kind::BadProblem, "more than 64 assumptions");
    has_unc_.assign(n_, 0);
    rev_off_.assign(n_ + 1, 0);
    for (StateId s = 0; s < n_; ++s)
      for (auto& m : a.out(s)) {
        rev_off_[m.target + 1]++;
        if (!m.controlled) has_unc_[s] = 1;
      }
    for (std::size_t i = 0; i < n_; ++i) rev_off_[i + 1] += rev_off_[i];
    rev_.resize(rev_off_[n_]);
    std::vector<std::size_t> fill(rev_off_.begin(), rev_off_.end() - 1);
    for (StateId s = 0; s < n_; ++s)
      for (auto& m : a.out(s)) rev_[fill[m.target]++] = {s, m.controlled};
    assumptions_ = a.assumptions;
    if (assumptions_.empty()) assumptions_.push_back(std::vector<char>(n_, 1));
    guarantees_ = a.guarantees;
    if (guarantees_.empty()) guarantees_.push_back(std::vector<char>(n_, 1));
  }

  bool in_cpre(StateId s, const std::vector<char>& t) const {
    bool ctrl_ok = false;
    for (auto& m : a_.out(s)) {
      if (m.controlled) ctrl_ok = ctrl_ok || t[m.target];
      else if (!t[m.target]) return false;
    }
    return has_unc_[s] || ctrl_ok;
  }

  std::vector<char> cpre(const std::vector<char>& t) const {
    std::vector<char> r(n_, 0);
    for (StateId s = 0; s < n_; ++s) r[s] = in_cpre(s, t);
    return r;
  }

  // Greatest X with X = start | (notA & Z & CPre(X)).
  std::vector<char> nu_x(const std::vector<char>& start, const std::vector<char>& a_i, const std::vector<char>& z) {
    std::vector<char> x(n_, 0);
    for (StateId s = 0; s < n_; ++s) x[s] = start[s] || (!a_i[s] && z[s]);
    std::vector<int> bad(n_, 0), good(n_, 0);
    std::vector<StateId> queue;
    for (StateId s = 0; s < n_; ++s) {
      if (!x[s] || start[s]) continue;
      for (auto& m : a_.out(s)) {
        if (m.controlled) good[s] += x[m.target];
        else bad[s] += !x[m.target];
      }
      if (bad[s] > 0 || (!has_unc_[s] && good[s] == 0)) queue.push_back(s);
    }
    while (!queue.empty()) {
      StateId s = queue.back();
      queue.pop_back();
      if (!x[s]) continue;
      x[s] = 0;
      for (std::size_t k = rev_off_[s]; k < rev_off_[s + 1]; ++k) {
        auto [p, controlled] = rev_[k];
        if (!x[p] || start[p]) continue;
        if (controlled) --good[p];
        else ++bad[p];
        if (bad[p] > 0 || (!has_unc_[p] && good[p] == 0)) queue.push_back(p);
      }
    }
    return x;
  }

  // mu Y. union_i nu X. (G_j & CPre(Z)) | CPre(Y) | (!A_i & CPre(X)).
  std::vector<char> mu_y(std::size_t j, const std::vector<char>& z, std::vector<std::uint32_t>* rank,
                         std::vector<std::uint64_t>* mask) {
    std::vector<char> gz = cpre(z);
    for (StateId s = 0; s < n_; ++s) gz[s] = gz[s] && guarantees_[j][s] && z[s];
    std::vector<char> y(n_, 0);
    if (rank) {
      rank->assign(n_, kUnranked);
      mask->assign(n_, 0);
    }
    for (std::uint32_t r = 1;; ++r) {
      std::vector<char> start = cpre(y);
      for (StateId s = 0; s < n_; ++s) start[s] = (start[s] && z[s]) || gz[s];
      std::vector<char> ny(n_, 0);
      std::vector<std::uint64_t> m(rank ? n_ : 0, 0);
      for (std::size_t i = 0; i < assumptions_.size(); ++i) {
        auto x = nu_x(start, assumptions_[i], z);
        for (StateId s = 0; s < n_; ++s) {
          if (!x[s]) continue;
          ny[s] = 1;
          if (rank && !y[s]) m[s] |= std::uint64_t(1) << i;
        }
      }
      bool grew = false;
      for (StateId s = 0; s < n_; ++s) {
        assert(!y[s] || ny[s]);
        if (ny[s] && !y[s]) {
          grew = true;
          if (rank) {
            (*rank)[s] = r;
            (*mask)[s] = m[s];
          }
        }
      }
      y.swap(ny);
      if (!grew) return y;
    }
  }

  std::vector<char> solve(const SolveOptions& opts) {
    std::vector<char> z(n_, 0);
    for (StateId s = 0; s < n_; ++s) z[s] = !a_.error[s];
    for (int iter = 1;; ++iter) {
      bool changed = false;
      for (std::size_t j = 0; j < guarantees_.size(); ++j) {
        auto y = mu_y(j, z, nullptr, nullptr);
        for (StateId s = 0; s < n_; ++s)
          if (z[s] && !y[s]) {
            z[s] = 0;
            changed = true;
          }
      }
      if (opts.progress) opts.progress(iter, static_cast<std::size_t>(std::count(z.begin(), z.end(), 1)));
      if (!changed) return z;
    }
  }

  static constexpr std::uint32_t kUnranked = std::numeric_limits<std::uint32_t>::max();

  const GameArena& a_;
  std::size_t n_;
  std::vector<char> has_unc_;
  std::vector<std::size_t> rev_off_;
  std::vector<std::pair<StateId, bool>> rev_;
  std::vector<std::vector<char>> assumptions_, guarantees_;
};

Witness safety_witness(const GameArena& a, const Solver& sv) {
  // Environment attractor to error or deadlock states.
  const std::size_t n = a.size();
  std::vector<std::uint32_t> layer(n, std::numeric_limits<std::uint32_t>::max());
  for (StateId s = 0; s < n; ++s)
    if (a.error[s] || a.out(s).empty()) layer[s] = 0;
  for (std::uint32_t k = 1;; ++k) {
    bool grew = false;
    for (StateId s = 0; s < n; ++s) {
      if (layer[s] < k) continue;
      bool unc_in = false, all_ctrl_in = true, any_ctrl = false;
      for (auto& m : a.out(s)) {
        bool in = layer[m.target] < k;
        if (!m.controlled) unc_in = unc_in || in;
        else {
          any_ctrl = true;
          all_ctrl_in = all_ctrl_in && in;
        }
      }
      if (unc_in || (!sv.has_unc_[s] && any_ctrl && all_ctrl_in)) {
        layer[s] = k;
        grew = true;
      }
    }
    if (!grew) break;
  }
  Witness w;
  if (layer[a.initial] == std::numeric_limits<std::uint32_t>::max()) {
    w.reason = "liveness";
    return w;
  }
  w.reason = "safety";
  StateId s = a.initial;
  while (layer[s] > 0) {
    const GameArena::Move* pick = nullptr;
    for (auto& m : a.out(s)) {
      if (layer[m.target] >= layer[s]) continue;
      if (!m.controlled) { pick = &m; break; }
      if (!pick) pick = &m;
    }
    w.trace.push_back(a.labels[pick->label]);
    s = pick->target;
  }
  return w;
}

}  // namespace

std::vector<char> winning_region(const GameArena& a) {
  Solver sv(a);
  return sv.solve({});
}

Verdict solve_gr1(const GameArena& a, const SolveOptions& opts) {
  Solver sv(a);
  auto z = sv.solve(opts);
  Verdict v;
  v.arena_states = a.size();
  v.winning_states = static_cast<std::size_t>(std::count(z.begin(), z.end(), 1));
  v.realizable = z[a.initial] != 0;
  if (!v.realizable) {
    v.witness = safety_witness(a, sv);
    return v;
  }
  if (!opts.extract) return v;

  const std::size_t m = sv.guarantees_.size();
  std::vector<std::vector<std::uint32_t>> rank(m);
  std::vector<std::vector<std::uint64_t>> mask(m);
  for (std::size_t j = 0; j < m; ++j) sv.mu_y(j, z, &rank[j], &mask[j]);

  Controller c;
  std::set<std::string> all(a.labels.begin(), a.labels.end());
  Lts::Builder b(all);
  std::unordered_map<std::uint64_t, StateId> ids;
  std::deque<std::pair<StateId, std::uint32_t>> work;
  auto get = [&](StateId s, std::uint32_t j) {
    std::uint64_t key = (std::uint64_t(s) << 32) | j;
    auto [it, fresh] = ids.try_emplace(key, 0);
    if (fresh) {
      it->second = b.add_state();
      c.arena_state.push_back(s);
      c.memory.push_back(j);
      c.selection.emplace_back();
      work.emplace_back(s, j);
    }
    return it->second;
  };
  b.set_initial(get(a.initial, 0));
  while (!work.empty()) {
    auto [s, j] = work.front();
    work.pop_front();
    StateId cs = ids.at((std::uint64_t(s) << 32) | j);
    std::uint32_t nj = j;
    const auto& rk = rank[j];
    const std::uint32_t r = rk[s];
    enum class Mode { Z, Down, X } mode = Mode::Z;
    int xi = 0;
    if (sv.guarantees_[j][s]) {
      nj = static_cast<std::uint32_t>((j + 1) % m);
    } else {
      bool down = true, any_ctrl_down = false;
      for (auto& mv : a.out(s)) {
        bool lower = rk[mv.target] < r;
        if (!mv.controlled && !lower) down = false;
        if (mv.controlled && lower) any_ctrl_down = true;
      }
      if (down && (sv.has_unc_[s] || any_ctrl_down)) {
        mode = Mode::Down;
      } else {
        mode = Mode::X;
        while (xi < 63 && !(mask[j][s] >> xi & 1)) ++xi;
      }
    }
    auto in_target = [&](StateId t) -> bool {
      switch (mode) {
        case Mode::Z: return z[t] != 0;
        case Mode::Down: return rk[t] < r;
        case Mode::X: return rk[t] < r || (rk[t] == r && (mask[j][t] >> xi & 1));
      }
      return false;
    };
    const GameArena::Move* pick = nullptr;
    for (auto& mv : a.out(s)) {
      if (!mv.controlled || !in_target(mv.target)) continue;
      if (!pick || rank[nj][mv.target] < rank[nj][pick->target]) pick = &mv;
    }
    if (pick) {
      c.selection[cs] = pick->label;
      StateId t = get(pick->target, nj);
      b.add_transition(cs, pick->label, t);
    }
    for (auto& mv : a.out(s)) {
      if (mv.controlled) continue;
      assert(z[mv.target]);
      StateId t = get(mv.target, nj);
      b.add_transition(cs, mv.label, t);
    }
  }
  c.lts = b.build();
  v.controller = std::move(c);
  return v;
}

Verdict solve(const ControlProblem& p, const SolveOptions& opts) {
  GameArena a = build_arena(p);
  Verdict v = solve_gr1(a, opts);
  if (v.controller) v.controller->alphabet = p.alphabet;
  return v;
}

// ---------------------------------------------------------------- verification

namespace {

// Iterative Tarjan over the states accepted by `keep`.
std::vector<int> scc_ids(const Lts& g, const std::vector<char>& keep, int& count) {
  const std::size_t n = g.num_states();
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<char> on(n, 0);
  std::vector<StateId> stack;
  std::vector<std::pair<StateId, std::size_t>> call;
  int next = 0;
  count = 0;
  for (StateId root = 0; root < n; ++root) {
    if (!keep[root] || index[root] >= 0) continue;
    call.push_back({root, 0});
    index[root] = low[root] = next++;
    stack.push_back(root);
    on[root] = 1;
    while (!call.empty()) {
      auto& [v, k] = call.back();
      auto out = g.out(v);
      if (k < out.size()) {
        StateId w = out[k++].target;
        if (!keep[w]) continue;
        if (index[w] < 0) {
          index[w] = low[w] = next++;
          stack.push_back(w);
          on[w] = 1;
          call.push_back({w, 0});
        } else if (on[w]) {
          low[v] = std::min(low[v], index[w]);
        }
      } else {
        StateId done = v;
        call.pop_back();
        if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
        if (low[done] == index[done]) {
          StateId w;
          do {
            w = stack.back();
            stack.pop_back();
            on[w] = 0;
            comp[w] = count;
          } while (w != done);
          ++count;
        }
      }
    }
  }
  return comp;
}

// Shortest path (labels) from `from` to any state satisfying `goal`, moving
// only through `allowed` states.
std::optional<std::pair<std::vector<std::string>, StateId>> bfs_path(
    const Lts& g, StateId from, const std::function<bool(StateId)>& goal, const std::function<bool(StateId)>& allowed,
    bool require_step = false) {
  std::vector<std::pair<StateId, LabelId>> parent(g.num_states(), {kNoState, 0});
  std::vector<char> seen(g.num_states(), 0);
  std::deque<StateId> q;
  if (!require_step && goal(from)) return std::make_pair(std::vector<std::string>{}, from);
  q.push_back(from);
  seen[from] = 1;
  while (!q.empty()) {
    StateId s = q.front();
    q.pop_front();
    for (const Edge& e : g.out(s)) {
      if (!allowed(e.target)) continue;
      if (goal(e.target)) {
        std::vector<std::string> labels{g.label(e.label)};
        for (StateId cur = s; cur != from; cur = parent[cur].first) labels.push_back(g.label(parent[cur].second));
        std::reverse(labels.begin(), labels.end());
        return std::make_pair(labels, e.target);
      }
      if (seen[e.target]) continue;
      seen[e.target] = 1;
      parent[e.target] = {s, e.label};
      q.push_back(e.target);
    }
  }
  return std::nullopt;
}

}  // namespace

VerifyReport verify_closed_loop(const ControlProblem& p, const Controller& c) {
  VerifyReport rep;
  auto fail = [&](std::string msg) {
    rep.ok = false;
    rep.violations.push_back(std::move(msg));
  };
  Lts closed = compose(p.env, c.lts);
  // legality: the controller may not refuse environment moves and selects at most one command
  for (StateId s = 0; s < closed.num_states() && rep.violations.size() < 20; ++s) {
    StateId es = closed.provenance(s)[0], cs = closed.provenance(s)[1];
    const bool passive = es < p.passive.size() && p.passive[es];
    std::set<std::string> ctrl_enabled;
    for (const Edge& e : p.env.out(es)) {
      const std::string& l = p.env.label(e.label);
      bool controlled = !passive && p.alphabet.is_controlled(l);
      if (controlled) continue;
      auto cl = c.lts.label_id(l);
      if (!cl || !c.lts.enabled(cs, *cl))
        fail("controller state " + std::to_string(cs) + " blocks environment event " + l);
    }
    for (const Edge& e : c.lts.out(cs)) {
      const std::string& l = c.lts.label(e.label);
      if (p.alphabet.is_controlled(l) && p.env.has_label(l) && !passive) ctrl_enabled.insert(l);
    }
    if (ctrl_enabled.size() > 1)
      fail("controller state " + std::to_string(cs) + " enables " + std::to_string(ctrl_enabled.size()) +
           " commands at once");
  }

  const auto labels = env_labels(p);
  Monitor m = compile_monitor(p.safety, p.fluents, labels, observed_formulas(p.liveness));
  Lts prod = compose(closed, m.lts);
  rep.product_states = prod.num_states();
  const std::size_t n = prod.num_states();
  auto mon = [&](StateId s) { return prod.provenance(s)[1]; };
  auto is_err = [&](StateId s) { return m.is_error(mon(s)); };

  for (StateId s = 0; s < n; ++s) {
    if (is_err(s)) {
      auto path = bfs_path(prod, prod.initial(), is_err, [](StateId) { return true; });
      std::string t;
      if (path)
        for (auto& l : path->first) t += l + " ";
      fail("safety violated after: " + t);
      if (path) rep.counterexample = LassoTrace{path->first, {}};
      break;
    }
  }
  for (StateId s = 0; s < n; ++s) {
    if (!is_err(s) && prod.out(s).empty()) {
      auto path = bfs_path(prod, prod.initial(), [&](StateId x) { return x == s; }, [](StateId) { return true; });
      std::string t;
      if (path)
        for (auto& l : path->first) t += l + " ";
      fail("deadlock after: " + t);
      if (!rep.counterexample && path) rep.counterexample = LassoTrace{path->first, {}};
      break;
    }
  }

  const std::size_t na = p.liveness.assumptions.size(), ng = p.liveness.guarantees.size();
  for (std::size_t j = 0; j < ng && rep.ok; ++j) {
    std::vector<char> keep(n, 0);
    for (StateId s = 0; s < n; ++s) keep[s] = !is_err(s) && !m.observed[mon(s)][na + j];
    int count = 0;
    auto comp = scc_ids(prod, keep, count);
    std::vector<char> nontrivial(count, 0);
    std::vector<std::vector<char>> hits(count, std::vector<char>(na, 0));
    for (StateId s = 0; s < n; ++s) {
      if (comp[s] < 0) continue;
      for (const Edge& e : prod.out(s))
        if (comp[e.target] == comp[s]) nontrivial[comp[s]] = 1;
      for (std::size_t i = 0; i < na; ++i)
        if (m.observed[mon(s)][i]) hits[comp[s]][i] = 1;
    }
    for (int k = 0; k < count; ++k) {
      if (!nontrivial[k] || std::count(hits[k].begin(), hits[k].end(), 1) != static_cast<long>(na)) continue;
      // Lasso: reach the component, then tour every assumption and come back.
      StateId entry = kNoState;
      for (StateId s = 0; s < n && entry == kNoState; ++s)
        if (comp[s] == k) entry = s;
      auto inside = [&](StateId x) { return comp[x] == k; };
      LassoTrace lasso;
      if (auto pre = bfs_path(prod, prod.initial(), [&](StateId x) { return x == entry; }, [](StateId) { return true; }))
        lasso.prefix = pre->first;
      StateId cur = entry;
      for (std::size_t i = 0; i < na; ++i) {
        auto leg = bfs_path(prod, cur, [&](StateId x) { return m.observed[mon(x)][i] != 0; }, inside);
        if (!leg) continue;
        lasso.cycle.insert(lasso.cycle.end(), leg->first.begin(), leg->first.end());
        cur = leg->second;
      }
      if (auto back = bfs_path(prod, cur, [&](StateId x) { return x == entry; }, inside, lasso.cycle.empty()))
        lasso.cycle.insert(lasso.cycle.end(), back->first.begin(), back->first.end());
      fail("guarantee " + std::to_string(j) + " (" + to_string(*p.liveness.guarantees[j]) +
           ") can be avoided forever on a fair cycle");
      rep.counterexample = lasso;
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------- elaboration

ControlProblem control_problem(const Document& doc, const std::string& name) {
  const ControlProblemDecl* d = doc.control_problem(name);
  if (!d) throw ElaborationError({Diagnostic::Kind::UnresolvedName, "no control problem '" + name + "'", {}});
  ControlProblem p;
  p.env = build_system(doc, d->env);
  std::set<std::string> ctrl;
  if (d->controllable) ctrl = *d->controllable;
  else if (doc.controllable) ctrl = *doc.controllable;
  for (auto& l : p.env.alphabet()) {
    if (ctrl.count(l)) p.alphabet.controlled.insert(l);
    else p.alphabet.uncontrolled.insert(l);
  }
  p.fluents = doc.fluent_defs();
  for (auto& s : d->safety) {
    auto a = doc.assertion(s);
    if (!a) throw ElaborationError({Diagnostic::Kind::UnresolvedName, "no assertion '" + s + "'", d->span});
    p.safety.push_back({a->formula, {}, {}});
  }
  if (!d->liveness.empty()) {
    auto l = doc.liveness_decl(d->liveness);
    if (!l) throw ElaborationError({Diagnostic::Kind::UnresolvedName, "no liveness '" + d->liveness + "'", d->span});
    p.liveness = {l->assumptions, l->guarantees};
  }
  return p;
}

// ---------------------------------------------------------------- tables

std::string write_controller(const Controller& c) {
  std::ostringstream os;
  os << "# controller table\n";
  os << "controlled";
  for (auto& l : c.alphabet.controlled) os << " " << l;
  os << "\nuncontrolled";
  for (auto& l : c.alphabet.uncontrolled) os << " " << l;
  os << "\nstates " << c.lts.num_states() << "\ninitial " << c.lts.initial() << "\n";
  for (StateId s = 0; s < c.lts.num_states(); ++s) {
    os << s << " " << c.selected(s).value_or("-");
    for (const Edge& e : c.lts.out(s)) os << " " << c.lts.label(e.label) << ":" << e.target;
    os << "\n";
  }
  return os.str();
}

Controller read_controller(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Controller c;
  std::size_t n = 0;
  StateId init = 0;
  std::vector<std::tuple<StateId, std::string, StateId>> edges;
  std::map<StateId, std::string> sel;
  auto bad = [&](const std::string& why) { throw std::runtime_error("controller table: " + why + ": " + line); };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "controlled" || head == "uncontrolled") {
      std::string l;
      auto& dst = head == "controlled" ? c.alphabet.controlled : c.alphabet.uncontrolled;
      while (ls >> l) dst.insert(l);
    } else if (head == "states") {
      if (!(ls >> n)) bad("bad state count");
    } else if (head == "initial") {
      if (!(ls >> init)) bad("bad initial state");
    } else {
      StateId s;
      try {
        s = static_cast<StateId>(std::stoul(head));
      } catch (...) {
        bad("bad row");
      }
      if (s >= n) bad("state out of range");
      std::string pick;
      ls >> pick;
      if (pick != "-") sel[s] = pick;
      std::string cell;
      while (ls >> cell) {
        auto colon = cell.rfind(':');
        if (colon == std::string::npos) bad("bad transition");
        StateId t = static_cast<StateId>(std::stoul(cell.substr(colon + 1)));
        if (t >= n) bad("target out of range");
        edges.emplace_back(s, cell.substr(0, colon), t);
      }
    }
  }
  Lts::Builder b(c.alphabet.all());
  for (std::size_t i = 0; i < n; ++i) b.add_state();
  for (auto& [s, l, t] : edges) b.add_transition(s, l, t);
  if (n == 0) throw std::runtime_error("controller table: no states");
  if (init >= n) throw std::runtime_error("controller table: initial state out of range");
  b.set_initial(init);
  c.lts = b.build();
  c.selection.assign(n, std::nullopt);
  for (auto& [s, l] : sel) {
    auto id = c.lts.label_id(l);
    if (!id) throw std::runtime_error("controller table: unknown selected label " + l);
    c.selection[s] = *id;
  }
  return c;
}

std::string controller_dot(const Controller& c) {
  std::ostringstream os;
  os << "digraph controller {\n  rankdir=LR;\n  __init [shape=point];\n  __init -> s" << c.lts.initial() << ";\n";
  for (StateId s = 0; s < c.lts.num_states(); ++s)
    os << "  s" << s << " [label=\"" << s << "\\n" << c.selected(s).value_or("-") << "\"];\n";
  for (StateId s = 0; s < c.lts.num_states(); ++s)
    for (const Edge& e : c.lts.out(s)) {
      const std::string& l = c.lts.label(e.label);
      os << "  s" << s << " -> s" << e.target << " [label=\"" << l << "\""
         << (c.alphabet.is_controlled(l) ? ", style=bold" : ", style=dashed") << "];\n";
    }
  os << "}\n";
  return os.str();
}

}  // namespace skyweave
