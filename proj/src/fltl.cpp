#include "skyweave/fltl.hpp"

#include <deque>
#include <unordered_map>

namespace skyweave {

namespace fx {
namespace {
ExprPtr mk(Expr::Op op, std::vector<ExprPtr> args = {}, std::string name = {}) {
  return std::make_shared<const Expr>(Expr{op, std::move(name), std::move(args)});
}
}  // namespace
ExprPtr t() { return mk(Expr::Op::True); }
ExprPtr f() { return mk(Expr::Op::False); }
ExprPtr atom(std::string name) { return mk(Expr::Op::Atom, {}, std::move(name)); }
ExprPtr neg(ExprPtr a) { return mk(Expr::Op::Not, {std::move(a)}); }
ExprPtr conj(ExprPtr a, ExprPtr b) { return mk(Expr::Op::And, {std::move(a), std::move(b)}); }
ExprPtr disj(ExprPtr a, ExprPtr b) { return mk(Expr::Op::Or, {std::move(a), std::move(b)}); }
ExprPtr implies(ExprPtr a, ExprPtr b) { return mk(Expr::Op::Implies, {std::move(a), std::move(b)}); }
ExprPtr always(ExprPtr a) { return mk(Expr::Op::Always, {std::move(a)}); }
ExprPtr eventually(ExprPtr a) { return mk(Expr::Op::Eventually, {std::move(a)}); }
ExprPtr wuntil(ExprPtr a, ExprPtr b) { return mk(Expr::Op::WeakUntil, {std::move(a), std::move(b)}); }
ExprPtr conj(const std::vector<ExprPtr>& xs) {
  if (xs.empty()) return t();
  ExprPtr r = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) r = conj(r, xs[i]);
  return r;
}
ExprPtr disj(const std::vector<ExprPtr>& xs) {
  if (xs.empty()) return f();
  ExprPtr r = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) r = disj(r, xs[i]);
  return r;
}
}  // namespace fx

bool is_boolean(const Expr& e) {
  switch (e.op) {
    case Expr::Op::Always:
    case Expr::Op::Eventually:
    case Expr::Op::WeakUntil:
      return false;
    default:
      for (auto& a : e.args)
        if (!is_boolean(*a)) return false;
      return true;
  }
}

std::string to_string(const Expr& e) {
  switch (e.op) {
    case Expr::Op::True: return "true";
    case Expr::Op::False: return "false";
    case Expr::Op::Atom: return e.name;
    case Expr::Op::Not: return "!" + to_string(*e.args[0]);
    case Expr::Op::And: return "(" + to_string(*e.args[0]) + " && " + to_string(*e.args[1]) + ")";
    case Expr::Op::Or: return "(" + to_string(*e.args[0]) + " || " + to_string(*e.args[1]) + ")";
    case Expr::Op::Implies: return "(" + to_string(*e.args[0]) + " -> " + to_string(*e.args[1]) + ")";
    case Expr::Op::Always: return "[]" + to_string(*e.args[0]);
    case Expr::Op::Eventually: return "<>" + to_string(*e.args[0]);
    case Expr::Op::WeakUntil: return "(" + to_string(*e.args[0]) + " W " + to_string(*e.args[1]) + ")";
  }
  return "?";
}

void collect_atoms(const Expr& e, std::set<std::string>& out) {
  if (e.op == Expr::Op::Atom) out.insert(e.name);
  for (auto& a : e.args) collect_atoms(*a, out);
}

namespace {
[[noreturn]] void unsupported(const Expr& e) {
  throw FltlError(FltlError::Kind::UnsupportedFragment, "not in the safety fragment: " + to_string(e));
}

void classify_always(const ExprPtr& x, std::vector<SafetyPart>& out) {
  if (is_boolean(*x)) {
    out.push_back({SafetyPart::Kind::Always, nullptr, x, nullptr});
    return;
  }
  if (x->op == Expr::Op::And) {
    classify_always(x->args[0], out);
    classify_always(x->args[1], out);
    return;
  }
  if (x->op == Expr::Op::WeakUntil && is_boolean(*x->args[0]) && is_boolean(*x->args[1])) {
    out.push_back({SafetyPart::Kind::ImplWeakUntil, fx::t(), x->args[0], x->args[1]});
    return;
  }
  if (x->op == Expr::Op::Implies && is_boolean(*x->args[0])) {
    const auto& w = x->args[1];
    if (w->op == Expr::Op::WeakUntil && is_boolean(*w->args[0]) && is_boolean(*w->args[1])) {
      out.push_back({SafetyPart::Kind::ImplWeakUntil, x->args[0], w->args[0], w->args[1]});
      return;
    }
  }
  unsupported(*x);
}

void classify_into(const ExprPtr& e, std::vector<SafetyPart>& out) {
  switch (e->op) {
    case Expr::Op::True:
      return;
    case Expr::Op::And:
      classify_into(e->args[0], out);
      classify_into(e->args[1], out);
      return;
    case Expr::Op::Always:
      classify_always(e->args[0], out);
      return;
    case Expr::Op::WeakUntil:
      if (is_boolean(*e->args[0]) && is_boolean(*e->args[1])) {
        out.push_back({SafetyPart::Kind::WeakUntil, nullptr, e->args[0], e->args[1]});
        return;
      }
      unsupported(*e);
    default:
      unsupported(*e);
  }
}
}  // namespace

std::vector<SafetyPart> classify_safety(const ExprPtr& e) {
  std::vector<SafetyPart> out;
  classify_into(e, out);
  return out;
}

Valuation initial_valuation(const std::vector<FluentDef>& defs) {
  Valuation v;
  for (auto& d : defs)
    if (!v.emplace(d.name, d.initially).second)
      throw FltlError(FltlError::Kind::DuplicateFluentName, "duplicate fluent '" + d.name + "'");
  return v;
}

Valuation advance(const std::vector<FluentDef>& defs, const Valuation& v, const std::string& event) {
  Valuation r = v;
  for (auto& d : defs) {
    if (d.init.count(event)) r[d.name] = true;
    else if (d.term.count(event)) r[d.name] = false;
  }
  return r;
}

bool eval(const Expr& e, const Valuation& v, const std::string& last_event) {
  switch (e.op) {
    case Expr::Op::True: return true;
    case Expr::Op::False: return false;
    case Expr::Op::Atom: {
      auto it = v.find(e.name);
      if (it != v.end()) return it->second;
      return e.name == last_event;
    }
    case Expr::Op::Not: return !eval(*e.args[0], v, last_event);
    case Expr::Op::And: return eval(*e.args[0], v, last_event) && eval(*e.args[1], v, last_event);
    case Expr::Op::Or: return eval(*e.args[0], v, last_event) || eval(*e.args[1], v, last_event);
    case Expr::Op::Implies: return !eval(*e.args[0], v, last_event) || eval(*e.args[1], v, last_event);
    default:
      throw FltlError(FltlError::Kind::UnsupportedFragment, "temporal operator in state formula: " + to_string(e));
  }
}

TraceVerdict check_trace(const ExprPtr& safety, const std::vector<FluentDef>& defs,
                         const std::vector<std::string>& trace) {
  auto parts = classify_safety(safety);
  std::vector<Valuation> vals;
  Valuation v = initial_valuation(defs);
  for (auto& ev : trace) {
    v = advance(defs, v, ev);
    vals.push_back(v);
  }
  const std::size_t n = trace.size();
  auto at = [&](const ExprPtr& x, std::size_t i) { return eval(*x, vals[i], trace[i]); };
  std::size_t first = n;
  for (auto& p : parts) {
    std::size_t bad = n;
    switch (p.kind) {
      case SafetyPart::Kind::Always:
        for (std::size_t i = 0; i < n && bad == n; ++i)
          if (!at(p.hold, i)) bad = i;
        break;
      case SafetyPart::Kind::WeakUntil:
        for (std::size_t i = 0; i < n; ++i) {
          if (at(p.release, i)) break;
          if (!at(p.hold, i)) { bad = i; break; }
        }
        break;
      case SafetyPart::Kind::ImplWeakUntil:
        for (std::size_t i = 0; i < n && bad == n; ++i) {
          if (!at(p.trigger, i)) continue;
          for (std::size_t k = i; k < n; ++k) {
            if (at(p.release, k)) break;
            if (!at(p.hold, k)) { bad = std::min(bad, k); break; }
          }
        }
        break;
    }
    first = std::min(first, bad);
  }
  if (first == n) return {};
  return {false, first};
}

namespace {

// Boolean formula compiled against fluent slots and label ids.
struct CExpr {
  enum class K { T, F, Fluent, Event, Not, And, Or, Implies } k;
  int ref = 0;
  std::vector<CExpr> kids;

  bool eval(const std::string& bits, int event) const {
    switch (k) {
      case K::T: return true;
      case K::F: return false;
      case K::Fluent: return bits[ref] == '1';
      case K::Event: return ref == event;
      case K::Not: return !kids[0].eval(bits, event);
      case K::And: return kids[0].eval(bits, event) && kids[1].eval(bits, event);
      case K::Or: return kids[0].eval(bits, event) || kids[1].eval(bits, event);
      case K::Implies: return !kids[0].eval(bits, event) || kids[1].eval(bits, event);
    }
    return false;
  }
};

struct Resolver {
  const std::map<std::string, std::size_t>& def_index;
  const std::vector<std::string>& labels;
  std::map<std::size_t, int>& fluent_slot;  // def index -> slot

  CExpr operator()(const Expr& e) {
    switch (e.op) {
      case Expr::Op::True: return {CExpr::K::T};
      case Expr::Op::False: return {CExpr::K::F};
      case Expr::Op::Atom: {
        if (auto it = def_index.find(e.name); it != def_index.end()) {
          auto [s, fresh] = fluent_slot.try_emplace(it->second, static_cast<int>(fluent_slot.size()));
          return {CExpr::K::Fluent, s->second};
        }
        auto it = std::lower_bound(labels.begin(), labels.end(), e.name);
        if (it != labels.end() && *it == e.name)
          return {CExpr::K::Event, static_cast<int>(it - labels.begin())};
        throw FltlError(FltlError::Kind::UnknownFluent, "unknown fluent or event '" + e.name + "'");
      }
      case Expr::Op::Not: return {CExpr::K::Not, 0, {(*this)(*e.args[0])}};
      case Expr::Op::And: return {CExpr::K::And, 0, {(*this)(*e.args[0]), (*this)(*e.args[1])}};
      case Expr::Op::Or: return {CExpr::K::Or, 0, {(*this)(*e.args[0]), (*this)(*e.args[1])}};
      case Expr::Op::Implies: return {CExpr::K::Implies, 0, {(*this)(*e.args[0]), (*this)(*e.args[1])}};
      default:
        throw FltlError(FltlError::Kind::UnsupportedFragment, "temporal operator in state formula: " + to_string(e));
    }
  }
};

void collect_events(const CExpr& c, std::set<int>& out) {
  if (c.k == CExpr::K::Event) out.insert(c.ref);
  for (auto& k : c.kids) collect_events(k, out);
}

struct CPart {
  SafetyPart::Kind kind;
  CExpr trigger, hold, release;
  int bit = -1;  // pending / active bit
  int scope = 0;
};

struct CScope {
  int arm_label = -1, disarm_label = -1;
  int arm_bit = -1, live_bit = -1;
};

}  // namespace

Monitor compile_monitor(const std::vector<ScopedSafety>& parts, const std::vector<FluentDef>& defs,
                        const std::set<std::string>& alphabet, const std::vector<ExprPtr>& observe) {
  std::map<std::string, std::size_t> def_index;
  for (std::size_t i = 0; i < defs.size(); ++i)
    if (!def_index.emplace(defs[i].name, i).second)
      throw FltlError(FltlError::Kind::DuplicateFluentName, "duplicate fluent '" + defs[i].name + "'");
  const std::vector<std::string> labels(alphabet.begin(), alphabet.end());
  auto label_index = [&](const std::string& l) -> int {
    auto it = std::lower_bound(labels.begin(), labels.end(), l);
    return (it != labels.end() && *it == l) ? static_cast<int>(it - labels.begin()) : -1;
  };

  std::map<std::size_t, int> fluent_slot;
  Resolver resolve{def_index, labels, fluent_slot};

  std::vector<CScope> scopes;
  std::vector<CPart> cparts;
  for (auto& sp : parts) {
    CScope sc;
    if (!sp.arm_on.empty()) sc.arm_label = label_index(sp.arm_on);
    if (!sp.disarm_on.empty()) sc.disarm_label = label_index(sp.disarm_on);
    // An arm event outside the alphabet never happens: the scope stays closed.
    if (!sp.arm_on.empty() && sc.arm_label < 0) continue;
    int scope_id = static_cast<int>(scopes.size());
    scopes.push_back(sc);
    for (auto& p : classify_safety(sp.formula)) {
      CPart c{p.kind, {CExpr::K::T}, resolve(*p.hold), {CExpr::K::F}};
      if (p.trigger) c.trigger = resolve(*p.trigger);
      if (p.release) c.release = resolve(*p.release);
      c.scope = scope_id;
      cparts.push_back(std::move(c));
    }
  }
  std::vector<CExpr> cobs;
  for (auto& o : observe) cobs.push_back(resolve(*o));
  std::set<int> obs_events;
  for (auto& c : cobs) collect_events(c, obs_events);
  std::map<int, int> obs_event_code;  // label -> code 1..k
  for (int e : obs_events) obs_event_code.emplace(e, static_cast<int>(obs_event_code.size()) + 1);

  // Bit layout: fluent slots, then part bits, then scope bits.
  const int nf = static_cast<int>(fluent_slot.size());
  int next = nf;
  for (auto& c : cparts)
    if (c.kind != SafetyPart::Kind::Always) c.bit = next++;
  for (auto& s : scopes) {
    if (s.arm_label >= 0) s.arm_bit = next++;
    if (s.disarm_label >= 0) s.live_bit = next++;
  }
  const int nbits = next;

  // Per label: fluent slot updates.
  std::vector<std::vector<std::pair<int, char>>> updates(labels.size());
  for (auto& [di, slot] : fluent_slot) {
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (defs[di].init.count(labels[l])) updates[l].emplace_back(slot, '1');
      else if (defs[di].term.count(labels[l])) updates[l].emplace_back(slot, '0');
    }
  }

  std::string init(nbits, '0');
  for (auto& [di, slot] : fluent_slot) init[slot] = defs[di].initially ? '1' : '0';
  for (auto& c : cparts)
    if (c.kind == SafetyPart::Kind::WeakUntil) init[c.bit] = '1';
  for (auto& s : scopes)
    if (s.live_bit >= 0) init[s.live_bit] = '1';
  // Trailing byte: code of the last observed event (0 = none).
  init.push_back(0);

  auto scope_active = [&](const std::string& b, const CScope& s) {
    return (s.arm_bit < 0 || b[s.arm_bit] == '1') && (s.live_bit < 0 || b[s.live_bit] == '1');
  };

  Lts::Builder b(alphabet);
  std::unordered_map<std::string, StateId> ids;
  std::vector<std::string> keys;
  std::deque<StateId> work;
  Monitor m;
  auto observed_of = [&](const std::string& key) {
    std::vector<bool> v;
    int code = static_cast<unsigned char>(key.back());
    int ev = -1;
    for (auto& [l, c] : obs_event_code)
      if (c == code) ev = l;
    for (auto& c : cobs) v.push_back(c.eval(key, ev));
    return v;
  };
  auto get = [&](const std::string& key) {
    auto [it, fresh] = ids.try_emplace(key, 0);
    if (fresh) {
      it->second = b.add_state();
      keys.push_back(key);
      m.observed.push_back(observed_of(key));
      work.push_back(it->second);
    }
    return it->second;
  };
  b.set_initial(get(init));
  StateId error = kNoState;
  auto err = [&] {
    if (error == kNoState) {
      error = b.add_state("ERROR");
      keys.emplace_back();
      m.observed.push_back(std::vector<bool>(cobs.size(), false));
      for (auto& l : labels) b.add_transition(error, l, error);
    }
    return error;
  };

  while (!work.empty()) {
    StateId s = work.front();
    work.pop_front();
    const std::string cur = keys[s];
    for (int l = 0; l < static_cast<int>(labels.size()); ++l) {
      std::string nk = cur;
      for (auto& [slot, v] : updates[l]) nk[slot] = v;
      for (auto& sc : scopes) {
        if (sc.arm_label == l) nk[sc.arm_bit] = '1';
        if (sc.disarm_label == l) nk[sc.live_bit] = '0';
      }
      bool bad = false;
      for (auto& c : cparts) {
        const CScope& sc = scopes[c.scope];
        if (!scope_active(nk, sc)) {
          if (sc.live_bit >= 0 && nk[sc.live_bit] == '0' && c.bit >= 0) nk[c.bit] = '0';
          continue;
        }
        switch (c.kind) {
          case SafetyPart::Kind::Always:
            if (!c.hold.eval(nk, l)) bad = true;
            break;
          case SafetyPart::Kind::WeakUntil:
            if (nk[c.bit] == '1') {
              if (c.release.eval(nk, l)) nk[c.bit] = '0';
              else if (!c.hold.eval(nk, l)) bad = true;
            }
            break;
          case SafetyPart::Kind::ImplWeakUntil:
            if (nk[c.bit] == '1' || c.trigger.eval(nk, l)) {
              if (c.release.eval(nk, l)) nk[c.bit] = '0';
              else if (c.hold.eval(nk, l)) nk[c.bit] = '1';
              else bad = true;
            }
            break;
        }
        if (bad) break;
      }
      if (bad) {
        b.add_transition(s, static_cast<LabelId>(l), err());
        continue;
      }
      auto oc = obs_event_code.find(l);
      nk.back() = static_cast<char>(oc == obs_event_code.end() ? 0 : oc->second);
      b.add_transition(s, static_cast<LabelId>(l), get(nk));
    }
  }
  m.lts = b.build();
  m.error = error;
  return m;
}

Lts compile_safety(const ExprPtr& safety, const std::vector<FluentDef>& defs,
                   const std::set<std::string>& alphabet) {
  return compile_monitor({{safety, {}, {}}}, defs, alphabet).lts;
}

}  // namespace skyweave
