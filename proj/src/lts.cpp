#include "skyweave/lts.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>

namespace skyweave {

bool is_valid_label(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '?'))
      return false;
  }
  return s.back() != '.';
}

std::set<std::string> Alphabet::all() const {
  std::set<std::string> r = controlled;
  r.insert(uncontrolled.begin(), uncontrolled.end());
  return r;
}

std::optional<LabelId> Lts::label_id(std::string_view l) const {
  auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), l);
  if (it == alphabet_.end() || *it != l) return std::nullopt;
  return static_cast<LabelId>(it - alphabet_.begin());
}

std::span<const Edge> Lts::out(StateId s) const {
  if (s >= num_states()) throw LtsError(LtsError::Kind::UnknownState, "unknown state " + std::to_string(s));
  return {edges_.data() + offsets_[s], edges_.data() + offsets_[s + 1]};
}

std::span<const Edge> Lts::out(StateId s, LabelId l) const {
  auto all = out(s);
  auto lo = std::lower_bound(all.begin(), all.end(), l,
                             [](const Edge& e, LabelId v) { return e.label < v; });
  auto hi = lo;
  while (hi != all.end() && hi->label == l) ++hi;
  return {lo, hi};
}

bool Lts::deterministic() const {
  for (StateId s = 0; s < num_states(); ++s) {
    auto o = out(s);
    for (std::size_t i = 1; i < o.size(); ++i)
      if (o[i].label == o[i - 1].label) return false;
  }
  return true;
}

const std::vector<StateId>& Lts::provenance(StateId s) const {
  static const std::vector<StateId> empty;
  return s < provenance_.size() ? provenance_[s] : empty;
}

const std::string& Lts::name(StateId s) const {
  static const std::string empty;
  return s < names_.size() ? names_[s] : empty;
}

std::optional<StateId> Lts::find_name(std::string_view n) const {
  for (StateId s = 0; s < names_.size(); ++s)
    if (names_[s] == n) return s;
  return std::nullopt;
}

Lts::Builder::Builder(std::set<std::string> alphabet) {
  for (const auto& l : alphabet) add_label(l);
}

void Lts::Builder::add_label(const std::string& l) {
  if (index_.count(l)) return;
  if (!is_valid_label(l)) throw LtsError(LtsError::Kind::InvalidLabel, "invalid label '" + l + "'");
  index_.emplace(l, static_cast<LabelId>(alphabet_.size()));
  alphabet_.push_back(l);
}

LabelId Lts::Builder::label_id(const std::string& l) const {
  auto it = index_.find(l);
  if (it == index_.end()) throw LtsError(LtsError::Kind::InvalidLabel, "label not in alphabet: " + l);
  return it->second;
}

StateId Lts::Builder::add_state(std::string name, std::vector<StateId> provenance) {
  names_.push_back(std::move(name));
  provenance_.push_back(std::move(provenance));
  return static_cast<StateId>(names_.size() - 1);
}

void Lts::Builder::add_transition(StateId from, const std::string& label, StateId to) {
  add_label(label);
  add_transition(from, index_.at(label), to);
}

void Lts::Builder::add_transition(StateId from, LabelId label, StateId to) {
  if (from >= names_.size() || to >= names_.size())
    throw LtsError(LtsError::Kind::UnknownState, "transition endpoint out of range");
  edges_.emplace_back(from, label, to);
}

Lts Lts::Builder::build() {
  Lts r;
  const std::size_t n = names_.size();
  if (n == 0) add_state();
  // Relabel so that label ids follow the sorted alphabet.
  std::vector<std::string> sorted = alphabet_;
  std::sort(sorted.begin(), sorted.end());
  std::vector<LabelId> remap(alphabet_.size());
  for (LabelId i = 0; i < alphabet_.size(); ++i)
    remap[i] = static_cast<LabelId>(std::lower_bound(sorted.begin(), sorted.end(), alphabet_[i]) - sorted.begin());
  for (auto& [f, l, t] : edges_) l = remap[l];
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  r.alphabet_ = std::move(sorted);
  r.initial_ = initial_;
  r.offsets_.assign(names_.size() + 1, 0);
  for (auto& [f, l, t] : edges_) r.offsets_[f + 1]++;
  for (std::size_t i = 0; i < names_.size(); ++i) r.offsets_[i + 1] += r.offsets_[i];
  r.edges_.reserve(edges_.size());
  for (auto& [f, l, t] : edges_) r.edges_.push_back({l, t});
  bool any_prov = std::any_of(provenance_.begin(), provenance_.end(), [](auto& p) { return !p.empty(); });
  if (any_prov) r.provenance_ = std::move(provenance_);
  bool any_name = std::any_of(names_.begin(), names_.end(), [](auto& p) { return !p.empty(); });
  if (any_name) r.names_ = std::move(names_);
  return r;
}

Lts compose(const Lts& a, const Lts& b) {
  std::set<std::string> al(a.alphabet().begin(), a.alphabet().end());
  al.insert(b.alphabet().begin(), b.alphabet().end());
  Lts::Builder out(al);

  std::vector<LabelId> a_to_u(a.alphabet().size()), b_to_u(b.alphabet().size());
  std::vector<std::optional<LabelId>> a_in_b(a.alphabet().size());
  std::vector<bool> b_shared(b.alphabet().size(), false);
  for (LabelId i = 0; i < a.alphabet().size(); ++i) {
    a_to_u[i] = out.label_id(a.label(i));
    a_in_b[i] = b.label_id(a.label(i));
    if (a_in_b[i]) b_shared[*a_in_b[i]] = true;
  }
  for (LabelId i = 0; i < b.alphabet().size(); ++i) b_to_u[i] = out.label_id(b.label(i));

  std::unordered_map<std::uint64_t, StateId> ids;
  std::deque<std::pair<StateId, StateId>> work;
  auto get = [&](StateId x, StateId y) {
    std::uint64_t key = (std::uint64_t(x) << 32) | y;
    auto [it, fresh] = ids.try_emplace(key, 0);
    if (fresh) {
      std::string nm;
      if (!a.name(x).empty() || !b.name(y).empty()) nm = "(" + a.name(x) + "," + b.name(y) + ")";
      it->second = out.add_state(std::move(nm), {x, y});
      work.emplace_back(x, y);
    }
    return it->second;
  };
  out.set_initial(get(a.initial(), b.initial()));
  while (!work.empty()) {
    auto [x, y] = work.front();
    work.pop_front();
    StateId from = ids.at((std::uint64_t(x) << 32) | y);
    for (const Edge& e : a.out(x)) {
      if (auto lb = a_in_b[e.label]) {
        for (const Edge& f : b.out(y, *lb)) out.add_transition(from, a_to_u[e.label], get(e.target, f.target));
      } else {
        out.add_transition(from, a_to_u[e.label], get(e.target, y));
      }
    }
    for (const Edge& f : b.out(y)) {
      if (!b_shared[f.label]) out.add_transition(from, b_to_u[f.label], get(x, f.target));
    }
  }
  return out.build();
}

Lts compose_all(const std::vector<const Lts*>& parts) {
  if (parts.empty()) return chaos({});
  Lts acc = *parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = compose(acc, *parts[i]);
  return acc;
}

Lts interrupt(const Lts& e, const Lts& e2, const std::string& label, const StateMap& map) {
  if (e.has_label(label) || e2.has_label(label))
    throw LtsError(LtsError::Kind::LabelClash, "interrupt label '" + label + "' already in use");
  for (auto& [s, targets] : map.entries) {
    if (s >= e.num_states())
      throw LtsError(LtsError::Kind::UnknownState, "map source " + std::to_string(s) + " out of range");
    for (auto& t : targets)
      if (t.state >= e2.num_states())
        throw LtsError(LtsError::Kind::UnknownState, "map target " + std::to_string(t.state) + " out of range");
  }
  if (!map.default_disabled) {
    for (StateId s = 0; s < e.num_states(); ++s)
      if (!map.entries.count(s))
        throw LtsError(LtsError::Kind::PartialMap,
                       "interrupt map has no entry for state " + (e.name(s).empty() ? std::to_string(s) : e.name(s)));
  }

  std::set<std::string> al(e.alphabet().begin(), e.alphabet().end());
  al.insert(e2.alphabet().begin(), e2.alphabet().end());
  al.insert(label);
  for (auto& [s, targets] : map.entries)
    for (auto& t : targets)
      if (!t.via.empty()) al.insert(t.via);
  Lts::Builder out(al);
  const StateId off = static_cast<StateId>(e.num_states());
  for (StateId s = 0; s < e.num_states(); ++s) out.add_state(e.name(s), {0, s});
  for (StateId s = 0; s < e2.num_states(); ++s) out.add_state(e2.name(s), {1, s});
  for (StateId s = 0; s < e.num_states(); ++s)
    for (const Edge& x : e.out(s)) out.add_transition(s, e.label(x.label), x.target);
  for (StateId s = 0; s < e2.num_states(); ++s)
    for (const Edge& x : e2.out(s)) out.add_transition(off + s, e2.label(x.label), off + x.target);

  std::map<std::pair<StateId, std::string>, StateId> mid;
  for (auto& [s, targets] : map.entries) {
    for (auto& t : targets) {
      if (t.via.empty()) {
        out.add_transition(s, label, off + t.state);
        continue;
      }
      auto key = std::make_pair(t.state, t.via);
      auto it = mid.find(key);
      if (it == mid.end()) {
        StateId m = out.add_state("~" + t.via, {2, t.state});
        out.add_transition(m, t.via, off + t.state);
        it = mid.emplace(key, m).first;
      }
      out.add_transition(s, label, it->second);
    }
  }
  out.set_initial(e.initial());
  return out.build();
}

std::vector<StateId> reachable(const Lts& l) {
  std::vector<bool> seen(l.num_states(), false);
  std::vector<StateId> order, stack{l.initial()};
  seen[l.initial()] = true;
  while (!stack.empty()) {
    StateId s = stack.back();
    stack.pop_back();
    order.push_back(s);
    for (const Edge& e : l.out(s))
      if (!seen[e.target]) {
        seen[e.target] = true;
        stack.push_back(e.target);
      }
  }
  std::sort(order.begin(), order.end());
  return order;
}

Lts restrict_reachable(const Lts& l) {
  auto keep = reachable(l);
  std::vector<StateId> remap(l.num_states(), kNoState);
  Lts::Builder b(std::set<std::string>(l.alphabet().begin(), l.alphabet().end()));
  for (StateId s : keep) remap[s] = b.add_state(l.name(s), l.provenance(s));
  for (StateId s : keep)
    for (const Edge& e : l.out(s)) b.add_transition(remap[s], e.label, remap[e.target]);
  b.set_initial(remap[l.initial()]);
  return b.build();
}

std::vector<StateId> step(const Lts& l, StateId s, std::string_view label) {
  if (s >= l.num_states()) throw LtsError(LtsError::Kind::UnknownState, "unknown state " + std::to_string(s));
  std::vector<StateId> r;
  if (auto id = l.label_id(label))
    for (const Edge& e : l.out(s, *id)) r.push_back(e.target);
  return r;
}

std::vector<StateId> deadlock_states(const Lts& l) {
  std::vector<StateId> r;
  for (StateId s : reachable(l))
    if (l.out(s).empty()) r.push_back(s);
  return r;
}

Lts chaos(const std::set<std::string>& alphabet) {
  Lts::Builder b(alphabet);
  StateId s = b.add_state();
  for (const auto& l : alphabet) b.add_transition(s, l, s);
  return b.build();
}

std::string to_dot(const Lts& l, std::string_view graph_name) {
  std::ostringstream os;
  os << "digraph " << graph_name << " {\n  rankdir=LR;\n  node [shape=circle];\n";
  os << "  __init [shape=point];\n  __init -> s" << l.initial() << ";\n";
  for (StateId s = 0; s < l.num_states(); ++s) {
    os << "  s" << s << " [label=\"" << (l.name(s).empty() ? std::to_string(s) : l.name(s)) << "\"];\n";
  }
  for (StateId s = 0; s < l.num_states(); ++s)
    for (const Edge& e : l.out(s))
      os << "  s" << s << " -> s" << e.target << " [label=\"" << l.label(e.label) << "\"];\n";
  os << "}\n";
  return os.str();
}

}  // namespace skyweave
