#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skyweave {

using StateId = std::uint32_t;
using LabelId = std::uint32_t;
inline constexpr StateId kNoState = std::numeric_limits<StateId>::max();

// Labels are dotted words: letters, digits, '_', '.', '?'.  Must start with a letter.
bool is_valid_label(std::string_view s);

struct Alphabet {
  std::set<std::string> controlled;
  std::set<std::string> uncontrolled;

  bool is_controlled(const std::string& l) const { return controlled.count(l) > 0; }
  bool contains(const std::string& l) const {
    return controlled.count(l) > 0 || uncontrolled.count(l) > 0;
  }
  std::set<std::string> all() const;
};

class LtsError : public std::runtime_error {
 public:
  enum class Kind { PartialMap, LabelClash, UnknownState, InvalidLabel };
  LtsError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Edge {
  LabelId label;
  StateId target;
  bool operator==(const Edge&) const = default;
};

// Immutable labelled transition system.  Out-edges of each state are sorted by
// (label, target).  Labels are indices into a sorted alphabet.
class Lts {
 public:
  class Builder;

  Lts() = default;

  std::size_t num_states() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_transitions() const { return edges_.size(); }
  StateId initial() const { return initial_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const std::string& label(LabelId l) const { return alphabet_[l]; }
  std::optional<LabelId> label_id(std::string_view l) const;
  bool has_label(std::string_view l) const { return label_id(l).has_value(); }

  std::span<const Edge> out(StateId s) const;
  // Edges of s carrying label l (contiguous because edges are sorted).
  std::span<const Edge> out(StateId s, LabelId l) const;
  bool enabled(StateId s, LabelId l) const { return !out(s, l).empty(); }

  bool deterministic() const;

  // Component state ids this state was built from (compose: {a, b};
  // interrupt: {phase, original}).  Empty for hand-built systems.
  const std::vector<StateId>& provenance(StateId s) const;
  // Optional human-readable state names, "" when unnamed.
  const std::string& name(StateId s) const;
  std::optional<StateId> find_name(std::string_view n) const;

 private:
  StateId initial_ = 0;
  std::vector<std::string> alphabet_;
  std::vector<std::size_t> offsets_;
  std::vector<Edge> edges_;
  std::vector<std::vector<StateId>> provenance_;
  std::vector<std::string> names_;
};

class Lts::Builder {
 public:
  explicit Builder(std::set<std::string> alphabet = {});

  StateId add_state(std::string name = {}, std::vector<StateId> provenance = {});
  void add_label(const std::string& l);
  void add_transition(StateId from, const std::string& label, StateId to);
  void add_transition(StateId from, LabelId label, StateId to);
  LabelId label_id(const std::string& l) const;
  void set_initial(StateId s) { initial_ = s; }
  std::size_t num_states() const { return names_.size(); }

  Lts build();

 private:
  std::vector<std::string> alphabet_;
  std::map<std::string, LabelId, std::less<>> index_;
  std::vector<std::tuple<StateId, LabelId, StateId>> edges_;
  std::vector<std::string> names_;
  std::vector<std::vector<StateId>> provenance_;
  StateId initial_ = 0;
};

// One interrupt map target.  A non-empty `via` inserts an intermediate state
// reached by the interrupt label and left by the observation event `via`.
struct MapTarget {
  StateId state;
  std::string via;
  bool operator==(const MapTarget&) const = default;
};

struct StateMap {
  std::map<StateId, std::vector<MapTarget>> entries;
  // `_ -> {}`: states without an entry have the interrupt label disabled.
  bool default_disabled = false;
};

// Synchronous product: shared labels synchronise, others interleave.  Only
// the reachable part is built.
Lts compose(const Lts& a, const Lts& b);
Lts compose_all(const std::vector<const Lts*>& parts);

// States [0, |e|) are e's, [|e|, |e|+|e2|) are e2's, then one state per `via`
// target.  Provenance is {0, s}, {1, s} or {2, target}.
Lts interrupt(const Lts& e, const Lts& e2, const std::string& label, const StateMap& map);

std::vector<StateId> reachable(const Lts& l);
Lts restrict_reachable(const Lts& l);
std::vector<StateId> step(const Lts& l, StateId s, std::string_view label);
std::vector<StateId> deadlock_states(const Lts& l);

// Lts with the given alphabet and a single state looping on every label.
Lts chaos(const std::set<std::string>& alphabet);

std::string to_dot(const Lts& l, std::string_view graph_name = "lts");

}  // namespace skyweave
