#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skyweave/fltl.hpp"
#include "skyweave/lts.hpp"
#include "skyweave/spec_lang.hpp"

namespace skyweave {

struct ControlProblem {
  Lts env;
  Alphabet alphabet;
  std::vector<FluentDef> fluents;
  std::vector<ScopedSafety> safety;
  Gr1Liveness liveness;
  // Env states in which every move belongs to the environment, whatever its label.
  std::vector<bool> passive;
};

class SynthesisError : public std::runtime_error {
 public:
  enum class Kind { NondeterministicArena, BadProblem };
  SynthesisError(Kind k, const std::string& m) : std::runtime_error(m), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Two-player game graph.  Every move is either controlled (the controller
// may pick it) or uncontrolled (the environment may take it at any time).
struct GameArena {
  struct Move {
    LabelId label;
    StateId target;
    bool controlled;
  };
  std::vector<std::string> labels;
  StateId initial = 0;
  std::vector<std::size_t> offsets;  // CSR, size n+1
  std::vector<Move> moves;
  std::vector<char> error;
  std::vector<std::vector<char>> assumptions;  // [i][s]
  std::vector<std::vector<char>> guarantees;   // [j][s]
  std::vector<StateId> env_state;              // provenance into ControlProblem::env

  std::size_t size() const { return error.size(); }
  std::span<const Move> out(StateId s) const { return {moves.data() + offsets[s], moves.data() + offsets[s + 1]}; }
};

// Builds an arena directly from a list of moves; used by tests and tools.
GameArena make_arena(std::size_t n, StateId initial, const std::vector<std::string>& labels,
                     const std::vector<std::tuple<StateId, LabelId, StateId, bool>>& moves,
                     std::vector<char> error, std::vector<std::vector<char>> assumptions,
                     std::vector<std::vector<char>> guarantees);

GameArena build_arena(const ControlProblem& p);

struct Controller {
  Lts lts;
  Alphabet alphabet;
  std::vector<std::optional<LabelId>> selection;  // per state, label id in lts
  std::vector<StateId> arena_state;               // empty for loaded tables
  std::vector<std::uint32_t> memory;

  std::optional<std::string> selected(StateId s) const {
    if (s >= selection.size() || !selection[s]) return std::nullopt;
    return lts.label(*selection[s]);
  }
};

struct Witness {
  std::string reason;              // "safety" or "liveness"
  std::vector<std::string> trace;  // environment-forced prefix for safety losses
};

struct Verdict {
  bool realizable = false;
  std::optional<Controller> controller;
  std::optional<Witness> witness;
  std::size_t arena_states = 0;
  std::size_t winning_states = 0;
};

struct SolveOptions {
  bool extract = true;
  // Called with (outer iteration, |Z|) while solving.
  std::function<void(int, std::size_t)> progress;
};

// Winning region of the GR(1) game as a membership vector.
std::vector<char> winning_region(const GameArena& a);
Verdict solve_gr1(const GameArena& a, const SolveOptions& opts = {});
Verdict solve(const ControlProblem& p, const SolveOptions& opts = {});

struct LassoTrace {
  std::vector<std::string> prefix;
  std::vector<std::string> cycle;
};

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> violations;
  std::optional<LassoTrace> counterexample;
  std::size_t product_states = 0;
};

// Independent check of C || E against the goal: legality, deadlock freedom,
// safety and GR(1) (via SCCs of the product).
VerifyReport verify_closed_loop(const ControlProblem& p, const Controller& c);

// Elaboration of a "problem control" block.
ControlProblem control_problem(const Document& doc, const std::string& name);

// Plain-text controller tables.
std::string write_controller(const Controller& c);
Controller read_controller(const std::string& text);
// DOT dump with the selected command marked on each state.
std::string controller_dot(const Controller& c);

}  // namespace skyweave
