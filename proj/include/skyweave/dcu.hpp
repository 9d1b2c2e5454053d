#pragma once

#include <string>
#include <vector>

#include "skyweave/synthesis.hpp"

namespace skyweave {

namespace dcu_events {
inline const std::string kHotSwap = "hotSwap";
inline const std::string kStopOld = "stopOld";
inline const std::string kStartNew = "startNew";
inline const std::string kReconfig = "reconfig";
}  // namespace dcu_events

class DcuError : public std::runtime_error {
 public:
  enum class Kind { PartialMap, FreshnessViolation, UnsupportedLiveness, PartialF, AmbiguousSwapState, EnvironmentMismatch };
  DcuError(Kind k, const std::string& m) : std::runtime_error(m), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct DcuProblem {
  Controller current;      // C, over the old environment's alphabet
  ControlProblem old;      // the problem C solves
  // E --reconfig--> E'.  If the reconfig event is absent this is E itself
  // and reconfig is an identity step that may happen once.
  Lts reconfigurable;
  Alphabet alphabet;       // new partition, without the four update events
  std::vector<FluentDef> fluents;
  std::vector<ExprPtr> new_safety;
  Gr1Liveness new_liveness;
  std::vector<ExprPtr> theta;
};

struct UpdateGoal {
  std::vector<FluentDef> fluents;    // user fluents plus the four update fluents
  std::vector<ScopedSafety> safety;  // old W stopOld, theta, new armed at startNew
  Gr1Liveness liveness;              // HotSwap (+A') => Stopped&Started&Reconfigured, G'
};

struct UpdateSolution {
  Controller next;             // C'
  std::vector<StateId> f;      // C state -> C' state, kNoState outside reachable C
  Lts combined;                // C --hotSwap,f--> C'
  Controller combined_controller;
  std::size_t arena_states = 0;
};

struct UpdateVerdict {
  bool realizable = false;
  std::optional<UpdateSolution> solution;
  std::optional<Witness> witness;
  std::size_t arena_states = 0;
};

// The reserved fluents HotSwap, OldStopped, NewStarted, Reconfigured.
std::vector<FluentDef> update_fluents();

// E_u: C || E with hotSwap enabled everywhere (pre-swap moves all belong to
// the environment), then E --reconfig--> E' with stopOld/startNew latches.
ControlProblem build_update_environment(const DcuProblem& p);
UpdateGoal build_update_goal(const DcuProblem& p);
UpdateVerdict solve_update(const DcuProblem& p, const SolveOptions& opts = {});

// Problem against which a combined controller is model-checked: the
// environment side of E_u (no old controller) with the full update goal.
ControlProblem update_check_problem(const DcuProblem& p);
VerifyReport verify_update(const UpdateSolution& sol, const DcuProblem& p);

// Rebuild the combined artifact after changing f (used by mutation tests).
void recombine(UpdateSolution& sol, const Controller& current);

// Elaborate a "problem update" block.  The old controller is synthesized
// from the referenced control problem unless one is supplied.
DcuProblem update_problem(const Document& doc, const std::string& name,
                          const std::optional<Controller>& current = std::nullopt);

// Controller table of C' followed by an fmap section.
std::string write_update(const UpdateSolution& sol);
struct UpdateTable {
  Controller next;
  std::vector<StateId> f;  // indexed by C state, kNoState where unmapped
};
UpdateTable read_update(const std::string& text);

}  // namespace skyweave
