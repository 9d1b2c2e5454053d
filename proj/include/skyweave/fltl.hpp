#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "skyweave/lts.hpp"

namespace skyweave {

struct FluentDef {
  std::string name;
  std::set<std::string> init;
  std::set<std::string> term;
  bool initially = false;
};

class FltlError : public std::runtime_error {
 public:
  enum class Kind { DuplicateFluentName, UnknownFluent, UnsupportedFragment };
  FltlError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Formula syntax tree shared by the boolean layer and the temporal layer.
// Atoms are resolved late: a declared fluent wins, otherwise the name must be
// an event of the alphabet (event shorthand, true right after that event).
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Op { True, False, Atom, Not, And, Or, Implies, Always, Eventually, WeakUntil };
  Op op;
  std::string name;  // Atom only
  std::vector<ExprPtr> args;
};

namespace fx {
ExprPtr t();
ExprPtr f();
ExprPtr atom(std::string name);
ExprPtr neg(ExprPtr a);
ExprPtr conj(ExprPtr a, ExprPtr b);
ExprPtr conj(const std::vector<ExprPtr>& xs);
ExprPtr disj(ExprPtr a, ExprPtr b);
ExprPtr disj(const std::vector<ExprPtr>& xs);
ExprPtr implies(ExprPtr a, ExprPtr b);
ExprPtr always(ExprPtr a);
ExprPtr eventually(ExprPtr a);
ExprPtr wuntil(ExprPtr a, ExprPtr b);
}  // namespace fx

bool is_boolean(const Expr& e);
std::string to_string(const Expr& e);
void collect_atoms(const Expr& e, std::set<std::string>& out);

// Safety fragment: conjunctions of []B, (B1 W B2) and [](T -> (H W R)).
struct SafetyPart {
  enum class Kind { Always, WeakUntil, ImplWeakUntil };
  Kind kind;
  ExprPtr trigger;  // ImplWeakUntil only
  ExprPtr hold;     // Always: B; WeakUntil: B1
  ExprPtr release;  // WeakUntil: B2
};
// Throws UnsupportedFragment.
std::vector<SafetyPart> classify_safety(const ExprPtr& e);

struct Gr1Liveness {
  std::vector<ExprPtr> assumptions;
  std::vector<ExprPtr> guarantees;
};

using Valuation = std::map<std::string, bool>;

Valuation initial_valuation(const std::vector<FluentDef>& defs);
Valuation advance(const std::vector<FluentDef>& defs, const Valuation& v, const std::string& event);
// Evaluates a boolean formula.  `last_event` is empty before the first event.
bool eval(const Expr& e, const Valuation& v, const std::string& last_event);

struct TraceVerdict {
  bool ok = true;
  std::size_t violated_at = 0;  // index of the event whose position first fails
};
// Direct finite-prefix semantics; positions are after each event.
TraceVerdict check_trace(const ExprPtr& safety, const std::vector<FluentDef>& defs,
                         const std::vector<std::string>& trace);

// A conjunct that is checked only inside a window of the run.  With arm_on
// set it starts at the position of that event; with disarm_on set it stops
// before the position of that event.
struct ScopedSafety {
  ExprPtr formula;
  std::string arm_on;
  std::string disarm_on;
};

struct Monitor {
  Lts lts;  // deterministic, complete over the alphabet
  StateId error = kNoState;
  // observed[s][k]: value of the k-th observed formula at state s.
  std::vector<std::vector<bool>> observed;
  bool is_error(StateId s) const { return s == error; }
};

Monitor compile_monitor(const std::vector<ScopedSafety>& parts, const std::vector<FluentDef>& defs,
                        const std::set<std::string>& alphabet, const std::vector<ExprPtr>& observe = {});
Lts compile_safety(const ExprPtr& safety, const std::vector<FluentDef>& defs,
                   const std::set<std::string>& alphabet);

}  // namespace skyweave
