#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skyweave/fltl.hpp"
#include "skyweave/lts.hpp"

namespace skyweave {

struct SourceSpan {
  int line = 0, col = 0;          // 1-based start
  int end_line = 0, end_col = 0;  // inclusive end
};

struct Diagnostic {
  enum class Kind { SyntaxError, UnresolvedName, AlphabetMismatch, FragmentError, PartitionOverlap, PartialMap };
  Kind kind;
  std::string message;
  SourceSpan span;
};
const char* to_string(Diagnostic::Kind k);
std::string format(const Diagnostic& d, const std::string& file = {});

// Local process term: STOP, a reference to a local name, a prefix or a choice.
struct Term;
using TermPtr = std::shared_ptr<const Term>;
struct Term {
  enum class Kind { Stop, Ref, Prefix, Choice };
  Kind kind;
  std::string name;  // Ref: local name; Prefix: label
  TermPtr next;      // Prefix continuation
  std::vector<TermPtr> alts;
};

struct ProcessDecl {
  std::string name;
  std::vector<std::pair<std::string, TermPtr>> locals;  // first is the main body
  std::set<std::string> extra;                          // "+ {...}" alphabet extension
  SourceSpan span;
};

struct CompositionDecl {
  std::string name;
  std::vector<std::string> parts;
  SourceSpan span;
};

struct MapEntryDecl {
  std::string from;  // local state name or numeric id
  std::vector<std::pair<std::string, std::string>> to;  // (state, via label or "")
};

struct InterruptDecl {
  std::string name, source, target, label;
  std::vector<MapEntryDecl> entries;
  bool default_disabled = false;
  SourceSpan span;
};

struct SetDecl {
  std::string name;
  std::set<std::string> labels;
  SourceSpan span;
};

struct FluentDecl {
  FluentDef def;
  SourceSpan span;
};

struct AssertDecl {
  std::string name;
  ExprPtr formula;
  SourceSpan span;
};

struct LivenessDecl {
  std::string name;
  std::vector<ExprPtr> assumptions;  // each written []<>B, stored as B
  std::vector<ExprPtr> guarantees;
  SourceSpan span;
};

struct ControlProblemDecl {
  std::string name;
  std::string env;
  std::vector<std::string> safety;
  std::string liveness;  // may be empty
  std::optional<std::set<std::string>> controllable;
  std::optional<std::set<std::string>> uncontrollable;
  SourceSpan span;
};

struct UpdateProblemDecl {
  std::string name;
  std::string old;  // control problem whose controller is being replaced
  std::string env;  // reconfigurable environment, contains the reconfig label
  std::vector<std::string> safety;  // new safety
  std::string liveness;             // new liveness
  std::vector<std::string> theta;   // transition requirements
  std::optional<std::set<std::string>> controllable;
  std::optional<std::set<std::string>> uncontrollable;
  SourceSpan span;
};

struct Document {
  std::vector<SetDecl> sets;
  std::vector<ProcessDecl> processes;
  std::vector<CompositionDecl> compositions;
  std::vector<InterruptDecl> interrupts;
  std::vector<FluentDecl> fluents;
  std::vector<AssertDecl> asserts;
  std::vector<LivenessDecl> liveness;
  std::optional<std::set<std::string>> controllable;
  std::vector<ControlProblemDecl> control_problems;
  std::vector<UpdateProblemDecl> update_problems;

  const ProcessDecl* process(const std::string& n) const;
  const CompositionDecl* composition(const std::string& n) const;
  const InterruptDecl* interrupt_decl(const std::string& n) const;
  const AssertDecl* assertion(const std::string& n) const;
  const LivenessDecl* liveness_decl(const std::string& n) const;
  const ControlProblemDecl* control_problem(const std::string& n) const;
  const UpdateProblemDecl* update_problem(const std::string& n) const;
  bool defines_system(const std::string& n) const;
  std::vector<FluentDef> fluent_defs() const;
};

struct ParseResult {
  Document doc;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

// Total: never throws, reports every problem as a diagnostic.
ParseResult parse(const std::string& text);
std::string emit(const Document& doc);
std::vector<Diagnostic> validate(const Document& doc);

class ElaborationError : public std::runtime_error {
 public:
  ElaborationError(Diagnostic d) : std::runtime_error(d.message), diag_(std::move(d)) {}
  const Diagnostic& diagnostic() const { return diag_; }

 private:
  Diagnostic diag_;
};

// Builds the LTS of a process, composition or interrupt declaration.
Lts build_system(const Document& doc, const std::string& name);

// Reads a file, parses it and throws ElaborationError on the first diagnostic.
Document load_document(const std::string& path);
Document parse_or_throw(const std::string& text);

}  // namespace skyweave
