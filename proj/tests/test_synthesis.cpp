#include <gtest/gtest.h>

#include "oracles.hpp"
#include "skyweave/spec_lang.hpp"
#include "skyweave/synthesis.hpp"

using namespace skyweave;

namespace {

const char* kShuttle = R"(
MOVE = M0,
  M0 = (go.1 -> F1 | go.2 -> F2),
  F1 = (at.1 -> M1),
  F2 = (at.2 -> M2),
  M1 = (go.0 -> F0 | go.2 -> F2),
  M2 = (go.0 -> F0 | go.1 -> F1),
  F0 = (at.0 -> M0).
forall i in 0..2 : fluent At{i} = <{at.{i}}, {at[0..2]} \ {at.{i}}> initially (i == 0).
assert safety NoTwo = [](!At2).
liveness L = gr1( |- []<>At0, []<>At1).
problem control P {
  env = MOVE;
  safety = NoTwo;
  liveness = L;
  controllable = {go[0..2]};
}
assert safety Never0 = [](!go.0).
problem control Bad {
  env = MOVE;
  safety = Never0;
  liveness = L;
  controllable = {go[0..2]};
}
)";

// Random problem over a small deterministic environment.
ControlProblem random_problem(std::mt19937& rng) {
  ControlProblem p;
  const std::vector<std::string> labels{"a", "b", "c", "d"};
  Lts::Builder b;
  int n = 1 + rng() % 5;
  for (int i = 0; i < n; ++i) b.add_state();
  for (int s = 0; s < n; ++s)
    for (auto& l : labels)
      if (rng() % 100 < 50) b.add_transition(s, l, rng() % n);
  for (auto& l : labels) b.add_label(l);
  p.env = b.build();
  for (auto& l : labels) {
    if (rng() % 2) p.alphabet.controlled.insert(l);
    else p.alphabet.uncontrolled.insert(l);
  }
  for (int i = 0; i < 2; ++i) {
    FluentDef d{"F" + std::to_string(i), {}, {}, rng() % 2 == 0};
    for (auto& l : labels) {
      int r = rng() % 3;
      if (r == 0) d.init.insert(l);
      if (r == 1) d.term.insert(l);
    }
    p.fluents.push_back(d);
  }
  auto atom = [&] {
    static const std::vector<std::string> atoms{"F0", "F1", "a", "b", "c"};
    auto x = fx::atom(atoms[rng() % atoms.size()]);
    return rng() % 3 == 0 ? fx::neg(x) : x;
  };
  if (rng() % 2) p.safety.push_back({fx::always(fx::disj(atom(), atom())), {}, {}});
  if (rng() % 3 == 0) p.safety.push_back({fx::always(fx::implies(atom(), fx::wuntil(atom(), atom()))), {}, {}});
  int ng = rng() % 3, na = rng() % 2;
  for (int j = 0; j < ng; ++j) p.liveness.guarantees.push_back(atom());
  for (int i = 0; i < na; ++i) p.liveness.assumptions.push_back(atom());
  return p;
}

}  // namespace

TEST(Synthesis, AgreesWithBruteForceOnRandomArenas) {
  std::mt19937 rng(7);
  int realizable = 0, total = 400;
  for (int k = 0; k < total; ++k) {
    GameArena a = oracle::random_arena(rng, 6, 4);
    bool expect = oracle::brute_force_realizable(a);
    Verdict v = solve_gr1(a);
    ASSERT_EQ(v.realizable, expect) << "arena " << k;
    realizable += expect;
  }
  // both outcomes must be exercised
  EXPECT_GT(realizable, total / 10);
  EXPECT_LT(realizable, total - total / 10);
}

TEST(Synthesis, ExtractedControllerWinsOnArena) {
  std::mt19937 rng(8);
  for (int k = 0; k < 300; ++k) {
    GameArena a = oracle::random_arena(rng, 6, 4);
    Verdict v = solve_gr1(a);
    if (!v.realizable) continue;
    const Controller& c = *v.controller;
    // memoryless for one guarantee: read the choice per arena state
    std::vector<int> choice(a.size(), -1);
    for (StateId cs = 0; cs < c.lts.num_states(); ++cs) {
      EXPECT_EQ(c.memory[cs], 0u);
      StateId s = c.arena_state[cs];
      if (auto sel = c.selection[cs]) {
        auto out = a.out(s);
        for (std::size_t m = 0; m < out.size(); ++m)
          if (out[m].controlled && a.labels[out[m].label] == c.lts.label(*sel)) choice[s] = static_cast<int>(m);
      }
    }
    ASSERT_TRUE(oracle::strategy_wins(a, choice)) << "arena " << k;
  }
}

TEST(Synthesis, RandomProblemsVerifyClosedLoop) {
  std::mt19937 rng(21);
  int checked = 0;
  for (int k = 0; k < 400; ++k) {
    ControlProblem p = random_problem(rng);
    Verdict v = solve(p);
    if (!v.realizable) continue;
    ++checked;
    VerifyReport r = verify_closed_loop(p, *v.controller);
    ASSERT_TRUE(r.ok) << "problem " << k << ": " << r.violations.front();
  }
  EXPECT_GT(checked, 50);
}

TEST(Synthesis, ShuttleAvoidsForbiddenCell) {
  auto doc = parse_or_throw(kShuttle);
  ControlProblem p = control_problem(doc, "P");
  Verdict v = solve(p);
  ASSERT_TRUE(v.realizable);
  const Controller& c = *v.controller;
  for (StateId s = 0; s < c.lts.num_states(); ++s) EXPECT_NE(c.selected(s).value_or(""), "go.2");
  EXPECT_TRUE(verify_closed_loop(p, c).ok);
  // memory alternates between the two guarantees
  std::set<std::uint32_t> mem(c.memory.begin(), c.memory.end());
  EXPECT_EQ(mem.size(), 2u);
}

TEST(Synthesis, UnrealizableReportsWitness) {
  auto doc = parse_or_throw(kShuttle);
  Verdict v = solve(control_problem(doc, "Bad"));
  EXPECT_FALSE(v.realizable);
  ASSERT_TRUE(v.witness.has_value());
  EXPECT_EQ(v.witness->reason, "liveness");
}

TEST(Synthesis, SafetyWitnessIsForcedTrace) {
  // controller cannot stop the environment from doing 'boom'
  Lts::Builder b({"boom", "tick"});
  StateId s0 = b.add_state(), s1 = b.add_state();
  b.add_transition(s0, "tick", s1);
  b.add_transition(s1, "boom", s0);
  ControlProblem p;
  p.env = b.build();
  p.alphabet.controlled = {"tick"};
  p.alphabet.uncontrolled = {"boom"};
  p.safety.push_back({fx::always(fx::neg(fx::atom("boom"))), {}, {}});
  Verdict v = solve(p);
  EXPECT_FALSE(v.realizable);
  ASSERT_TRUE(v.witness);
  EXPECT_EQ(v.witness->reason, "safety");
  EXPECT_EQ(v.witness->trace, (std::vector<std::string>{"tick", "boom"}));
}

TEST(Synthesis, NondeterministicEnvironmentRejected) {
  Lts::Builder b({"x"});
  StateId s0 = b.add_state(), s1 = b.add_state();
  b.add_transition(s0, "x", s0);
  b.add_transition(s0, "x", s1);
  ControlProblem p;
  p.env = b.build();
  p.alphabet.uncontrolled = {"x"};
  try {
    build_arena(p);
    FAIL();
  } catch (const SynthesisError& e) {
    EXPECT_EQ(e.kind(), SynthesisError::Kind::NondeterministicArena);
  }
}

TEST(Synthesis, VerifierCatchesBadControllers) {
  auto doc = parse_or_throw(kShuttle);
  ControlProblem p = control_problem(doc, "P");
  Controller good = *solve(p).controller;
  // A controller that always goes to 2 whenever it can.
  Lts::Builder b(std::set<std::string>(p.env.alphabet().begin(), p.env.alphabet().end()));
  StateId home = b.add_state(), out2 = b.add_state(), at2 = b.add_state();
  b.add_transition(home, "go.2", out2);
  b.add_transition(out2, "at.2", at2);
  b.add_transition(at2, "go.0", home);
  Controller bad;
  bad.lts = b.build();
  bad.alphabet = p.alphabet;
  bad.selection = {bad.lts.label_id("go.2"), std::nullopt, bad.lts.label_id("go.0")};
  auto r = verify_closed_loop(p, bad);
  EXPECT_FALSE(r.ok);
  ASSERT_TRUE(r.counterexample);
  EXPECT_EQ(r.counterexample->prefix, (std::vector<std::string>{"go.2", "at.2"}));

  // Never-moving controller: deadlock.
  Lts::Builder idle(std::set<std::string>(p.env.alphabet().begin(), p.env.alphabet().end()));
  idle.add_state();
  Controller lazy{idle.build(), p.alphabet, {std::nullopt}, {}, {}};
  EXPECT_FALSE(verify_closed_loop(p, lazy).ok);
  EXPECT_TRUE(verify_closed_loop(p, good).ok);
}

TEST(Synthesis, LivenessCounterexampleIsLasso) {
  auto doc = parse_or_throw(kShuttle);
  ControlProblem p = control_problem(doc, "P");
  // without safety, shuttling 0 <-> 2 is legal but never visits 1
  p.safety.clear();
  Lts::Builder b(std::set<std::string>(p.env.alphabet().begin(), p.env.alphabet().end()));
  StateId h = b.add_state(), f2 = b.add_state(), m2 = b.add_state(), f0 = b.add_state();
  b.add_transition(h, "go.2", f2);
  b.add_transition(f2, "at.2", m2);
  b.add_transition(m2, "go.0", f0);
  b.add_transition(f0, "at.0", h);
  Controller c;
  c.lts = b.build();
  c.alphabet = p.alphabet;
  c.selection = {c.lts.label_id("go.2"), std::nullopt, c.lts.label_id("go.0"), std::nullopt};
  auto r = verify_closed_loop(p, c);
  ASSERT_FALSE(r.ok);
  ASSERT_TRUE(r.counterexample);
  EXPECT_FALSE(r.counterexample->cycle.empty());
}

TEST(Synthesis, ControllerTableRoundTrip) {
  auto doc = parse_or_throw(kShuttle);
  ControlProblem p = control_problem(doc, "P");
  Controller c = *solve(p).controller;
  std::string t = write_controller(c);
  Controller back = read_controller(t);
  EXPECT_EQ(write_controller(back), t);
  EXPECT_TRUE(verify_closed_loop(p, back).ok);
  EXPECT_THROW(read_controller("states 2\ninitial 5\n"), std::runtime_error);
  EXPECT_NE(controller_dot(c).find("digraph"), std::string::npos);
}
