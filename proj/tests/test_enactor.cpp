#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <sstream>
#include <thread>

#include "skyweave/enactor.hpp"
#include "skyweave/grid.hpp"

using namespace skyweave;

namespace {

std::string slurp(const std::string& rel) {
  std::ifstream in(std::string(SKYWEAVE_SOURCE_DIR) + "/" + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Delivery {
  Document doc;
  Controller c;
  DcuProblem p;
  std::shared_ptr<const UpdateSolution> sol;
};

const Delivery& delivery() {
  static const Delivery d = [] {
    Delivery d;
    Grid g = rect_grid(3, 4);
    ModelOptions o;
    o.initial_cell = 4;
    o.go_terminated = true;
    d.doc = parse_or_throw(movement_fsl(g, o) + slurp("scenarios/delivery/mission.fsl"));
    d.c = *solve(control_problem(d.doc, "Old")).controller;
    d.p = update_problem(d.doc, "LightUpdate", d.c);
    auto v = solve_update(d.p);
    d.sol = std::make_shared<const UpdateSolution>(std::move(*v.solution));
    return d;
  }();
  return d;
}

bool is_controlled(const Controller& c, const std::string& l) { return c.alphabet.controlled.count(l) > 0; }

// Shortest label path from the initial state to every reachable state.
std::map<StateId, std::vector<std::string>> paths(const Controller& c) {
  std::map<StateId, std::vector<std::string>> out{{c.lts.initial(), {}}};
  std::queue<StateId> q;
  q.push(c.lts.initial());
  while (!q.empty()) {
    StateId s = q.front();
    q.pop();
    for (const Edge& e : c.lts.out(s))
      if (!out.count(e.target)) {
        out[e.target] = out[s];
        out[e.target].push_back(c.lts.label(e.label));
        q.push(e.target);
      }
  }
  return out;
}

// Drives a fresh enactor along `path`: runs of uncontrolled events are posted
// and drained in one tick, controlled labels must be what the tick emits.
// The swap request goes in just before the tick that ends the path; without
// one, a trailing run of uncontrolled events is left in the inbox.
void drive(Enactor& en, const Controller& c, const std::vector<std::string>& path,
           const std::optional<SwapRequest>& swap) {
  std::size_t i = 0;
  bool requested = false;
  while (i < path.size()) {
    std::size_t j = i;
    while (j < path.size() && !is_controlled(c, path[j])) en.post(path[j++]);
    if (j == path.size() && j > i) {
      if (!swap) break;
      en.request_swap(*swap);
      requested = true;
    }
    auto out = en.tick();
    if (j < path.size()) {
      ASSERT_EQ(out.commands, std::vector<std::string>{path[j]});
      ++j;
    }
    i = j;
  }
  if (swap && !requested) {
    en.request_swap(*swap);
    en.tick();
  }
}

int count_dir(const Enactor& en, const std::string& dir) {
  int n = 0;
  for (auto& l : en.log()) n += parse_log_line(l).dir == dir;
  return n;
}

}  // namespace

TEST(Enactor, DeliveryStartsWithGrab) {
  Enactor en(delivery().c);
  auto out = en.tick();
  EXPECT_EQ(out.commands, std::vector<std::string>{"grab.1"});
  EXPECT_EQ(en.log().front(), "0 out grab.1 0 " + std::to_string(en.state()));
}

TEST(Enactor, WaitsForArrivalThenMovesOn) {
  const Controller& c = delivery().c;
  Enactor en(c);
  std::string cmd;
  for (int k = 0; k < 10 && cmd.rfind("go.", 0) != 0; ++k) {
    auto out = en.tick();
    ASSERT_EQ(out.commands.size(), 1u);
    cmd = out.commands.front();
  }
  ASSERT_EQ(cmd.rfind("go.", 0), 0u);
  // in flight: nothing selected, ticks change nothing
  StateId s = en.state();
  auto logged = en.log().size();
  for (int k = 0; k < 3; ++k) EXPECT_TRUE(en.tick().commands.empty());
  EXPECT_EQ(en.state(), s);
  EXPECT_EQ(en.log().size(), logged);
  en.post("at." + cmd.substr(3));
  auto out = en.tick();
  EXPECT_EQ(count_dir(en, "in"), 1);
  ASSERT_EQ(out.commands.size(), 1u);
  EXPECT_EQ(c.selected(parse_log_line(en.log().back()).before), out.commands.front());
}

TEST(Enactor, MismatchedVersionIsStale) {
  const auto& d = delivery();
  Enactor en(d.c);
  en.tick();
  StateId s = en.state();
  en.request_swap({d.sol, 7, {}});
  en.tick();
  EXPECT_EQ(count_dir(en, "stale"), 1);
  EXPECT_EQ(en.version(), 0u);
  EXPECT_EQ(en.mode(), Mode::Running);
  EXPECT_NE(en.state(), s);  // carried on with the old controller

  UpdateSolution broken = *d.sol;
  std::fill(broken.f.begin(), broken.f.end(), kNoState);
  try {
    en.hotswap(broken);
    FAIL();
  } catch (const EnactorError& e) {
    EXPECT_EQ(e.kind(), EnactorError::Kind::StaleSolution);
  }
}

TEST(Enactor, SecondPendingSwapIsBusy) {
  const auto& d = delivery();
  Enactor en(d.c);
  en.request_swap({d.sol, 0, {}});
  try {
    en.request_swap({d.sol, 0, {}});
    FAIL();
  } catch (const EnactorError& e) {
    EXPECT_EQ(e.kind(), EnactorError::Kind::Busy);
  }
  en.tick();
  EXPECT_FALSE(en.swap_pending());
  EXPECT_EQ(en.version(), 1u);
}

TEST(Enactor, FallbackOnceThenLands) {
  Enactor en(delivery().c);
  en.tick();
  en.post("at.9");  // nobody is flying
  auto out = en.tick();
  EXPECT_EQ(en.mode(), Mode::Fallback);
  EXPECT_EQ(out.commands, std::vector<std::string>{"rtl"});
  EXPECT_TRUE(out.fell_back);
  std::mt19937_64 rng(1);
  const std::vector<std::string> noise{"at.1", "at.4", "grab.2", "land.end", "x", "takeOff.end"};
  for (int k = 0; k < 20; ++k) en.post(noise[rng() % noise.size()]);
  EXPECT_TRUE(en.tick().commands.empty());
  en.post("rtl.end");
  EXPECT_EQ(en.tick().commands, std::vector<std::string>{"land"});
  en.post("land.end");
  en.tick();
  EXPECT_EQ(en.mode(), Mode::Landed);
  en.post("at.2");
  EXPECT_TRUE(en.tick().commands.empty());
  EXPECT_EQ(count_dir(en, "fallback"), 1);
  EXPECT_EQ(en.fallbacks(), 1u);
  EXPECT_EQ(count_dir(en, "absorb"), 21);
  // no lost events: every posted event is in the log
  EXPECT_EQ(count_dir(en, "in") + count_dir(en, "absorb") + count_dir(en, "fallback"), 24);
}

TEST(Enactor, SwapAfterFallbackIsDropped) {
  const auto& d = delivery();
  Enactor en(d.c);
  en.on_unexpected("at.0");
  en.request_swap({d.sol, 0, {}});
  en.tick();
  EXPECT_EQ(count_dir(en, "drop"), 1);
  EXPECT_EQ(en.version(), 0u);
  EXPECT_THROW(en.hotswap(*d.sol), EnactorError);
}

TEST(Enactor, FallbackPlanHandlesEveryEvent) {
  Controller fb = fallback_plan();
  EXPECT_EQ(fb.lts.num_states(), 5u);
  EXPECT_EQ(*fb.selected(0), "rtl");
  EXPECT_EQ(*fb.selected(2), "land");
  EXPECT_TRUE(fb.lts.out(4).empty());
}

TEST(Enactor, ReconfigManifest) {
  Enactor en(delivery().c, {"flight"});
  auto before = en.log().size();
  en.apply_reconfig({});
  EXPECT_EQ(en.log().size(), before);
  EXPECT_EQ(en.bound(), std::set<std::string>{"flight"});
  try {
    en.apply_reconfig({{"cargo4"}, {}});
    FAIL();
  } catch (const EnactorError& e) {
    EXPECT_EQ(e.kind(), EnactorError::Kind::UnknownModule);
  }
  EXPECT_EQ(en.bound(), std::set<std::string>{"flight"});
  en.uploaded("cargo4");
  en.apply_reconfig({{"cargo4"}, {"flight"}});
  EXPECT_EQ(en.bound(), std::set<std::string>{"cargo4"});
  EXPECT_EQ(count_dir(en, "bind"), 1);
  EXPECT_EQ(count_dir(en, "unbind"), 1);
}

TEST(Enactor, UnknownModuleInSwapManifest) {
  const auto& d = delivery();
  Enactor en(d.c);
  en.request_swap({d.sol, 0, {{"never"}, {}}});
  en.tick();
  EXPECT_EQ(count_dir(en, "stale"), 1);
  EXPECT_EQ(en.version(), 0u);
}

// hotSwap at every reachable state of C lands on f of that state.
TEST(Enactor, SwapAtEveryReachableState) {
  const auto& d = delivery();
  auto all = paths(d.c);
  ASSERT_GT(all.size(), 10u);
  for (auto& [s, path] : all) {
    Enactor en(d.c);
    drive(en, d.c, path, SwapRequest{d.sol, 0, {}});
    ASSERT_EQ(count_dir(en, "stale"), 0) << "state " << s;
    ASSERT_EQ(count_dir(en, "swap"), 1) << "state " << s;
    auto it = std::find_if(en.log().begin(), en.log().end(),
                           [](const std::string& l) { return parse_log_line(l).dir == "swap"; });
    auto rec = parse_log_line(*it);
    EXPECT_EQ(rec.before, s);
    EXPECT_EQ(rec.after, d.sol->f[s]);
    EXPECT_EQ(en.version(), 1u);
  }
}

// However the swap request and the inbox are interleaved within a tick, the
// result is: drain under C, swap through f, then emit from C'.
TEST(Enactor, SwapIsAtomicWithRespectToInbox) {
  const auto& d = delivery();
  const Controller& c = d.c;
  const Controller& n = d.sol->next;
  std::mt19937_64 rng(42);
  auto all = paths(c);
  std::vector<StateId> states;
  for (auto& [s, _] : all) states.push_back(s);
  int schedules = 0;
  for (int trial = 0; trial < 1500; ++trial) {
    StateId s = states[rng() % states.size()];
    // run of uncontrolled events enabled from s under C
    std::vector<std::string> batch;
    StateId t = s;
    std::size_t len = rng() % 4;
    while (batch.size() < len) {
      std::vector<Edge> opts;
      for (const Edge& e : c.lts.out(t))
        if (!is_controlled(c, c.lts.label(e.label))) opts.push_back(e);
      if (opts.empty()) break;
      const Edge& e = opts[rng() % opts.size()];
      batch.push_back(c.lts.label(e.label));
      t = e.target;
    }
    Enactor en(c);
    drive(en, c, all[s], std::nullopt);
    std::size_t at = rng() % (batch.size() + 1);
    for (std::size_t k = 0; k <= batch.size(); ++k) {
      if (k == at) en.request_swap({d.sol, 0, {}});
      if (k < batch.size()) en.post(batch[k]);
    }
    auto out = en.tick();
    StateId want = d.sol->f[t];
    auto sel = n.selected(want);
    ASSERT_EQ(count_dir(en, "swap"), 1);
    if (sel) {
      ASSERT_EQ(out.commands, std::vector<std::string>{*sel});
      EXPECT_EQ(en.state(), n.lts.out(want, *n.selection[want]).front().target);
    } else {
      EXPECT_TRUE(out.commands.empty());
      EXPECT_EQ(en.state(), want);
    }
    ++schedules;
  }
  EXPECT_GE(schedules, 1000);
}

// A producer thread answers commands and another one requests the swap at a
// random moment; the log must replay on the combined controller and every
// emitted command must be the selection of the state it left.
TEST(Enactor, ThreadedRunReplaysOnCombined) {
  const auto& d = delivery();
  for (int run = 0; run < 20; ++run) {
    Enactor en(d.c);
    Fifo<std::string> commands;
    std::atomic<bool> stop{false};
    std::thread env([&] {
      while (!stop) {
        for (auto& c : commands.drain())
          if (c.rfind("go.", 0) == 0) en.post("at." + c.substr(3));
        std::this_thread::yield();
      }
    });
    std::thread swapper([&, run] {
      std::this_thread::sleep_for(std::chrono::microseconds(50 * run));
      en.request_swap({d.sol, 0, {}});
    });
    for (int k = 0; k < 3000; ++k) {
      for (auto& c : en.tick().commands) commands.push(c);
      if (k % 7 == 0) std::this_thread::yield();
    }
    swapper.join();
    while (en.swap_pending()) en.tick();
    stop = true;
    env.join();

    ASSERT_EQ(en.fallbacks(), 0u) << "run " << run;
    ASSERT_EQ(count_dir(en, "swap"), 1);
    const Lts& comb = d.sol->combined;
    StateId s = comb.initial();
    bool swapped = false;
    for (auto& line : en.log()) {
      auto r = parse_log_line(line);
      if (r.dir == "out") {
        const Controller& cur = swapped ? d.sol->next : d.c;
        ASSERT_EQ(cur.selected(r.before), r.label) << line;
      }
      if (r.dir == "swap") swapped = true;
      auto id = comb.label_id(r.label);
      ASSERT_TRUE(id) << line;
      auto next = comb.out(s, *id);
      ASSERT_FALSE(next.empty()) << "run " << run << ": " << line;
      s = next.front().target;
    }
  }
}
