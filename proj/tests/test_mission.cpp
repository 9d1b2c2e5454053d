#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "skyweave/mission.hpp"

using namespace skyweave;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string scenario(const std::string& name) { return std::string(SKYWEAVE_SOURCE_DIR) + "/scenarios/" + name; }

std::vector<std::string> all_scenarios() {
  std::vector<std::string> out;
  for (auto& e : fs::directory_iterator(std::string(SKYWEAVE_SOURCE_DIR) + "/scenarios"))
    if (fs::exists(e.path() / "scenario.json")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string verdict_text(const RunRecord& r) {
  std::string s;
  for (auto& v : r.verdicts) s += (v.pass ? "  pass " : "  FAIL ") + v.name + ": " + v.detail + "\n";
  return s;
}

// Replays the enactor log against the recorded controller tables.
void replay(const RunRecord& r) {
  ASSERT_FALSE(r.controllers.empty());
  Controller cur = read_controller(r.controllers.front());
  std::optional<UpdateTable> upd;
  if (r.controllers.size() > 1) upd = read_update(r.controllers.back());
  StateId s = cur.lts.initial();
  for (auto& line : r.log) {
    auto rec = parse_log_line(line);
    if (rec.dir == "in" || rec.dir == "out") {
      ASSERT_EQ(rec.before, s) << line;
      auto id = cur.lts.label_id(rec.label);
      ASSERT_TRUE(id) << line;
      auto next = cur.lts.out(s, *id);
      ASSERT_FALSE(next.empty()) << line;
      if (rec.dir == "out") ASSERT_EQ(cur.selected(s), rec.label) << line;
      s = next.front().target;
      ASSERT_EQ(rec.after, s) << line;
    } else if (rec.dir == "swap") {
      ASSERT_TRUE(upd);
      ASSERT_EQ(rec.before, s);
      ASSERT_EQ(rec.after, upd->f.at(s)) << line;
      cur = upd->next;
      s = rec.after;
    } else if (rec.dir == "fallback") {
      cur = fallback_plan();
      s = cur.lts.initial();
      ASSERT_EQ(rec.after, s);
    } else {
      ASSERT_EQ(rec.before, rec.after) << line;
    }
  }
}

class EveryScenario : public ::testing::TestWithParam<std::string> {};

}  // namespace

TEST_P(EveryScenario, PassesTwiceWithIdenticalLogs) {
  RunRecord a = run_scenario(scenario(GetParam()));
  EXPECT_TRUE(a.passed()) << verdict_text(a);
  EXPECT_FALSE(a.verdicts.empty());
  replay(a);
  RunRecord b = run_scenario(scenario(GetParam()));
  EXPECT_EQ(a.event_log(), b.event_log());
  EXPECT_EQ(a.world_log, b.world_log);
  EXPECT_EQ(a.controllers, b.controllers);
}

TEST_P(EveryScenario, SpuriousArrivalLandsOnce) {
  RunOptions o;
  o.spurious_at = 120;
  o.ticks = 2500;
  RunRecord r = run_scenario(scenario(GetParam()), o);
  int fallbacks = 0;
  for (auto& l : r.log) fallbacks += parse_log_line(l).dir == "fallback";
  EXPECT_EQ(fallbacks, 1);
  EXPECT_EQ(r.final_mode, Mode::Landed);
  replay(r);
}

INSTANTIATE_TEST_SUITE_P(Scenarios, EveryScenario, ::testing::ValuesIn(all_scenarios()),
                         [](const auto& info) { return info.param; });

TEST(Mission, EmptyTimelineRunsToBudget) {
  RunOptions o;
  o.ticks = 700;
  RunRecord r = run_scenario(scenario("patrol_2x3"), o);
  EXPECT_EQ(r.final_mode, Mode::Running);
  EXPECT_GE(parse_log_line(r.log.back()).tick, 680u);
  EXPECT_LT(parse_log_line(r.log.back()).tick, 700u);
}

TEST(Mission, SeedIsRecorded) {
  RunOptions o;
  o.seed = 99;
  o.ticks = 50;
  RunRecord r = run_scenario(scenario("patrol_2x3"), o);
  EXPECT_EQ(r.seed, 99u);
  json j = r.to_json();
  EXPECT_EQ(j["seed"], 99);
  EXPECT_EQ(j["final_mode"], "running");
  EXPECT_TRUE(j["synthesis"][0].contains("peak_rss_kb"));
  EXPECT_GT(j["synthesis"][0]["arena_states"].get<int>(), 0);
}

TEST(Mission, SimSpeedScalesWorldTime) {
  RunOptions slow, fast;
  slow.ticks = fast.ticks = 200;
  fast.sim_speed = 4;
  auto arrivals = [](const RunRecord& r) {
    int n = 0;
    for (auto& l : r.log) n += l.find(" in at.") != std::string::npos;
    return n;
  };
  EXPECT_GT(arrivals(run_scenario(scenario("patrol_2x3"), fast)), 3 * arrivals(run_scenario(scenario("patrol_2x3"), slow)));
}

TEST(Mission, BadScenariosReportTheStep) {
  auto dir = fs::temp_directory_path() / "skyweave_bad";
  fs::create_directories(dir);
  std::ofstream(dir / "world.json") << R"({"rows": 2, "cols": 3, "regions": {"NoFlyOld": [3, 4, 5]}})";
  auto write = [&](const json& sc) { std::ofstream(dir / "scenario.json") << sc.dump(); };
  json sc{{"spec", scenario("patrol_2x3") + "/mission.fsl"}, {"problem", "Patrol"}, {"ticks", 100}};

  sc["timeline"] = {{{"tick", 5}, {"inject", "at.1"}}, {{"tick", 5}, {"inject", "at.2"}}};
  write(sc);
  try {
    run_scenario(dir.string());
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.step(), 2u);
  }

  sc["timeline"] = {{{"tick", 5}, {"update", "Nope"}}};
  write(sc);
  try {
    run_scenario(dir.string());
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.step(), 1u);
  }

  sc["timeline"] = json::array();
  sc["spec"] = "missing.fsl";
  write(sc);
  try {
    run_scenario(dir.string());
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
  fs::remove_all(dir);
}

TEST(Mission, UpdateTableRoundTrip) {
  RunRecord r = run_scenario(scenario("inconsistent_patrol"));
  ASSERT_EQ(r.controllers.size(), 2u);
  UpdateTable t = read_update(r.controllers[1]);
  EXPECT_EQ(write_controller(t.next), r.controllers[1].substr(0, r.controllers[1].find("fmap")));
  EXPECT_THROW(read_update(r.controllers[0]), std::runtime_error);
}
