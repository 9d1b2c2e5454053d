#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "skyweave/mission.hpp"
#include "skyweave/simworld.hpp"
#include "skyweave/spec_lang.hpp"

using namespace skyweave;
using nlohmann::json;

namespace {

// Winding number of poly around p; nonzero means inside.
int winding(Point p, const std::vector<Point>& poly) {
  int w = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    Point a = poly[i], b = poly[(i + 1) % poly.size()];
    double cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && cross > 0) ++w;
    } else if (b.y <= p.y && cross < 0) {
      --w;
    }
  }
  return w;
}

// Simple star-shaped polygon around (cx, cy).
std::vector<Point> random_polygon(std::mt19937_64& rng, double cx, double cy) {
  std::uniform_int_distribution<int> nv(3, 9);
  std::uniform_real_distribution<double> rad(5, 45), jit(0, 0.9);
  int n = nv(rng);
  std::vector<Point> poly;
  for (int k = 0; k < n; ++k) {
    double a = (k + jit(rng)) * 2 * M_PI / n;
    double r = rad(rng);
    poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return poly;
}

World world_with(const json& j) { return World(world_from_json(j)); }

json grid_json(int rows, int cols) {
  return {{"rows", rows}, {"cols", cols}, {"cell_size", 10}, {"initial_cell", 0}};
}

}  // namespace

TEST(Grid, RegionMembershipIsCentreInPolygon) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto poly = random_polygon(rng, 50, 50);
    std::vector<Point> bounds{{0, 0}, {100, 0}, {100, 100}, {0, 100}};
    Grid g = discretize(bounds, 7.5, 0, {{"R", poly}});
    std::set<int> want;
    for (int c : g.cells())
      if (winding(g.centre(c), poly) != 0) want.insert(c);
    EXPECT_EQ(g.regions.at("R"), want) << "polygon " << trial;
    for (int c : g.cells()) EXPECT_EQ(point_in_polygon(g.centre(c), poly), winding(g.centre(c), poly) != 0);
  }
}

TEST(Grid, BoundsCutCellsByCentre) {
  // 130 m square minus a corner: 169 cells less the 6 whose centres fall past
  // the diagonal x + y = 228
  Grid g = discretize({{0, 0}, {130, 0}, {130, 98}, {98, 130}, {0, 130}}, 10);
  EXPECT_EQ(g.cells().size(), 163u);
  EXPECT_FALSE(g.is_active(g.index(12, 12)));
  EXPECT_FALSE(g.is_active(g.index(10, 12)));
  EXPECT_TRUE(g.is_active(g.index(9, 12)));
}

TEST(Grid, AdjacencyIsSymmetricFourNeighbour) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto poly = random_polygon(rng, 50, 50);
    Grid g = discretize(poly, 6, trial * 17.0);
    for (int a : g.cells())
      for (int b : g.neighbours(a)) {
        auto nb = g.neighbours(b);
        EXPECT_NE(std::find(nb.begin(), nb.end(), a), nb.end());
        int dr = std::abs(a / g.cols - b / g.cols), dc = std::abs(a % g.cols - b % g.cols);
        EXPECT_EQ(dr + dc, 1);
        EXPECT_TRUE(g.is_active(b));
      }
  }
}

TEST(Grid, BottomRowNoFlyFluent) {
  Grid g = rect_grid(2, 3);
  g.regions["NoFlyOld"] = {3, 4, 5};
  std::string text = movement_fsl(g);
  EXPECT_NE(text.find("fluent InNoFlyOld = <{at.3, at.4, at.5}, AT \\ {at.3, at.4, at.5}> initially false."),
            std::string::npos)
      << text;
  EXPECT_NE(text.find("fluent At0 = <{at.0}, AT \\ {at.0}> initially true."), std::string::npos);
}

TEST(Grid, SingleCellHasNoMoves) {
  Lts m = movement_lts(rect_grid(1, 1));
  EXPECT_EQ(m.num_states(), 1u);
  EXPECT_TRUE(m.out(m.initial()).empty());
}

TEST(Grid, MovementMatchesAdjacency) {
  Grid g = rect_grid(3, 4);
  Lts m = movement_lts(g);
  // one hover state per cell plus one flying state per directed edge
  std::size_t edges = 0;
  for (int c : g.cells()) edges += g.neighbours(c).size();
  EXPECT_EQ(m.num_states(), g.cells().size() + edges);
}

TEST(Grid, DegenerateBoundsRejected) {
  EXPECT_THROW(discretize({{0, 0}, {1, 1}}, 1), GridError);
  EXPECT_THROW(discretize({{0, 0}, {10, 0}, {10, 10}}, 0), GridError);
  EXPECT_THROW(discretize({{0, 0}, {10, 0}, {20, 0}}, 1), GridError);
}

TEST(Vehicle, ArrivalMatchesClosedForm) {
  for (double cs : {5.0, 10.0, 30.0})
    for (double speed : {1.0, 5.0, 12.0})
      for (double dt : {0.05, 0.1, 0.25}) {
        Grid g = rect_grid(1, 4, cs);
        VehicleState v;
        v.pos = g.centre(0);
        v.flying = true;
        v.target = 3;
        v.arrival = "at.3";
        VehicleParams p;
        p.speed = speed;
        double t = 0;
        bool arrived = false;
        while (t < 1000 && !arrived) {
          auto evs = vehicle_tick(v, dt, g, p);
          t += dt;
          arrived = std::find(evs.begin(), evs.end(), "at.3") != evs.end();
        }
        ASSERT_TRUE(arrived);
        double expect = (3 * cs - arrival_threshold(g)) / speed;
        EXPECT_NEAR(t, expect, dt + 1e-9) << cs << " " << speed << " " << dt;
        EXPECT_FALSE(v.target);
        EXPECT_EQ(g.locate(v.pos), 3);
      }
}

TEST(Vehicle, NoTargetNoMotion) {
  Grid g = rect_grid(2, 2);
  VehicleState v;
  v.pos = {3, 4};
  auto evs = vehicle_tick(v, 0.1, g, {});
  EXPECT_TRUE(evs.empty());
  EXPECT_EQ(v.pos.x, 3);
  EXPECT_EQ(v.pos.y, 4);
}

TEST(Vehicle, LowBatteryOnceOnCrossing) {
  Grid g = rect_grid(1, 1);
  VehicleState v;
  v.flying = true;
  v.battery = 20.1;
  VehicleParams p;
  p.drain_per_s = 2;
  auto first = vehicle_tick(v, 0.1, g, p);
  EXPECT_NEAR(v.battery, 19.9, 1e-9);
  EXPECT_EQ(first, std::vector<std::string>{"low.bat"});
  for (int k = 0; k < 50; ++k) EXPECT_TRUE(vehicle_tick(v, 0.1, g, p).empty());
  EXPECT_GE(v.battery, 0);
}

TEST(Vehicle, JitterNeverLeavesTargetCell) {
  std::mt19937_64 rng(11);
  Grid g = rect_grid(5, 5);
  VehicleParams p;
  p.jitter = 100;  // clamped
  std::uniform_int_distribution<int> cell(0, 24);
  for (int trial = 0; trial < 500; ++trial) {
    VehicleState v;
    v.pos = g.centre(cell(rng));
    v.target = cell(rng);
    v.arrival = "x";
    for (int k = 0; k < 400 && v.target; ++k) {
      int want = *v.target;
      auto evs = vehicle_tick(v, 0.1, g, p, &rng);
      if (!evs.empty()) EXPECT_EQ(g.locate(v.pos), want);
    }
    EXPECT_FALSE(v.target);
  }
}

TEST(Modules, IteratorAndRegionSensor) {
  json j = grid_json(3, 3);
  j["movement"] = false;
  j["regions"] = {{"A", {5}}};
  j["modules"] = {{{"id", "flight"}, {"kind", "flight"}},
                  {{"id", "it"}, {"kind", "iterator"}, {"cells", {5}}},
                  {{"id", "sa"}, {"kind", "region_sensor"}, {"region", "A"}}};
  World w = world_with(j);
  EXPECT_EQ(w.dispatch("has.next?"), std::vector<std::string>{"y.next"});
  EXPECT_EQ(w.dispatch("is.next.inA?"), std::vector<std::string>{"yes.next.inA"});
  w.dispatch("remove.next");
  EXPECT_EQ(w.dispatch("has.next?"), std::vector<std::string>{"n.next"});
  EXPECT_THROW(w.dispatch("is.next.inA?"), SimError);
  w.dispatch("reset");
  EXPECT_EQ(w.dispatch("has.next?"), std::vector<std::string>{"y.next"});
}

TEST(Modules, IteratorEnumeratesEachCellOncePerRound) {
  std::mt19937_64 rng(5);
  Grid g = rect_grid(4, 4);
  World w(world_from_json(grid_json(4, 4)));
  IteratorModule it("it", g.cells());
  std::set<int> seen;
  std::uniform_int_distribution<int> pick(0, 9);
  for (int k = 0; k < 3000; ++k) {
    int r = pick(rng);
    if (r == 0) {
      it.handle("reset", w);
      seen.clear();
    } else if (it.cursor() && r < 6) {
      it.handle("remove.next", w);
    } else {
      it.handle("has.next?", w);
      if (it.cursor()) {
        // a cursor repeats only until it is removed
        if (seen.count(*it.cursor())) {
          auto& rem = it.remaining();
          EXPECT_NE(std::find(rem.begin(), rem.end(), *it.cursor()), rem.end());
        }
        seen.insert(*it.cursor());
      }
    }
  }
}

TEST(Modules, PackagesAlternate) {
  json j = grid_json(1, 2);
  j["modules"] = {{{"id", "cargo"}, {"kind", "package"}, {"packages", {1, 2}}}};
  World w = world_with(j);
  w.dispatch("grab.1");
  w.dispatch("grab.2");
  EXPECT_THROW(w.dispatch("grab.1"), std::logic_error);
  w.dispatch("release.1");
  EXPECT_THROW(w.dispatch("release.1"), std::logic_error);
}

TEST(Modules, DispatchErrors) {
  World w = world_with(grid_json(2, 2));
  try {
    w.dispatch("grab.1");
    FAIL();
  } catch (const SimError& e) {
    EXPECT_EQ(e.kind(), SimError::Kind::UnhandledCommand);
  }
  try {
    w.bind("nothing");
    FAIL();
  } catch (const SimError& e) {
    EXPECT_EQ(e.kind(), SimError::Kind::UnknownModule);
  }
  w.upload(make_module({{"id", "flight2"}, {"kind", "flight"}}, w.grid()));
  try {
    w.bind("flight2");
    FAIL();
  } catch (const SimError& e) {
    EXPECT_EQ(e.kind(), SimError::Kind::AmbiguousHandler);
  }
  try {
    world_from_json({{"rows", 0}, {"cols", 3}});
    FAIL();
  } catch (const SimError& e) {
    EXPECT_EQ(e.kind(), SimError::Kind::BadConfig);
  }
}

TEST(Modules, TimedEventsAndAlarms) {
  json j = grid_json(1, 2);
  j["modules"] = {{{"id", "flight"}, {"kind", "flight"}}, {{"id", "spin"}, {"kind", "spin"}}};
  j["alarms"] = {{{"time", 0.35}, {"event", "low.bat"}}};
  j["vehicle"] = {{"spin_s", 0.5}};
  World w = world_with(j);
  EXPECT_TRUE(w.dispatch("do.spin").empty());
  std::vector<std::pair<int, std::string>> got;
  for (int k = 1; k <= 10; ++k)
    for (auto& e : w.step(0.1)) got.push_back({k, e});
  std::vector<std::pair<int, std::string>> want{{4, "low.bat"}, {5, "spin.ended"}};
  EXPECT_EQ(got, want);
}

TEST(Modules, ScriptedModuleFollowsTable) {
  json j = grid_json(1, 1);
  j["modules"] = {{{"id", "cam"}, {"kind", "scripted"}, {"commands", {{"snap", {"ok", {"done", 0.2}}}}}}};
  World w = world_with(j);
  EXPECT_EQ(w.dispatch("snap"), std::vector<std::string>{"ok"});
  EXPECT_TRUE(w.step(0.1).empty());
  EXPECT_EQ(w.step(0.1), std::vector<std::string>{"done"});
}

// Cover every cell of a 3x3 grid with the iterator mission; each cell is
// reached exactly once before n.next.
TEST(Cover, ThreeByThreeVisitsEachCellOnce) {
  auto dir = std::filesystem::temp_directory_path() / "skyweave_cover3";
  std::filesystem::create_directories(dir);
  json world{{"rows", 3}, {"cols", 3}, {"cell_size", 10}, {"initial_cell", 0}, {"movement", false},
             {"regions", {{"A", {0, 1, 2, 3, 4, 5, 6, 7, 8}}}},
             {"modules", {{{"id", "flight"}, {"kind", "flight"}},
                          {{"id", "iterator"}, {"kind", "iterator"}},
                          {{"id", "sensorA"}, {"kind", "region_sensor"}, {"region", "A"}}}}};
  json sc{{"spec", std::string(SKYWEAVE_SOURCE_DIR) + "/scenarios/iterator_cover/mission.fsl"},
          {"problem", "CoverA"},
          {"ticks", 1500},
          {"assertions", {{{"kind", "coverage"}, {"region", "A"}}}}};
  std::ofstream(dir / "world.json") << world.dump();
  std::ofstream(dir / "scenario.json") << sc.dump();
  RunRecord r = run_scenario(dir.string());
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_TRUE(r.verdicts[0].pass) << r.verdicts[0].detail;
  std::filesystem::remove_all(dir);
}

// Whatever the world produces must be a trace of the environment model the
// controller was synthesized against.
TEST(Cover, SimulatedTraceIsAnEnvironmentTrace) {
  for (std::string name : {"patrol_2x3", "iterator_cover", "delivery"}) {
    std::string root = std::string(SKYWEAVE_SOURCE_DIR) + "/scenarios/" + name;
    RunOptions o;
    o.ticks = 2400;  // before any update
    RunRecord r = run_scenario(root, o);
    WorldConfig wc = load_world(root + "/world.json");
    std::ifstream in(root + "/scenario.json");
    json sc = json::parse(in);
    std::ifstream fin(root + "/" + sc["spec"].get<std::string>());
    std::string fsl((std::istreambuf_iterator<char>(fin)), {});
    Document doc = parse_or_throw(mission_text(wc, fsl));
    std::string env = doc.control_problem(sc["problem"])->env;
    Lts e = build_system(doc, env);
    StateId s = e.initial();
    std::size_t checked = 0;
    for (auto& l : trace_of(r.log)) {
      if (l == "hotSwap" || l == "stopOld" || l == "startNew" || l == "reconfig") break;
      auto id = e.label_id(l);
      if (!id) continue;
      auto next = e.out(s, *id);
      ASSERT_FALSE(next.empty()) << name << ": " << l << " not enabled after " << checked << " events";
      s = next.front().target;
      ++checked;
    }
    EXPECT_GT(checked, 20u) << name;
  }
}
