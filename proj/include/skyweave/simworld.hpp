#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skyweave/grid.hpp"

namespace skyweave {

class SimError : public std::runtime_error {
 public:
  enum class Kind { UnhandledCommand, AmbiguousHandler, UnknownModule, BadConfig };
  SimError(Kind k, const std::string& m) : std::runtime_error(m), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct VehicleParams {
  double speed = 5;          // m/s
  double drain_per_s = 0.05; // battery percent per airborne second
  double low_battery = 20;
  double jitter = 0;         // metres, clamped to threshold/2
  double takeoff_s = 2, land_s = 2, spin_s = 4;
  double altitude = 10;
};

struct VehicleState {
  Point pos;
  double alt = 0;
  double speed = 0;
  bool flying = false;
  std::optional<int> target;
  std::string arrival;  // event emitted on reaching target
  double battery = 100;
  bool low_sent = false;
};

// Straight-line motion toward the target centre; arrival below cellSize/4.
// Emits the arrival event and low.bat (once, on crossing the threshold).
std::vector<std::string> vehicle_tick(VehicleState& v, double dt, const Grid& g, const VehicleParams& p,
                                      std::mt19937_64* rng = nullptr);
double arrival_threshold(const Grid& g);

class World;

class HybridModule {
 public:
  virtual ~HybridModule() = default;
  const std::string& id() const { return id_; }
  virtual std::set<std::string> commands(const World& w) const = 0;
  virtual std::set<std::string> events(const World& w) const = 0;
  virtual void handle(const std::string& cmd, World& w) = 0;
  virtual nlohmann::json status() const { return nlohmann::json::object(); }

 protected:
  explicit HybridModule(std::string id) : id_(std::move(id)) {}

 private:
  std::string id_;
};

// kinds: flight, package, spin, iterator, region_sensor, person_sensor,
// height, scripted.  An iterator without a cell list walks every cell of g.
std::unique_ptr<HybridModule> make_module(const nlohmann::json& manifest, const Grid& g);

struct WorldConfig {
  Grid grid;
  ModelOptions model;
  bool movement = true;  // prepend the go/at movement model to the mission
  bool airborne = true;
  VehicleParams vehicle;
  std::vector<nlohmann::json> modules;  // uploaded and bound at start
  std::vector<std::pair<double, std::string>> alarms;  // scripted events
  std::set<int> persons;                               // cells where sense.person finds someone
  std::uint64_t seed = 1;
};

// bounds polygon or rows/cols, regions as polygons or cell lists, vehicle,
// modules, alarms, persons
WorldConfig world_from_json(const nlohmann::json& j);
WorldConfig load_world(const std::string& path);

class World {
 public:
  explicit World(WorldConfig cfg);

  const Grid& grid() const { return cfg_.grid; }
  const WorldConfig& config() const { return cfg_; }
  double time() const { return time_; }
  VehicleState& vehicle() { return v_; }
  const VehicleState& vehicle() const { return v_; }
  int launch_cell() const { return cfg_.model.initial_cell; }
  std::optional<int> cell() const { return cfg_.grid.locate(v_.pos); }

  // Modules are uploaded first and bound separately.
  void upload(std::unique_ptr<HybridModule> m);
  bool uploaded(const std::string& id) const { return modules_.count(id) > 0; }
  void bind(const std::string& id);
  void unbind(const std::string& id);
  const std::set<std::string>& bound() const { return bound_; }
  HybridModule* module(const std::string& id);
  template <class T>
  T* find_bound() {
    for (auto& id : bound_)
      if (auto* m = dynamic_cast<T*>(modules_.at(id).get())) return m;
    return nullptr;
  }

  // Runs the command's handler; events it answers immediately are returned.
  std::vector<std::string> dispatch(const std::string& cmd);
  // Advances the clock by dt and returns the events that became due.
  std::vector<std::string> step(double dt);

  // used by handlers
  // An effect runs on the world when a delayed event falls due.
  void emit(const std::string& ev, double delay = 0, std::function<void(World&)> effect = {});
  std::mt19937_64& rng() { return rng_; }
  nlohmann::json telemetry() const;

 private:
  WorldConfig cfg_;
  VehicleState v_;
  double time_ = 0;
  std::map<std::string, std::unique_ptr<HybridModule>> modules_;
  std::set<std::string> bound_;
  struct Timed {
    double at;
    std::uint64_t seq;
    std::string ev;
    std::function<void(World&)> effect;
  };
  std::vector<Timed> pending_;
  std::vector<std::string> immediate_;
  std::uint64_t seq_ = 0;
  std::size_t next_alarm_ = 0;
  std::mt19937_64 rng_;
};

// Row-major cursor over a list of cells: has.next? / remove.next / reset.
class IteratorModule : public HybridModule {
 public:
  IteratorModule(std::string id, std::vector<int> cells);
  std::set<std::string> commands(const World&) const override;
  std::set<std::string> events(const World&) const override;
  void handle(const std::string& cmd, World& w) override;
  nlohmann::json status() const override;
  std::optional<int> cursor() const { return cursor_; }
  const std::vector<int>& remaining() const { return remaining_; }

 private:
  std::vector<int> all_, remaining_;
  std::optional<int> cursor_;
};

}  // namespace skyweave
