#include "skyweave/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace skyweave {

using nlohmann::json;

double arrival_threshold(const Grid& g) { return g.cell_size / 4; }

std::vector<std::string> vehicle_tick(VehicleState& v, double dt, const Grid& g, const VehicleParams& p,
                                      std::mt19937_64* rng) {
  std::vector<std::string> out;
  if (v.target) {
    Point c = g.centre(*v.target);
    double dx = c.x - v.pos.x, dy = c.y - v.pos.y, d = std::hypot(dx, dy);
    double step = std::min(d, p.speed * dt);
    if (d > 0) v.pos = {v.pos.x + dx / d * step, v.pos.y + dy / d * step};
    v.speed = p.speed;
    if (std::hypot(c.x - v.pos.x, c.y - v.pos.y) < arrival_threshold(g)) {
      if (rng && p.jitter > 0) {
        double j = std::min(p.jitter, arrival_threshold(g) / 2);
        std::uniform_real_distribution<double> u(-j / std::sqrt(2.0), j / std::sqrt(2.0));
        v.pos.x += u(*rng);
        v.pos.y += u(*rng);
      }
      if (g.locate(v.pos) != v.target) throw std::logic_error("arrival outside target cell");
      out.push_back(v.arrival);
      v.target.reset();
      v.speed = 0;
    }
  }
  if (v.flying) {
    double before = v.battery;
    v.battery = std::max(0.0, v.battery - p.drain_per_s * dt);
    if (!v.low_sent && before >= p.low_battery && v.battery < p.low_battery) {
      v.low_sent = true;
      out.push_back("low.bat");
    }
  }
  return out;
}

namespace {

std::set<std::string> region_cells_labels(const std::string& prefix, const std::vector<int>& cells) {
  std::set<std::string> s;
  for (int i : cells) s.insert(prefix + std::to_string(i));
  return s;
}

class FlightModule : public HybridModule {
 public:
  explicit FlightModule(std::string id) : HybridModule(std::move(id)) {}
  std::set<std::string> commands(const World& w) const override {
    auto s = region_cells_labels("go.", w.grid().cells());
    s.insert({"go.next", "takeOff", "land", "rtl"});
    return s;
  }
  std::set<std::string> events(const World& w) const override {
    auto s = region_cells_labels("at.", w.grid().cells());
    s.insert({"at.next", "takeOff.end", "land.end", "rtl.end"});
    return s;
  }
  void handle(const std::string& cmd, World& w) override {
    auto& v = w.vehicle();
    const auto& p = w.config().vehicle;
    if (cmd == "takeOff") {
      v.flying = true;
      w.emit("takeOff.end", p.takeoff_s, [](World& w) { w.vehicle().alt = w.config().vehicle.altitude; });
    } else if (cmd == "land") {
      v.target.reset();
      w.emit("land.end", p.land_s, [](World& w) {
        w.vehicle().flying = false;
        w.vehicle().alt = 0;
      });
    } else if (cmd == "rtl") {
      v.target = w.launch_cell();
      v.arrival = "rtl.end";
    } else if (cmd == "go.next") {
      auto* it = w.find_bound<IteratorModule>();
      if (!it || !it->cursor()) throw SimError(SimError::Kind::UnhandledCommand, "go.next without an iterator cursor");
      v.target = *it->cursor();
      v.arrival = "at.next";
    } else {
      int i = std::stoi(cmd.substr(3));
      v.target = i;
      v.arrival = "at." + std::to_string(i);
    }
  }
};

class PackageModule : public HybridModule {
 public:
  PackageModule(std::string id, std::vector<int> pkgs) : HybridModule(std::move(id)), pkgs_(std::move(pkgs)) {}
  std::set<std::string> commands(const World&) const override {
    std::set<std::string> s;
    for (int i : pkgs_) s.insert({"grab." + std::to_string(i), "release." + std::to_string(i)});
    return s;
  }
  std::set<std::string> events(const World&) const override { return {}; }
  void handle(const std::string& cmd, World&) override {
    bool grab = cmd.rfind("grab.", 0) == 0;
    int i = std::stoi(cmd.substr(cmd.find('.') + 1));
    if (grab == (holding_.count(i) > 0)) throw std::logic_error(cmd + " out of order");
    if (grab)
      holding_.insert(i);
    else
      holding_.erase(i);
  }
  json status() const override { return {{"holding", holding_}}; }

 private:
  std::vector<int> pkgs_;
  std::set<int> holding_;
};

class SpinModule : public HybridModule {
 public:
  explicit SpinModule(std::string id) : HybridModule(std::move(id)) {}
  std::set<std::string> commands(const World&) const override { return {"do.spin"}; }
  std::set<std::string> events(const World&) const override { return {"spin.ended"}; }
  void handle(const std::string&, World& w) override { w.emit("spin.ended", w.config().vehicle.spin_s); }
};

class RegionSensorModule : public HybridModule {
 public:
  RegionSensorModule(std::string id, std::string region) : HybridModule(std::move(id)), region_(std::move(region)) {}
  std::set<std::string> commands(const World&) const override { return {"is.next.in" + region_ + "?"}; }
  std::set<std::string> events(const World&) const override {
    return {"yes.next.in" + region_, "no.next.in" + region_};
  }
  void handle(const std::string&, World& w) override {
    auto* it = w.find_bound<IteratorModule>();
    if (!it || !it->cursor()) throw SimError(SimError::Kind::UnhandledCommand, "sensor query without a cursor");
    auto r = w.grid().regions.find(region_);
    bool in = r != w.grid().regions.end() && r->second.count(*it->cursor());
    w.emit((in ? "yes.next.in" : "no.next.in") + region_);
  }

 private:
  std::string region_;
};

class PersonSensorModule : public HybridModule {
 public:
  explicit PersonSensorModule(std::string id) : HybridModule(std::move(id)) {}
  std::set<std::string> commands(const World&) const override { return {"sense.person"}; }
  std::set<std::string> events(const World&) const override { return {"found", "not.found"}; }
  void handle(const std::string&, World& w) override {
    auto c = w.cell();
    w.emit(c && w.config().persons.count(*c) ? "found" : "not.found");
  }
};

class HeightModule : public HybridModule {
 public:
  explicit HeightModule(std::string id) : HybridModule(std::move(id)) {}
  std::set<std::string> commands(const World&) const override { return {"low.height", "high.height"}; }
  std::set<std::string> events(const World&) const override { return {}; }
  void handle(const std::string& cmd, World& w) override {
    w.vehicle().alt = cmd == "low.height" ? w.config().vehicle.altitude / 2 : w.config().vehicle.altitude;
  }
};

// {"commands": {"cmd": [["event", delay], ...]}}
class ScriptedModule : public HybridModule {
 public:
  ScriptedModule(std::string id, const json& script) : HybridModule(std::move(id)) {
    for (auto& [cmd, evs] : script.items())
      for (auto& e : evs) {
        if (e.is_string())
          table_[cmd].push_back({e.get<std::string>(), 0});
        else
          table_[cmd].push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
      }
  }
  std::set<std::string> commands(const World&) const override {
    std::set<std::string> s;
    for (auto& [c, _] : table_) s.insert(c);
    return s;
  }
  std::set<std::string> events(const World&) const override {
    std::set<std::string> s;
    for (auto& [_, evs] : table_)
      for (auto& e : evs) s.insert(e.first);
    return s;
  }
  void handle(const std::string& cmd, World& w) override {
    for (auto& [ev, delay] : table_.at(cmd)) w.emit(ev, delay);
  }

 private:
  std::map<std::string, std::vector<std::pair<std::string, double>>> table_;
};

}  // namespace

IteratorModule::IteratorModule(std::string id, std::vector<int> cells)
    : HybridModule(std::move(id)), all_(std::move(cells)) {
  std::sort(all_.begin(), all_.end());
  remaining_ = all_;
}

std::set<std::string> IteratorModule::commands(const World&) const { return {"has.next?", "remove.next", "reset"}; }
std::set<std::string> IteratorModule::events(const World&) const { return {"y.next", "n.next"}; }

void IteratorModule::handle(const std::string& cmd, World& w) {
  if (cmd == "has.next?") {
    if (remaining_.empty()) {
      cursor_.reset();
      w.emit("n.next");
    } else {
      cursor_ = remaining_.front();
      w.emit("y.next");
    }
  } else if (cmd == "remove.next") {
    if (cursor_) remaining_.erase(std::find(remaining_.begin(), remaining_.end(), *cursor_));
    cursor_.reset();
  } else {
    remaining_ = all_;
    cursor_.reset();
  }
}

json IteratorModule::status() const {
  json j{{"remaining", remaining_.size()}};
  if (cursor_) j["cursor"] = *cursor_;
  return j;
}

std::unique_ptr<HybridModule> make_module(const json& m, const Grid& g) {
  std::string id = m.at("id"), kind = m.value("kind", "scripted");
  if (kind == "flight") return std::make_unique<FlightModule>(id);
  if (kind == "package") return std::make_unique<PackageModule>(id, m.value("packages", std::vector<int>{1}));
  if (kind == "spin") return std::make_unique<SpinModule>(id);
  if (kind == "iterator") return std::make_unique<IteratorModule>(id, m.value("cells", g.cells()));
  if (kind == "region_sensor") return std::make_unique<RegionSensorModule>(id, m.at("region").get<std::string>());
  if (kind == "person_sensor") return std::make_unique<PersonSensorModule>(id);
  if (kind == "height") return std::make_unique<HeightModule>(id);
  if (kind == "scripted") return std::make_unique<ScriptedModule>(id, m.at("commands"));
  throw SimError(SimError::Kind::BadConfig, "unknown module kind '" + kind + "'");
}

namespace {

std::vector<Point> polygon(const json& j) {
  std::vector<Point> out;
  for (auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

}  // namespace

WorldConfig world_from_json(const json& j) {
  WorldConfig c;
  try {
    double cs = j.value("cell_size", 10.0);
    std::map<std::string, std::vector<Point>> polys;
    std::map<std::string, std::vector<int>> lists;
    const json regions = j.value("regions", json::object());
    for (auto& [name, r] : regions.items()) {
      if (!r.empty() && r.front().is_number())
        lists[name] = r.get<std::vector<int>>();
      else
        polys[name] = polygon(r);
    }
    if (j.contains("bounds"))
      c.grid = discretize(polygon(j["bounds"]), cs, j.value("angle", 0.0), polys);
    else {
      c.grid = rect_grid(j.at("rows"), j.at("cols"), cs);
      if (!polys.empty()) {
        for (auto& [name, poly] : polys) {
          auto& cells = c.grid.regions[name];
          for (int i : c.grid.cells())
            if (point_in_polygon(c.grid.centre(i), poly)) cells.insert(i);
        }
      }
    }
    for (auto& [name, ids] : lists) {
      auto& cells = c.grid.regions[name];
      for (int i : ids) {
        if (!c.grid.is_active(i)) throw SimError(SimError::Kind::BadConfig, "region " + name + ": bad cell " + std::to_string(i));
        cells.insert(i);
      }
    }
    c.model.initial_cell = j.value("initial_cell", c.grid.cells().front());
    c.model.go_terminated = j.value("go_terminated", false);
    c.movement = j.value("movement", true);
    c.airborne = j.value("airborne", true);
    c.seed = j.value("seed", 1);
    if (j.contains("vehicle")) {
      auto& v = j["vehicle"];
      VehicleParams d;
      c.vehicle.speed = v.value("speed", d.speed);
      c.vehicle.drain_per_s = v.value("drain_per_s", d.drain_per_s);
      c.vehicle.low_battery = v.value("low_battery", d.low_battery);
      c.vehicle.jitter = v.value("jitter", d.jitter);
      c.vehicle.takeoff_s = v.value("takeoff_s", d.takeoff_s);
      c.vehicle.land_s = v.value("land_s", d.land_s);
      c.vehicle.spin_s = v.value("spin_s", d.spin_s);
      c.vehicle.altitude = v.value("altitude", d.altitude);
    }
    if (j.contains("modules"))
      c.modules = j["modules"].get<std::vector<json>>();
    else
      c.modules = {json{{"id", "flight"}, {"kind", "flight"}}};
    for (auto& a : j.value("alarms", json::array())) c.alarms.emplace_back(a.at("time"), a.at("event"));
    std::stable_sort(c.alarms.begin(), c.alarms.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (int p : j.value("persons", std::vector<int>{})) c.persons.insert(p);
  } catch (const json::exception& e) {
    throw SimError(SimError::Kind::BadConfig, std::string("world config: ") + e.what());
  } catch (const GridError& e) {
    throw SimError(SimError::Kind::BadConfig, std::string("world config: ") + e.what());
  }
  if (!c.grid.is_active(c.model.initial_cell)) throw SimError(SimError::Kind::BadConfig, "initial cell is not active");
  return c;
}

WorldConfig load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimError(SimError::Kind::BadConfig, "cannot open " + path);
  try {
    return world_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw SimError(SimError::Kind::BadConfig, path + ": " + e.what());
  }
}

World::World(WorldConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  v_.pos = cfg_.grid.centre(cfg_.model.initial_cell);
  v_.flying = cfg_.airborne;
  v_.alt = cfg_.airborne ? cfg_.vehicle.altitude : 0;
  for (auto& m : cfg_.modules) {
    auto mod = make_module(m, cfg_.grid);
    std::string id = mod->id();
    upload(std::move(mod));
    bind(id);
  }
}

void World::upload(std::unique_ptr<HybridModule> m) {
  std::string id = m->id();
  if (bound_.count(id)) throw SimError(SimError::Kind::BadConfig, "module " + id + " is bound");
  modules_[id] = std::move(m);
}

void World::bind(const std::string& id) {
  auto it = modules_.find(id);
  if (it == modules_.end()) throw SimError(SimError::Kind::UnknownModule, "module " + id + " was never uploaded");
  if (bound_.count(id)) return;
  auto cmds = it->second->commands(*this), evs = it->second->events(*this);
  for (auto& other : bound_) {
    auto& o = *modules_.at(other);
    for (auto& c : o.commands(*this))
      if (cmds.count(c)) throw SimError(SimError::Kind::AmbiguousHandler, c + " handled by " + other + " and " + id);
    for (auto& e : o.events(*this))
      if (evs.count(e)) throw SimError(SimError::Kind::AmbiguousHandler, e + " produced by " + other + " and " + id);
  }
  bound_.insert(id);
}

void World::unbind(const std::string& id) { bound_.erase(id); }

HybridModule* World::module(const std::string& id) {
  auto it = modules_.find(id);
  return it == modules_.end() ? nullptr : it->second.get();
}

std::vector<std::string> World::dispatch(const std::string& cmd) {
  HybridModule* h = nullptr;
  for (auto& id : bound_) {
    auto& m = *modules_.at(id);
    if (!m.commands(*this).count(cmd)) continue;
    if (h) throw SimError(SimError::Kind::AmbiguousHandler, cmd + " handled by " + h->id() + " and " + id);
    h = &m;
  }
  if (!h) throw SimError(SimError::Kind::UnhandledCommand, "no bound module handles " + cmd);
  h->handle(cmd, *this);
  return std::exchange(immediate_, {});
}

void World::emit(const std::string& ev, double delay, std::function<void(World&)> effect) {
  if (delay <= 0 && !effect) {
    immediate_.push_back(ev);
    return;
  }
  pending_.push_back({time_ + delay, seq_++, ev, std::move(effect)});
}

std::vector<std::string> World::step(double dt) {
  time_ += dt;
  std::vector<std::string> out;
  std::stable_sort(pending_.begin(), pending_.end(),
                   [](const Timed& a, const Timed& b) { return a.at != b.at ? a.at < b.at : a.seq < b.seq; });
  std::size_t k = 0;
  for (; k < pending_.size() && pending_[k].at <= time_ + 1e-9; ++k) {
    if (pending_[k].effect) pending_[k].effect(*this);
    out.push_back(pending_[k].ev);
  }
  pending_.erase(pending_.begin(), pending_.begin() + k);
  for (auto& e : vehicle_tick(v_, dt, cfg_.grid, cfg_.vehicle, &rng_)) out.push_back(e);
  for (; next_alarm_ < cfg_.alarms.size() && cfg_.alarms[next_alarm_].first <= time_ + 1e-9; ++next_alarm_)
    out.push_back(cfg_.alarms[next_alarm_].second);
  return out;
}

json World::telemetry() const {
  json j{{"t", time_},
         {"x", v_.pos.x},
         {"y", v_.pos.y},
         {"alt", v_.alt},
         {"flying", v_.flying},
         {"battery", v_.battery},
         {"bound", bound_}};
  auto c = cell();
  j["cell"] = c ? json(*c) : json();
  j["target"] = v_.target ? json(*v_.target) : json();
  json mods = json::object();
  for (auto& id : bound_) {
    auto s = modules_.at(id)->status();
    if (!s.empty()) mods[id] = s;
  }
  if (!mods.empty()) j["modules"] = mods;
  return j;
}

}  // namespace skyweave
