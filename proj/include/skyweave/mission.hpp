#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skyweave/enactor.hpp"
#include "skyweave/simworld.hpp"

namespace skyweave {

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::size_t step, const std::string& m)
      : std::runtime_error("step " + std::to_string(step) + ": " + m), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct SynthMetric {
  std::string what;
  bool realizable = false;
  double wall_ms = 0;
  std::size_t arena_states = 0;
  std::size_t controller_states = 0;
  long peak_rss_kb = 0;
};

struct AssertionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunRecord {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<std::string> log;        // enactor log
  std::vector<std::string> world_log;  // "<tick> <event> <cell>" for world events, "<tick> cmd <label> -"
  std::vector<SynthMetric> synth;
  std::vector<AssertionResult> verdicts;
  Mode final_mode = Mode::Running;
  std::vector<std::string> controllers;  // tables, in activation order

  bool passed() const;
  std::string event_log() const;
  nlohmann::json to_json() const;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  double sim_speed = 1;  // world seconds per tick = dt * sim_speed
  std::optional<long> ticks;
  // At this tick, post an at.<cell> the controller does not expect.
  std::optional<long> spurious_at;
};

// A scenario directory holds scenario.json plus the world and spec it names.
RunRecord run_scenario(const std::string& dir, const RunOptions& opts = {});

// World movement model (if enabled) followed by the mission text.
std::string mission_text(const WorldConfig& w, const std::string& fsl);

// Peak resident set of this process.
long peak_rss_kb();

// Labels the controllers took, in order (in, out and swap records).
std::vector<std::string> trace_of(const std::vector<std::string>& log);

// Checks one assertion object against a finished (or partial) run.
AssertionResult check_assertion(const nlohmann::json& a, const Document& doc, const RunRecord& r);

}  // namespace skyweave
