#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skyweave/dcu.hpp"

namespace skyweave {

class EnactorError : public std::runtime_error {
 public:
  enum class Kind { StaleSolution, UnknownModule, NotRunning, Busy };
  EnactorError(Kind k, const std::string& m) : std::runtime_error(m), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class Mode { Running, Fallback, Landed };
const char* to_string(Mode m);

struct ReconfigManifest {
  std::vector<std::string> bind, unbind;
  bool empty() const { return bind.empty() && unbind.empty(); }
};

struct SwapRequest {
  std::shared_ptr<const UpdateSolution> solution;
  std::uint64_t version = 0;  // controller version the solution was computed for
  ReconfigManifest manifest;  // applied when the new controller emits reconfig
};

// Return to launch, then land.  Every other event is absorbed.
Controller fallback_plan();

// Mutex-guarded FIFO shared between producers and the enactment loop.
template <class T>
class Fifo {
 public:
  void push(T x) {
    std::lock_guard lk(m_);
    q_.push_back(std::move(x));
  }
  std::deque<T> drain() {
    std::lock_guard lk(m_);
    return std::exchange(q_, {});
  }
  std::size_t size() const {
    std::lock_guard lk(m_);
    return q_.size();
  }

 private:
  mutable std::mutex m_;
  std::deque<T> q_;
};

struct TickOutput {
  std::vector<std::string> commands;
  std::optional<ReconfigManifest> reconfig;  // bind/unbind to perform with the reconfig command
  bool swapped = false;
  bool fell_back = false;
};

// Single-threaded over its state; post() and request_swap() may be called
// from any thread and only take effect at the next tick.
class Enactor {
 public:
  explicit Enactor(Controller c, std::set<std::string> bound = {});

  void post(const std::string& ev) { inbox_.push(ev); }
  // Busy if a swap is already waiting.
  void request_swap(SwapRequest r);
  bool swap_pending() const;

  // Drain the inbox, perform a pending swap, then emit at most one command.
  TickOutput tick();

  void hotswap(const UpdateSolution& sol, const ReconfigManifest& m = {});
  void on_unexpected(const std::string& ev, const std::string& why = "not enabled");
  void apply_reconfig(const ReconfigManifest& m);
  void uploaded(const std::string& module) { uploaded_.insert(module); }

  const Controller& controller() const { return *ctl_; }
  StateId state() const { return state_; }
  Mode mode() const { return mode_; }
  std::uint64_t version() const { return version_; }
  std::uint64_t tick_index() const { return tick_; }
  const std::set<std::string>& bound() const { return bound_; }
  const std::vector<std::string>& log() const { return log_; }
  std::size_t fallbacks() const { return fallbacks_; }

 private:
  void record(const std::string& dir, const std::string& label, StateId before, StateId after);
  void consume(const std::string& ev);

  std::shared_ptr<const Controller> ctl_;
  StateId state_;
  Mode mode_ = Mode::Running;
  std::uint64_t version_ = 0, tick_ = 0;
  std::set<std::string> bound_, uploaded_;
  ReconfigManifest manifest_;
  Fifo<std::string> inbox_;
  mutable std::mutex swap_m_;
  std::optional<SwapRequest> pending_;
  std::vector<std::string> log_;
  std::size_t fallbacks_ = 0;
};

// One log line: "<tick> <dir> <label> <before> <after>".
struct LogRecord {
  std::uint64_t tick;
  std::string dir, label;
  StateId before, after;
};
LogRecord parse_log_line(const std::string& line);

}  // namespace skyweave
