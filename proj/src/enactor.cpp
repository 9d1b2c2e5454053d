#include "skyweave/enactor.hpp"

#include <sstream>

namespace skyweave {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Running: return "running";
    case Mode::Fallback: return "fallback";
    case Mode::Landed: return "landed";
  }
  return "?";
}

Controller fallback_plan() {
  Lts::Builder b({"rtl", "rtl.end", "land", "land.end"});
  StateId s[5];
  for (auto& x : s) x = b.add_state();
  b.add_transition(s[0], "rtl", s[1]);
  b.add_transition(s[1], "rtl.end", s[2]);
  b.add_transition(s[2], "land", s[3]);
  b.add_transition(s[3], "land.end", s[4]);
  Controller c;
  c.lts = b.build();
  c.alphabet.controlled = {"rtl", "land"};
  c.alphabet.uncontrolled = {"rtl.end", "land.end"};
  c.selection.assign(5, std::nullopt);
  c.selection[0] = c.lts.label_id("rtl");
  c.selection[2] = c.lts.label_id("land");
  return c;
}

namespace {
const std::shared_ptr<const Controller>& shared_fallback() {
  static const auto fb = std::make_shared<const Controller>(fallback_plan());
  return fb;
}
}  // namespace

Enactor::Enactor(Controller c, std::set<std::string> bound)
    : ctl_(std::make_shared<const Controller>(std::move(c))), bound_(std::move(bound)), uploaded_(bound_) {
  state_ = ctl_->lts.initial();
}

void Enactor::request_swap(SwapRequest r) {
  std::lock_guard lk(swap_m_);
  if (pending_) throw EnactorError(EnactorError::Kind::Busy, "a swap is already pending");
  pending_ = std::move(r);
}

bool Enactor::swap_pending() const {
  std::lock_guard lk(swap_m_);
  return pending_.has_value();
}

void Enactor::record(const std::string& dir, const std::string& label, StateId before, StateId after) {
  std::ostringstream os;
  os << tick_ << ' ' << dir << ' ' << label << ' ' << before << ' ' << after;
  log_.push_back(os.str());
}

void Enactor::on_unexpected(const std::string& ev, const std::string& why) {
  (void)why;
  StateId before = state_;
  ctl_ = shared_fallback();
  state_ = ctl_->lts.initial();
  mode_ = Mode::Fallback;
  ++fallbacks_;
  record("fallback", ev, before, state_);
}

void Enactor::consume(const std::string& ev) {
  auto id = ctl_->lts.label_id(ev);
  auto next = id ? ctl_->lts.out(state_, *id) : std::span<const Edge>{};
  if (next.empty()) {
    if (mode_ == Mode::Running)
      on_unexpected(ev);
    else
      record("absorb", ev, state_, state_);
    return;
  }
  StateId before = state_;
  state_ = next.front().target;
  record("in", ev, before, state_);
  if (mode_ == Mode::Fallback && ctl_->lts.out(state_).empty()) mode_ = Mode::Landed;
}

void Enactor::hotswap(const UpdateSolution& sol, const ReconfigManifest& m) {
  if (mode_ != Mode::Running) throw EnactorError(EnactorError::Kind::NotRunning, "hotswap outside running mode");
  if (state_ >= sol.f.size() || sol.f[state_] == kNoState || sol.f[state_] >= sol.next.lts.num_states())
    throw EnactorError(EnactorError::Kind::StaleSolution,
                       "no swap target for controller state " + std::to_string(state_));
  for (auto& b : m.bind)
    if (!uploaded_.count(b)) throw EnactorError(EnactorError::Kind::UnknownModule, "module " + b + " was never uploaded");
  StateId before = state_;
  ctl_ = std::make_shared<const Controller>(sol.next);
  state_ = sol.f[before];
  manifest_ = m;
  ++version_;
  record("swap", dcu_events::kHotSwap, before, state_);
}

void Enactor::apply_reconfig(const ReconfigManifest& m) {
  for (auto& b : m.bind)
    if (!uploaded_.count(b)) throw EnactorError(EnactorError::Kind::UnknownModule, "module " + b + " was never uploaded");
  for (auto& u : m.unbind) {
    bound_.erase(u);
    record("unbind", u, state_, state_);
  }
  for (auto& b : m.bind) {
    bound_.insert(b);
    record("bind", b, state_, state_);
  }
}

TickOutput Enactor::tick() {
  TickOutput out;
  for (auto& ev : inbox_.drain()) consume(ev);

  std::optional<SwapRequest> req;
  {
    std::lock_guard lk(swap_m_);
    req = std::exchange(pending_, std::nullopt);
  }
  if (req) {
    if (mode_ != Mode::Running) {
      record("drop", dcu_events::kHotSwap, state_, state_);
    } else {
      try {
        if (req->version != version_)
          throw EnactorError(EnactorError::Kind::StaleSolution, "solution computed for another controller");
        hotswap(*req->solution, req->manifest);
        out.swapped = true;
      } catch (const EnactorError&) {
        record("stale", dcu_events::kHotSwap, state_, state_);
      }
    }
  }

  if (mode_ != Mode::Landed) {
    if (auto sel = ctl_->selected(state_)) {
      StateId before = state_;
      state_ = ctl_->lts.out(state_, *ctl_->selection[state_]).front().target;
      record("out", *sel, before, state_);
      out.commands.push_back(*sel);
      if (*sel == dcu_events::kReconfig && mode_ == Mode::Running) {
        try {
          apply_reconfig(manifest_);
          out.reconfig = manifest_;
        } catch (const EnactorError&) {
          on_unexpected(*sel, "reconfig failed");
        }
      }
    }
  }
  out.fell_back = mode_ != Mode::Running;
  ++tick_;
  return out;
}

LogRecord parse_log_line(const std::string& line) {
  std::istringstream is(line);
  LogRecord r{};
  if (!(is >> r.tick >> r.dir >> r.label >> r.before >> r.after))
    throw std::invalid_argument("bad log line: " + line);
  return r;
}

}  // namespace skyweave
