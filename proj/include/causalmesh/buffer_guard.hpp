#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "causalmesh/trace.hpp"

namespace causalmesh {

/// Guard limits. A disengaged optional means unbounded / no timer.
struct GuardConfig {
  std::optional<std::size_t> max_size;   // largest buffer tolerated
  std::optional<int> max_retry;          // retries before abandoning a link
  bool timers = false;                   // arm per-phase timeouts
};

/**
 * @brief Bookkeeping that bounds ping phases: outstanding phases, retry
 * counts, and the buffer-size trigger.
 *
 * Pure decision logic; the owning protocol executes the chosen action
 * (reopen or abandon) so the guard never touches links itself.
 */
class BufferGuard {
 public:
  explicit BufferGuard(GuardConfig cfg) : cfg_(cfg) {}

  const GuardConfig& config() const { return cfg_; }

  /// A ping for `phase` targeting q went out.
  void on_ping_sent(std::uint64_t phase, ProcessId q) {
    retries_.try_emplace(q, 0);
    outstanding_[phase] = q;
  }

  /// A pong for `phase` was accepted; clears the phase and retry count.
  void on_ack(std::uint64_t phase) {
    auto it = outstanding_.find(phase);
    if (it == outstanding_.end()) return;  // stale or already handled
    retries_.erase(it->second);
    outstanding_.erase(it);
  }

  /// The link to q closed; purge everything about it.
  void on_close(ProcessId q) {
    for (auto it = outstanding_.begin(); it != outstanding_.end();) {
      it = (it->second == q) ? outstanding_.erase(it) : std::next(it);
    }
    retries_.erase(q);
  }

  /// Would appending one more payload overflow the buffer?
  bool would_overflow(std::size_t current_size) const {
    return cfg_.max_size && current_size >= *cfg_.max_size;
  }

  /// Timer fired: returns the link to retry if the phase is still live.
  std::optional<ProcessId> on_timeout(std::uint64_t phase) {
    auto it = outstanding_.find(phase);
    if (it == outstanding_.end()) return std::nullopt;
    return it->second;
  }

  enum class RetryAction { Reopen, Abandon };

  /// Invalidates q's outstanding phases and counts the retry.
  RetryAction on_retry(ProcessId q) {
    for (auto it = outstanding_.begin(); it != outstanding_.end();) {
      it = (it->second == q) ? outstanding_.erase(it) : std::next(it);
    }
    int count = ++retries_[q];
    if (cfg_.max_retry && count > *cfg_.max_retry) return RetryAction::Abandon;
    return RetryAction::Reopen;
  }

  std::size_t outstanding_count() const { return outstanding_.size(); }
  int retry_count(ProcessId q) const {
    auto it = retries_.find(q);
    return it == retries_.end() ? 0 : it->second;
  }

 private:
  GuardConfig cfg_;
  std::map<std::uint64_t, ProcessId> outstanding_;  // phase id -> pinged link
  std::map<ProcessId, int> retries_;
};

}  // namespace causalmesh
