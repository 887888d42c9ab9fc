#pragma once

#include "lexrl/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace lexrl {

struct EpisodeRecord {
  std::int64_t episode = 0;  // 1-based, strictly increasing
  std::int64_t length = 0;
  VectorXd returns;          // undiscounted return per objective
  std::int64_t global_step = 0;
};

struct MetricsSeries {
  Index num_objectives = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<double> q_deltas;  // optional: largest |dQ| seen during each episode

  explicit MetricsSeries(Index m = 0) : num_objectives(m) {}

  /// Appends the next episode; its index is one past the last.
  void add_episode(std::int64_t length, const VectorXd& returns, std::int64_t global_step);
};

struct ConvergenceConfig {
  std::int64_t window = 50;   // E
  double threshold = 0.05;    // delta
};

/// Streaming form of detect_convergence. Feed per-episode returns in order;
/// the first episode at which the criterion holds is latched.
///
/// The tracked quantity is the running (cumulative) mean of the per-episode
/// return averaged over objectives. Detection happens at the first episode
/// e >= E whose trailing window of E running-mean values satisfies
/// (max - min) / max(1, |window mean|) < delta.
class ConvergenceDetector {
public:
  explicit ConvergenceDetector(ConvergenceConfig config);

  /// Returns true when this episode is the detection episode.
  bool push(std::int64_t episode, const VectorXd& returns);

  std::optional<std::int64_t> converged_at() const { return converged_at_; }

private:
  ConvergenceConfig config_;
  double return_sum_ = 0.0;
  std::int64_t count_ = 0;
  std::vector<double> window_;  // ring buffer of running means
  std::size_t head_ = 0;
  std::optional<std::int64_t> converged_at_;
};

/// Episode index at which the series first converges, or nullopt.
std::optional<std::int64_t> detect_convergence(const MetricsSeries& series,
                                               const ConvergenceConfig& config = {});

}  // namespace lexrl
