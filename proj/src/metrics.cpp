#include "lexrl/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace lexrl {

void MetricsSeries::add_episode(std::int64_t length, const VectorXd& returns, std::int64_t global_step) {
  if (returns.size() != num_objectives) throw ContractError("add_episode: return vector has wrong length");
  const std::int64_t next = episodes.empty() ? 1 : episodes.back().episode + 1;
  episodes.push_back({next, length, returns, global_step});
}

ConvergenceDetector::ConvergenceDetector(ConvergenceConfig config) : config_(config) {
  if (config_.window < 1) throw ContractError("convergence window must be positive");
  window_.reserve(static_cast<std::size_t>(config_.window));
}

bool ConvergenceDetector::push(std::int64_t episode, const VectorXd& returns) {
  return_sum_ += returns.size() > 0 ? returns.mean() : 0.0;
  ++count_;
  const double running = return_sum_ / static_cast<double>(count_);
  const auto E = static_cast<std::size_t>(config_.window);
  if (window_.size() < E) {
    window_.push_back(running);
  } else {
    window_[head_] = running;
    head_ = (head_ + 1) % E;
  }
  if (converged_at_ || window_.size() < E) return false;

  const auto [lo, hi] = std::minmax_element(window_.begin(), window_.end());
  double mean = 0.0;
  for (double v : window_) mean += v;
  mean /= static_cast<double>(E);
  if ((*hi - *lo) / std::max(1.0, std::abs(mean)) < config_.threshold) {
    converged_at_ = episode;
    return true;
  }
  return false;
}

std::optional<std::int64_t> detect_convergence(const MetricsSeries& series, const ConvergenceConfig& config) {
  ConvergenceDetector detector(config);
  for (const EpisodeRecord& e : series.episodes)
    if (detector.push(e.episode, e.returns)) break;
  return detector.converged_at();
}

}  // namespace lexrl
