#pragma once

#include "lexrl/lexoracle.hpp"
#include "lexrl/metrics.hpp"
#include "lexrl/momdp.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lexrl {

/// State features phi(s), stored as an S x d matrix. The one-hot map is kept
/// implicit so that lookups stay O(d).
class FeatureMap {
public:
  static FeatureMap one_hot(Index num_states);

  /// Checks full column rank and rejects a constant feature column.
  static FeatureMap from_matrix(TableXd phi);

  Index num_states() const { return num_states_; }
  Index dim() const { return dim_; }
  bool is_one_hot() const { return one_hot_; }

  /// <phi(s), w> for each column of w (d x k) -> length k.
  VectorXd project(Index s, const TableXd& w) const;
  double dot(Index s, const VectorXd& w) const;

  /// out += phi(s) * row^T, out is d x k.
  void add_outer(TableXd& out, Index s, const VectorXd& row, double scale = 1.0) const;
  void add_scaled(VectorXd& w, Index s, double scale) const;

private:
  Index num_states_ = 0;
  Index dim_ = 0;
  bool one_hot_ = false;
  TableXd phi_;
};

using FeatureMapPtr = std::shared_ptr<const FeatureMap>;

/// Softmax policy over linear logits theta^T phi(s), theta is d x |A|.
struct SoftmaxPolicyParams {
  FeatureMapPtr features;
  TableXd theta;
  double theta_max = 100.0;

  static SoftmaxPolicyParams zeros(FeatureMapPtr features, Index num_actions, double theta_max = 100.0);
  Index num_actions() const { return theta.cols(); }
};

/// Log-sum-exp stabilised softmax of the logits at s.
VectorXd policy_distribution(const SoftmaxPolicyParams& params, Index s);

/// The full S x A table, for exact evaluation.
PolicyTable policy_table(const SoftmaxPolicyParams& params);

/// One uniform draw, inverse-CDF over the distribution at s.
Index sample_action(const SoftmaxPolicyParams& params, Index s, Rng& rng);

struct LinearCritics {
  FeatureMapPtr features;
  TableXd w;  // m x d

  static LinearCritics zeros(FeatureMapPtr features, Index num_objectives);
  double value(Index i, Index s) const;
};

/// TD(0): delta = r_i + gamma V_i(s') - V_i(s) (no bootstrap at a terminal s'),
/// w_i += alpha * delta * phi(s). Returns delta.
double critic_td0_update(LinearCritics& critics, const TransitionRecord& rec, Index i, double alpha,
                         double gamma);

struct Multipliers {
  VectorXd lambda;
  static Multipliers zeros(Index num_objectives) { return {VectorXd::Zero(num_objectives)}; }
};

/// Learning-rate chain (alpha, eta^0, beta^1, eta^1, ..., beta^m, eta^m).
/// Position k decays as base * (1 + t/t0)^(-e_k), e_k = 0.55 + 0.40 k / (2m + 1).
struct TimescaleChain {
  double alpha_base = 0.5;
  double beta_base = 1.0;
  double eta_base = 1.0;
  double beta_ratio = 0.1;  // beta^i base = beta_base * beta_ratio^(i-1)
  double t0 = 1000.0;
  double tau0 = 0.1;

  static double exponent(Index k, Index m) {
    return 0.55 + 0.40 * static_cast<double>(k) / static_cast<double>(2 * m + 1);
  }
  static Index alpha_position() { return 0; }
  static Index beta_position(Index i) { return 2 * i; }     // i = 1..m
  static Index eta_position(Index i) { return 2 * i + 1; }  // i = 0..m

  double rate(double base, Index k, Index m, std::int64_t t) const;
  double alpha(std::int64_t t, Index m) const { return rate(alpha_base, alpha_position(), m, t); }
  double beta(Index i, std::int64_t t, Index m) const {
    return rate(beta_base * std::pow(beta_ratio, static_cast<double>(i - 1)), beta_position(i), m, t);
  }
  double eta(Index i, std::int64_t t, Index m) const { return rate(eta_base, eta_position(i), m, t); }
  /// tau_t = tau0 (1 + t/t0)^-1.
  double tau(std::int64_t t) const;
};

/// Per-objective convergence bookkeeping for the multiplier schedule. Only
/// the frontier objective (index active()) is tested; the frontier advances by
/// one on every convergence event.
class ObjectiveTracker {
public:
  ObjectiveTracker(Index num_objectives, Index window, double threshold);

  /// Appends an estimate for objective i == active(). Returns true when i is
  /// declared converged by this sample: k_hat(i) freezes at the window mean.
  bool push(Index i, double estimate);

  Index active() const { return active_; }
  bool converged(Index i) const { return i < active_; }
  double k_hat(Index i) const { return k_hat_[static_cast<std::size_t>(i)]; }
  Index num_objectives() const { return static_cast<Index>(k_hat_.size()); }

private:
  Index window_;
  double threshold_;
  Index active_ = 0;
  std::vector<double> k_hat_;
  std::deque<double> recent_;
};

/// One batch entry: the transition's state and action and the TD error of
/// every objective at the time of the step.
struct BatchSample {
  Index state = 0;
  Index action = 0;
  VectorXd deltas;
};

/// Batch mean of log pi(a|s) * delta_i.
double a2c_objective_value(const SoftmaxPolicyParams& params, const std::vector<BatchSample>& batch, Index i);
TableXd a2c_objective_grad(const SoftmaxPolicyParams& params, const std::vector<BatchSample>& batch, Index i);

/// Batch mean of ratio * delta_i - kappa KL(pi(s) || pi_old(s)).
double ppo_objective_value(const SoftmaxPolicyParams& params, const SoftmaxPolicyParams& old,
                           const std::vector<BatchSample>& batch, Index i, double kappa);
TableXd ppo_objective_grad(const SoftmaxPolicyParams& params, const SoftmaxPolicyParams& old,
                           const std::vector<BatchSample>& batch, Index i, double kappa);

/// c^i = beta^i + lambda_i sum_{j>i} beta^j, returned for i = 1..m at index i-1.
VectorXd timescale_coefficients(std::int64_t t, Index m, const Multipliers& lambda, const TimescaleChain& chain);

/// lambda_j <- max(0, lambda_j + eta (k_hat_j - tau - K_j)) for every converged
/// j except the last objective.
void lambda_update(Multipliers& lambda, const ObjectiveTracker& tracker, const VectorXd& estimates, double eta,
                   double tau);

/// theta <- clamp(theta + step, -theta_max, theta_max). `step` already carries
/// the rates. Throws NumericError naming `update_index` on non-finite input.
void theta_update(SoftmaxPolicyParams& params, const TableXd& step, std::int64_t update_index);

enum class PolicyObjective { A2C, PPO };

struct PblrlConfig {
  PolicyObjective objective = PolicyObjective::A2C;
  Index batch_size = 32;
  double kappa = 1.5;
  Index ppo_epochs = 4;
  TimescaleChain chain;
  double theta_max = 100.0;
  Index tracker_window = 100;        // W, in batches
  double tracker_threshold = 0.01;
  Index return_window = 100;         // episodes in the K_i estimate
  std::int64_t max_steps = 500000;
  ConvergenceConfig convergence;
  std::uint64_t seed = 0;
};

void validate_config(const PblrlConfig& config);

struct TraceRow {
  std::int64_t t = 0;  // batch update index
  Index objective = 0;
  double lambda = 0.0;
  double c = 0.0;
  double beta = 0.0;
  double eta_active = 0.0;
};

struct PblrlResult {
  SoftmaxPolicyParams params;
  LinearCritics critics;
  Multipliers multipliers;
  ObjectiveTracker tracker;
  MetricsSeries series;
  std::optional<std::int64_t> converged_episode;
  std::int64_t steps = 0;
  std::int64_t updates = 0;
  std::vector<TraceRow> trace;  // filled when record_trace is set
};

/// Policy-based lexicographic RL with one-hot features, linear TD(0) critics
/// and per-batch actor, multiplier and tracker updates.
///
/// All rates are indexed by the batch update count. K_i, for k_hat and the
/// multipliers, is the mean discounted return of the last `return_window`
/// completed episodes.
PblrlResult run_pblrl(const Momdp& momdp, const PblrlConfig& config, Rng& rng, bool record_trace = false);

/// CSV with header `state,action,probability`.
std::string policy_csv(const SoftmaxPolicyParams& params);

/// CSV with header `t,i,lambda_i,c_i,beta_i,eta_active`; i is 1-based.
std::string trace_csv(const std::vector<TraceRow>& rows);

}  // namespace lexrl
