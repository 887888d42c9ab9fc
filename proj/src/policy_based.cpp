#include "lexrl/policy_based.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace lexrl {

FeatureMap FeatureMap::one_hot(Index num_states) {
  if (num_states <= 0) throw ContractError("feature map needs at least one state");
  FeatureMap f;
  f.num_states_ = num_states;
  f.dim_ = num_states;
  f.one_hot_ = true;
  return f;
}

FeatureMap FeatureMap::from_matrix(TableXd phi) {
  const Index S = phi.rows();
  const Index d = phi.cols();
  if (S == 0 || d == 0) throw ContractError("feature matrix is empty");
  if (d > S) throw ContractError("feature dimension exceeds the number of states");
  if (!phi.allFinite()) throw ContractError("feature matrix has non-finite entries");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  if (qr.rank() != d) throw ContractError("feature matrix must have full column rank");
  for (Index c = 0; c < d; ++c)
    if (phi.col(c).maxCoeff() - phi.col(c).minCoeff() <= 1e-12)
      throw ContractError("feature matrix has a constant (bias) column");
  FeatureMap f;
  f.num_states_ = S;
  f.dim_ = d;
  f.phi_ = std::move(phi);
  return f;
}

VectorXd FeatureMap::project(Index s, const TableXd& w) const {
  if (one_hot_) return w.row(s).transpose();
  return (phi_.row(s) * w).transpose();
}

double FeatureMap::dot(Index s, const VectorXd& w) const {
  if (one_hot_) return w(s);
  return phi_.row(s).dot(w.transpose());
}

void FeatureMap::add_outer(TableXd& out, Index s, const VectorXd& row, double scale) const {
  if (one_hot_) {
    out.row(s) += scale * row.transpose();
    return;
  }
  for (Index k = 0; k < dim_; ++k) {
    const double f = phi_(s, k);
    if (f != 0.0) out.row(k) += (scale * f) * row.transpose();
  }
}

void FeatureMap::add_scaled(VectorXd& w, Index s, double scale) const {
  if (one_hot_)
    w(s) += scale;
  else
    w += scale * phi_.row(s).transpose();
}

SoftmaxPolicyParams SoftmaxPolicyParams::zeros(FeatureMapPtr features, Index num_actions, double theta_max) {
  SoftmaxPolicyParams p;
  p.theta = TableXd::Zero(features->dim(), num_actions);
  p.features = std::move(features);
  p.theta_max = theta_max;
  return p;
}

namespace {

struct LogSoftmax {
  VectorXd prob;
  VectorXd log_prob;
};

// Scalar loops throughout: results must not depend on the SIMD width.
LogSoftmax log_softmax(const SoftmaxPolicyParams& params, Index s) {
  const VectorXd z = params.features->project(s, params.theta);
  const Index n = z.size();
  const double top = z.maxCoeff();
  LogSoftmax out{VectorXd(n), VectorXd(n)};
  double total = 0.0;
  for (Index a = 0; a < n; ++a) {
    out.prob(a) = std::exp(z(a) - top);
    total += out.prob(a);
  }
  const double log_norm = std::log(total);
  for (Index a = 0; a < n; ++a) {
    out.log_prob(a) = (z(a) - top) - log_norm;
    out.prob(a) /= total;
  }
  return out;
}

void check_batch(const std::vector<BatchSample>& batch, Index i) {
  if (batch.empty()) throw ContractError("objective gradient needs a nonempty batch");
  if (i < 0 || i >= batch.front().deltas.size()) throw ContractError("objective index out of range");
}

}  // namespace

VectorXd policy_distribution(const SoftmaxPolicyParams& params, Index s) {
  return log_softmax(params, s).prob;
}

PolicyTable policy_table(const SoftmaxPolicyParams& params) {
  const Index S = params.features->num_states();
  PolicyTable table(S, params.num_actions());
  for (Index s = 0; s < S; ++s) table.row(s) = policy_distribution(params, s).transpose();
  return table;
}

Index sample_action(const SoftmaxPolicyParams& params, Index s, Rng& rng) {
  const VectorXd p = policy_distribution(params, s);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Index a = 0; a + 1 < p.size(); ++a) {
    acc += p(a);
    if (u < acc) return a;
  }
  return p.size() - 1;
}

LinearCritics LinearCritics::zeros(FeatureMapPtr features, Index num_objectives) {
  LinearCritics c;
  c.w = TableXd::Zero(num_objectives, features->dim());
  c.features = std::move(features);
  return c;
}

double LinearCritics::value(Index i, Index s) const {
  return features->dot(s, w.row(i).transpose());
}

double critic_td0_update(LinearCritics& critics, const TransitionRecord& rec, Index i, double alpha,
                         double gamma) {
  double delta = rec.rewards(i) - critics.value(i, rec.state);
  if (!rec.terminal) delta += gamma * critics.value(i, rec.next_state);
  VectorXd wi = critics.w.row(i).transpose();
  critics.features->add_scaled(wi, rec.state, alpha * delta);
  critics.w.row(i) = wi.transpose();
  return delta;
}

double TimescaleChain::rate(double base, Index k, Index m, std::int64_t t) const {
  return base * std::pow(1.0 + static_cast<double>(t) / t0, -exponent(k, m));
}

double TimescaleChain::tau(std::int64_t t) const {
  return tau0 / (1.0 + static_cast<double>(t) / t0);
}

ObjectiveTracker::ObjectiveTracker(Index num_objectives, Index window, double threshold)
    : window_(window), threshold_(threshold), k_hat_(static_cast<std::size_t>(num_objectives), 0.0) {
  if (window < 1) throw ContractError("tracker window must be positive");
}

bool ObjectiveTracker::push(Index i, double estimate) {
  if (i != active_ || active_ >= num_objectives())
    throw ContractError("tracker: only the frontier objective can be updated");
  k_hat_[static_cast<std::size_t>(i)] = estimate;
  recent_.push_back(estimate);
  if (static_cast<Index>(recent_.size()) > window_) recent_.pop_front();
  if (static_cast<Index>(recent_.size()) < window_) return false;

  const auto [lo, hi] = std::minmax_element(recent_.begin(), recent_.end());
  double mean = 0.0;
  for (double v : recent_) mean += v;
  mean /= static_cast<double>(recent_.size());
  if ((*hi - *lo) / std::max(1.0, std::abs(mean)) >= threshold_) return false;
  k_hat_[static_cast<std::size_t>(i)] = mean;
  ++active_;
  recent_.clear();
  return true;
}

double a2c_objective_value(const SoftmaxPolicyParams& params, const std::vector<BatchSample>& batch, Index i) {
  check_batch(batch, i);
  double total = 0.0;
  for (const BatchSample& x : batch) total += log_softmax(params, x.state).log_prob(x.action) * x.deltas(i);
  return total / static_cast<double>(batch.size());
}

TableXd a2c_objective_grad(const SoftmaxPolicyParams& params, const std::vector<BatchSample>& batch, Index i) {
  check_batch(batch, i);
  TableXd grad = TableXd::Zero(params.theta.rows(), params.theta.cols());
  for (const BatchSample& x : batch) {
    VectorXd g = -policy_distribution(params, x.state);
    g(x.action) += 1.0;
    params.features->add_outer(grad, x.state, g, x.deltas(i));
  }
  return grad / static_cast<double>(batch.size());
}

namespace {

struct PpoTerms {
  LogSoftmax now;
  LogSoftmax old;
  double ratio = 0.0;
  double kl = 0.0;
};

PpoTerms ppo_terms(const SoftmaxPolicyParams& params, const SoftmaxPolicyParams& old, const BatchSample& x) {
  PpoTerms t{log_softmax(params, x.state), log_softmax(old, x.state)};
  if (t.old.prob(x.action) < 1e-300) throw NumericError("ppo: degenerate policy snapshot");
  t.ratio = std::exp(t.now.log_prob(x.action) - t.old.log_prob(x.action));
  for (Index c = 0; c < t.now.prob.size(); ++c) t.kl += t.now.prob(c) * (t.now.log_prob(c) - t.old.log_prob(c));
  return t;
}

}  // namespace

double ppo_objective_value(const SoftmaxPolicyParams& params, const SoftmaxPolicyParams& old,
                           const std::vector<BatchSample>& batch, Index i, double kappa) {
  check_batch(batch, i);
  double total = 0.0;
  for (const BatchSample& x : batch) {
    const PpoTerms t = ppo_terms(params, old, x);
    total += t.ratio * x.deltas(i) - kappa * t.kl;
  }
  return total / static_cast<double>(batch.size());
}

TableXd ppo_objective_grad(const SoftmaxPolicyParams& params, const SoftmaxPolicyParams& old,
                           const std::vector<BatchSample>& batch, Index i, double kappa) {
  check_batch(batch, i);
  TableXd grad = TableXd::Zero(params.theta.rows(), params.theta.cols());
  for (const BatchSample& x : batch) {
    const PpoTerms t = ppo_terms(params, old, x);
    // d ratio / dz = ratio (e_a - pi);  d KL / dz_c = pi_c (log pi_c - log pi_old_c - KL)
    VectorXd g = -t.now.prob;
    g(x.action) += 1.0;
    g *= t.ratio * x.deltas(i);
    const VectorXd dkl = (t.now.prob.array() * ((t.now.log_prob - t.old.log_prob).array() - t.kl)).matrix();
    g -= kappa * dkl;
    params.features->add_outer(grad, x.state, g);
  }
  return grad / static_cast<double>(batch.size());
}

VectorXd timescale_coefficients(std::int64_t t, Index m, const Multipliers& lambda, const TimescaleChain& chain) {
  if (lambda.lambda.size() != m) throw ContractError("timescale_coefficients: one multiplier per objective");
  VectorXd beta(m);
  for (Index i = 0; i < m; ++i) beta(i) = chain.beta(i + 1, t, m);
  VectorXd c(m);
  double tail = 0.0;  // sum_{j>i} beta^j
  for (Index i = m - 1; i >= 0; --i) {
    c(i) = beta(i) + lambda.lambda(i) * tail;
    tail += beta(i);
  }
  return c;
}

void lambda_update(Multipliers& lambda, const ObjectiveTracker& tracker, const VectorXd& estimates, double eta,
                   double tau) {
  const Index last = lambda.lambda.size() - 1;
  for (Index j = 0; j < std::min(tracker.active(), last); ++j)
    lambda.lambda(j) = std::max(0.0, lambda.lambda(j) + eta * (tracker.k_hat(j) - tau - estimates(j)));
}

void theta_update(SoftmaxPolicyParams& params, const TableXd& step, std::int64_t update_index) {
  if (step.rows() != params.theta.rows() || step.cols() != params.theta.cols())
    throw ContractError("theta_update: step shape does not match theta");
  if (!step.allFinite())
    throw NumericError("non-finite policy update at update " + std::to_string(update_index));
  params.theta = (params.theta + step).cwiseMax(-params.theta_max).cwiseMin(params.theta_max);
}

void validate_config(const PblrlConfig& c) {
  if (c.batch_size < 1) throw ContractError("pb config: batch size must be >= 1");
  if (c.objective == PolicyObjective::PPO && !(c.kappa > 1.0))
    throw ContractError("pb config: kappa must exceed 1 for the KL-penalised objective (kappa > 1)");
  if (c.ppo_epochs < 1) throw ContractError("pb config: ppo_epochs must be >= 1");
  auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!unit(c.chain.alpha_base) || !unit(c.chain.beta_base) || !unit(c.chain.eta_base))
    throw ContractError("pb config: base rates must lie in (0, 1]");
  if (!unit(c.chain.beta_ratio)) throw ContractError("pb config: beta_ratio must lie in (0, 1]");
  if (!(c.chain.t0 > 0.0)) throw ContractError("pb config: t0 must be positive");
  if (!(c.chain.tau0 > 0.0)) throw ContractError("pb config: tau0 must be positive");
  if (!(c.theta_max > 0.0)) throw ContractError("pb config: theta_max must be positive");
  if (c.tracker_window < 1) throw ContractError("pb config: tracker window must be >= 1");
  if (!(c.tracker_threshold > 0.0)) throw ContractError("pb config: tracker threshold must be positive");
  if (c.return_window < 1) throw ContractError("pb config: return window must be >= 1");
  if (c.max_steps <= 0) throw ContractError("pb config: max_steps must be positive");
  if (c.convergence.window < 2) throw ContractError("pb config: convergence window must be >= 2");
}

PblrlResult run_pblrl(const Momdp& momdp, const PblrlConfig& config, Rng& rng, bool record_trace) {
  validate_config(config);
  require_valid(momdp);
  const Index m = momdp.num_objectives;
  const auto features = std::make_shared<const FeatureMap>(FeatureMap::one_hot(momdp.num_states));
  const TimescaleChain& chain = config.chain;

  PblrlResult result{SoftmaxPolicyParams::zeros(features, momdp.num_actions, config.theta_max),
                     LinearCritics::zeros(features, m),
                     Multipliers::zeros(m),
                     ObjectiveTracker(m, config.tracker_window, config.tracker_threshold),
                     MetricsSeries(m),
                     std::nullopt,
                     0,
                     0,
                     {}};
  SoftmaxPolicyParams& params = result.params;
  ConvergenceDetector detector(config.convergence);

  std::vector<BatchSample> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  std::deque<VectorXd> recent_returns;

  std::int64_t u = 1;  // 1-based batch update index, the clock of every rate
  auto update = [&] {
    if (!recent_returns.empty()) {
      VectorXd estimates = VectorXd::Zero(m);
      for (const VectorXd& r : recent_returns) estimates += r;
      estimates /= static_cast<double>(recent_returns.size());
      if (result.tracker.active() < m) result.tracker.push(result.tracker.active(), estimates(result.tracker.active()));
      lambda_update(result.multipliers, result.tracker, estimates, chain.eta(result.tracker.active(), u, m),
                    chain.tau(u));
    }
    const VectorXd c = timescale_coefficients(u, m, result.multipliers, chain);
    if (config.objective == PolicyObjective::PPO) {
      const SoftmaxPolicyParams old = params;
      for (Index epoch = 0; epoch < config.ppo_epochs; ++epoch) {
        TableXd step = TableXd::Zero(params.theta.rows(), params.theta.cols());
        for (Index i = 0; i < m; ++i) step += c(i) * ppo_objective_grad(params, old, batch, i, config.kappa);
        theta_update(params, step, u);
      }
    } else {
      TableXd step = TableXd::Zero(params.theta.rows(), params.theta.cols());
      for (Index i = 0; i < m; ++i) step += c(i) * a2c_objective_grad(params, batch, i);
      theta_update(params, step, u);
    }
    if (record_trace) {
      const double eta = chain.eta(result.tracker.active(), u, m);
      for (Index i = 0; i < m; ++i)
        result.trace.push_back({u, i, result.multipliers.lambda(i), c(i), chain.beta(i + 1, u, m), eta});
    }
    batch.clear();
    ++u;
  };

  Index s = sample_initial(momdp, rng);
  std::int64_t episode_length = 0;
  VectorXd episode_return = VectorXd::Zero(m);
  VectorXd discounted = VectorXd::Zero(m);
  VectorXd discount_power = VectorXd::Ones(m);

  std::int64_t t = 0;
  while (t < config.max_steps) {
    const Index a = sample_action(params, s, rng);
    const TransitionRecord rec = sample_transition(momdp, s, a, rng, t);
    const double alpha = chain.alpha(u, m);
    BatchSample sample{s, a, VectorXd(m)};
    for (Index i = 0; i < m; ++i) sample.deltas(i) = critic_td0_update(result.critics, rec, i, alpha, momdp.discounts(i));
    batch.push_back(std::move(sample));
    ++t;

    ++episode_length;
    episode_return += rec.rewards;
    discounted += discount_power.cwiseProduct(rec.rewards);
    discount_power = discount_power.cwiseProduct(momdp.discounts);
    if (rec.terminal || (momdp.episode_horizon && episode_length >= *momdp.episode_horizon)) {
      result.series.add_episode(episode_length, episode_return, t);
      detector.push(result.series.episodes.back().episode, episode_return);
      recent_returns.push_back(discounted);
      if (static_cast<Index>(recent_returns.size()) > config.return_window) recent_returns.pop_front();
      episode_length = 0;
      episode_return.setZero();
      discounted.setZero();
      discount_power.setOnes();
      s = sample_initial(momdp, rng);
    } else {
      s = rec.next_state;
    }

    if (static_cast<Index>(batch.size()) == config.batch_size) update();
  }

  result.steps = t;
  result.updates = u - 1;
  result.converged_episode = detector.converged_at();
  return result;
}

std::string policy_csv(const SoftmaxPolicyParams& params) {
  std::string out = "state,action,probability\n";
  char buf[96];
  const PolicyTable table = policy_table(params);
  for (Index s = 0; s < table.rows(); ++s)
    for (Index a = 0; a < table.cols(); ++a) {
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g\n", static_cast<long>(s), static_cast<long>(a), table(s, a));
      out += buf;
    }
  return out;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "t,i,lambda_i,c_i,beta_i,eta_active\n";
  char buf[160];
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%ld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.t),
                  static_cast<long>(r.objective + 1), r.lambda, r.c, r.beta, r.eta_active);
    out += buf;
  }
  return out;
}

}  // namespace lexrl
