#pragma once

#include "lexrl/metrics.hpp"
#include "lexrl/momdp.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace lexrl {

/// One S x A value table per objective.
struct QTables {
  std::vector<TableXd> q;

  static QTables constant(Index num_states, Index num_actions, Index num_objectives, double value);

  Index num_objectives() const { return static_cast<Index>(q.size()); }
  Index num_states() const { return q.empty() ? 0 : q.front().rows(); }
  Index num_actions() const { return q.empty() ? 0 : q.front().cols(); }
  TableXd& operator[](Index i) { return q[static_cast<std::size_t>(i)]; }
  const TableXd& operator[](Index i) const { return q[static_cast<std::size_t>(i)]; }
};

/// Double Q-learning tables. `effective` is kept equal to 0.5 (a + b) and is
/// what the bandit reads.
struct PairedQTables {
  QTables a;
  QTables b;
  QTables effective;

  static PairedQTables constant(Index num_states, Index num_actions, Index num_objectives, double value);
};

/// Tolerance function tau(s, i, t, Q). The Q dependence enters only through the
/// restricted maximum of the objective being filtered.
struct ToleranceSpec {
  enum class Kind { Constant, Proportional, Decaying };

  Kind kind = Kind::Constant;
  double value = 0.01;  // tau0 for Constant/Decaying, fraction for Proportional
  double power = 0.0;   // decay exponent for Decaying

  static ToleranceSpec constant(double tau0) { return {Kind::Constant, tau0, 0.0}; }
  static ToleranceSpec proportional(double fraction) { return {Kind::Proportional, fraction, 0.0}; }
  static ToleranceSpec decaying(double tau0, double p) { return {Kind::Decaying, tau0, p}; }

  /// Floor applied to every returned tolerance.
  static constexpr double kFloor = 1e-9;

  /// Tolerance at step t given the restricted max; t < 0 requests the t -> inf limit.
  double evaluate(double restricted_max, std::int64_t t) const;
  double limit(double restricted_max) const { return evaluate(restricted_max, -1); }

  friend bool operator==(const ToleranceSpec&, const ToleranceSpec&) = default;
};

/// Learning rate alpha as a function of the (s, a) update count n.
struct StepSizeSchedule {
  enum class Kind { Constant, VisitPower };
  Kind kind = Kind::VisitPower;
  double scale = 1.0;  // c or a0
  double power = 0.6;

  static StepSizeSchedule constant(double c) { return {Kind::Constant, c, 0.0}; }
  static StepSizeSchedule visit_power(double a0, double p) { return {Kind::VisitPower, a0, p}; }
  double value(std::int64_t n) const {
    return kind == Kind::Constant ? scale : scale / std::pow(1.0 + static_cast<double>(n), power);
  }
};

/// Exploration probability as a function of the state visit count.
struct ExplorationSchedule {
  enum class Kind { Constant, VisitPower };
  Kind kind = Kind::VisitPower;
  double scale = 1.0;  // eps0
  double power = 0.5;

  static ExplorationSchedule constant(double eps) { return {Kind::Constant, eps, 0.0}; }
  static ExplorationSchedule visit_power(double eps0, double p) { return {Kind::VisitPower, eps0, p}; }
  double value(std::int64_t n) const {
    return kind == Kind::Constant ? scale : scale / std::pow(1.0 + static_cast<double>(n), power);
  }
};

enum class UpdateRule { LexQ, Sarsa, ExpectedSarsa, LexDoubleQ };

struct VblrlConfig {
  UpdateRule rule = UpdateRule::LexQ;
  ToleranceSpec bandit_tolerance = ToleranceSpec::constant(0.01);
  ToleranceSpec update_tolerance = ToleranceSpec::constant(0.01);
  StepSizeSchedule step_size = StepSizeSchedule::visit_power(1.0, 0.65);
  ExplorationSchedule exploration = ExplorationSchedule::visit_power(1.0, 0.4);
  std::int64_t max_steps = 100000;
  double q_init = 0.0;
  bool stop_on_convergence = false;
  ConvergenceConfig convergence;
  std::uint64_t seed = 0;
};

/// Throws ContractError on invalid schedules, or when the update tolerance can
/// exceed the bandit tolerance one step later indefinitely.
void validate_config(const VblrlConfig& config);

/// True when tau_Q(t) <= tau_B(t + 1) holds for all sufficiently large t.
bool tolerances_compatible(const ToleranceSpec& update, const ToleranceSpec& bandit);

/// Nested filtering at state s through the first `levels` objectives, with the
/// tolerance for objective i given by tol_fn(i, restricted_max). on_level(i, set)
/// sees each surviving set. Returns the set after the last level (A when
/// levels == 0).
template <typename TolFn, typename LevelFn>
ActionSet lex_filter_walk(const QTables& q, Index s, Index levels, TolFn&& tol_fn, LevelFn&& on_level) {
  ActionSet set = ActionSet::all(q.num_actions());
  for (Index i = 0; i < levels; ++i) {
    const auto row = q[i].row(s);
    double best = -std::numeric_limits<double>::infinity();
    set.for_each([&](Index a) { best = std::max<double>(best, row(a)); });
    const double tol = tol_fn(i, best);
    ActionSet keep;
    set.for_each([&](Index a) {
      if (row(a) >= best - tol) keep.insert(a);
    });
    set = keep;
    on_level(i, set);
  }
  return set;
}

template <typename TolFn>
ActionSet lex_filter_prefix(const QTables& q, Index s, Index levels, TolFn&& tol_fn) {
  return lex_filter_walk(q, s, levels, std::forward<TolFn>(tol_fn), [](Index, ActionSet) {});
}

/// All m nested sets Delta_{s,1..m} for explicit per-level tolerances.
std::vector<ActionSet> lex_filter(const QTables& q, Index s, const VectorXd& tolerances);

/// All m nested sets with tolerances from a spec at step t (t < 0: limit).
std::vector<ActionSet> lex_filter(const QTables& q, Index s, const ToleranceSpec& spec, std::int64_t t);

/// P(a) = eps/|A| + (1 - eps) [a in Delta_m] / |Delta_m|.
VectorXd bandit_action_distribution(const QTables& q, Index s, double eps, const VectorXd& tolerances);
VectorXd bandit_action_distribution(const QTables& q, Index s, double eps, const ToleranceSpec& spec,
                                    std::int64_t t);

/// Per-state and per-(state, action) counters used by the schedules.
struct VisitCounts {
  std::vector<std::int64_t> state;
  Index num_actions = 0;
  std::vector<std::int64_t> state_action;

  VisitCounts(Index num_states, Index num_actions);
  std::int64_t& sa(Index s, Index a) { return state_action[static_cast<std::size_t>(s * num_actions + a)]; }
};

/// Lexicographic epsilon-greedy. Draws one uniform for the exploration coin,
/// then one uniform index (over A when exploring, over Delta_m otherwise).
/// Uses eps = exploration(counts.state[s]) and does not modify the counts.
Index lex_epsilon_greedy(const QTables& q, Index s, const VisitCounts& counts,
                         const ExplorationSchedule& exploration, const ToleranceSpec& tolerance,
                         std::int64_t t, Rng& rng);

/// Same draw with an explicit epsilon.
Index lex_epsilon_greedy(const QTables& q, Index s, double eps, const ToleranceSpec& tolerance,
                         std::int64_t t, Rng& rng);

/// max over Delta_{s', i} of Q_i(s', .), where Delta_{s', i} survives
/// objectives 0..i-1 under `tolerance` at step t.
double restricted_max(const QTables& q, Index s, Index i, const ToleranceSpec& tolerance, std::int64_t t);

// In-place Q-value updates for objective i. A terminal successor contributes
// no bootstrap term.

void lex_q_update(QTables& q, const TransitionRecord& rec, Index i, double alpha, double gamma,
                  const ToleranceSpec& update_tolerance, std::int64_t t);

void sarsa_update(QTables& q, const TransitionRecord& rec, Index next_action, Index i, double alpha,
                  double gamma);

void expected_sarsa_update(QTables& q, const TransitionRecord& rec, Index i, double alpha, double gamma,
                           double eps, const ToleranceSpec& bandit_tolerance, std::int64_t t);

/// Returns true when the A table was the one updated.
bool lex_double_q_update(PairedQTables& q, const TransitionRecord& rec, Index i, double alpha,
                         double gamma, const ToleranceSpec& update_tolerance, std::int64_t t, Rng& rng);

struct VblrlResult {
  QTables q;                              // effective tables (0.5(A+B) for double Q)
  std::optional<PairedQTables> paired;
  std::vector<ActionSet> greedy_sets;     // Delta_{s,m} under the bandit tolerance limit
  MetricsSeries series;
  std::optional<std::int64_t> converged_episode;
  std::int64_t steps = 0;
};

/// Value-based lexicographic RL main loop.
///
/// Per step: bandit action, environment step, update Q_i for every objective,
/// reset on terminal successor or when the episode reaches the horizon.
/// Stops at max_steps, or at the convergence episode when stop_on_convergence.
VblrlResult run_vblrl(const Momdp& momdp, const VblrlConfig& config, Rng& rng);

/// Greedy sets of a run's tables: lex_filter under the bandit tolerance limit.
std::vector<ActionSet> greedy_action_sets(const QTables& q, const ToleranceSpec& bandit_tolerance);

/// CSV with header `objective,state,action,value`.
std::string qtables_csv(const QTables& q);

}  // namespace lexrl
