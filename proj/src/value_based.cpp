#include "lexrl/value_based.hpp"

#include <algorithm>
#include <cstdio>

namespace lexrl {

QTables QTables::constant(Index num_states, Index num_actions, Index num_objectives, double value) {
  QTables out;
  out.q.assign(static_cast<std::size_t>(num_objectives),
               TableXd::Constant(num_states, num_actions, value));
  return out;
}

PairedQTables PairedQTables::constant(Index num_states, Index num_actions, Index num_objectives,
                                      double value) {
  const QTables base = QTables::constant(num_states, num_actions, num_objectives, value);
  return {base, base, base};
}

double ToleranceSpec::evaluate(double restricted_max, std::int64_t t) const {
  double tau = value;
  switch (kind) {
    case Kind::Constant:
      break;
    case Kind::Proportional:
      tau = value * std::abs(restricted_max);
      break;
    case Kind::Decaying:
      if (t < 0)
        tau = power > 0.0 ? 0.0 : value;
      else
        tau = value * std::pow(1.0 + static_cast<double>(t), -power);
      break;
  }
  return std::max(tau, kFloor);
}

bool tolerances_compatible(const ToleranceSpec& update, const ToleranceSpec& bandit) {
  using Kind = ToleranceSpec::Kind;
  if (update == bandit) return true;
  // A decaying spec with zero power is a constant.
  auto as_constant = [](const ToleranceSpec& t) {
    return t.kind == Kind::Constant || (t.kind == Kind::Decaying && t.power == 0.0);
  };
  if (as_constant(update) && as_constant(bandit)) return update.value <= bandit.value;
  if (update.kind == Kind::Proportional && bandit.kind == Kind::Proportional)
    return update.value <= bandit.value;
  if (update.kind == Kind::Decaying && update.power > 0.0) {
    if (as_constant(bandit)) return true;
    if (bandit.kind == Kind::Decaying)
      return update.power > bandit.power || (update.power == bandit.power && update.value < bandit.value);
  }
  return false;
}

void validate_config(const VblrlConfig& c) {
  if (c.max_steps <= 0) throw ContractError("vb config: max_steps must be positive");
  auto check_tol = [](const ToleranceSpec& t, const char* name) {
    if (!(t.value > 0.0)) throw ContractError(std::string("vb config: ") + name + " must be positive");
    if (t.kind == ToleranceSpec::Kind::Decaying && t.power < 0.0)
      throw ContractError(std::string("vb config: ") + name + " decay power must be >= 0");
  };
  check_tol(c.bandit_tolerance, "bandit tolerance");
  check_tol(c.update_tolerance, "update tolerance");
  if (c.step_size.kind == StepSizeSchedule::Kind::Constant) {
    if (!(c.step_size.scale > 0.0 && c.step_size.scale <= 1.0))
      throw ContractError("vb config: constant step size must be in (0, 1]");
  } else if (!(c.step_size.scale > 0.0 && c.step_size.scale <= 1.0 && c.step_size.power > 0.5 &&
               c.step_size.power <= 1.0)) {
    throw ContractError("vb config: visit-power step size needs a0 in (0, 1] and p in (0.5, 1]");
  }
  if (!(c.exploration.scale >= 0.0 && c.exploration.scale <= 1.0))
    throw ContractError("vb config: exploration scale must be in [0, 1]");
  if (c.exploration.kind == ExplorationSchedule::Kind::VisitPower &&
      !(c.exploration.power > 0.0 && c.exploration.power <= 1.0))
    throw ContractError("vb config: visit-power exploration needs p in (0, 1]");
  if (c.convergence.window < 2) throw ContractError("vb config: convergence window must be >= 2");
  if (!tolerances_compatible(c.update_tolerance, c.bandit_tolerance))
    throw ContractError(
        "vb config: update tolerance must eventually stay below the bandit tolerance "
        "(tau_Q(t) <= tau_B(t+1))");
}

std::vector<ActionSet> lex_filter(const QTables& q, Index s, const VectorXd& tolerances) {
  const Index m = q.num_objectives();
  if (tolerances.size() != m) throw ContractError("lex_filter: one tolerance per objective required");
  std::vector<ActionSet> levels;
  levels.reserve(static_cast<std::size_t>(m));
  lex_filter_walk(
      q, s, m, [&](Index i, double) { return tolerances(i); },
      [&](Index, ActionSet set) { levels.push_back(set); });
  return levels;
}

std::vector<ActionSet> lex_filter(const QTables& q, Index s, const ToleranceSpec& spec, std::int64_t t) {
  std::vector<ActionSet> levels;
  levels.reserve(static_cast<std::size_t>(q.num_objectives()));
  lex_filter_walk(
      q, s, q.num_objectives(), [&](Index, double best) { return spec.evaluate(best, t); },
      [&](Index, ActionSet set) { levels.push_back(set); });
  return levels;
}

namespace {

VectorXd distribution_from_set(Index num_actions, ActionSet last, double eps) {
  VectorXd p = VectorXd::Constant(num_actions, eps / static_cast<double>(num_actions));
  const double share = (1.0 - eps) / last.size();
  last.for_each([&](Index a) { p(a) += share; });
  return p;
}

ActionSet last_level(const QTables& q, Index s, const ToleranceSpec& spec, std::int64_t t) {
  return lex_filter_prefix(q, s, q.num_objectives(),
                           [&](Index, double best) { return spec.evaluate(best, t); });
}

}  // namespace

VectorXd bandit_action_distribution(const QTables& q, Index s, double eps, const VectorXd& tolerances) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ContractError("bandit_action_distribution: eps not in [0, 1]");
  return distribution_from_set(q.num_actions(), lex_filter(q, s, tolerances).back(), eps);
}

VectorXd bandit_action_distribution(const QTables& q, Index s, double eps, const ToleranceSpec& spec,
                                    std::int64_t t) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ContractError("bandit_action_distribution: eps not in [0, 1]");
  return distribution_from_set(q.num_actions(), last_level(q, s, spec, t), eps);
}

VisitCounts::VisitCounts(Index num_states, Index num_actions_)
    : state(static_cast<std::size_t>(num_states), 0),
      num_actions(num_actions_),
      state_action(static_cast<std::size_t>(num_states * num_actions_), 0) {}

Index lex_epsilon_greedy(const QTables& q, Index s, double eps, const ToleranceSpec& tolerance,
                         std::int64_t t, Rng& rng) {
  if (uniform01(rng) < eps) return uniform_index(rng, q.num_actions());
  const ActionSet best = last_level(q, s, tolerance, t);
  return best.nth(static_cast<int>(uniform_index(rng, best.size())));
}

Index lex_epsilon_greedy(const QTables& q, Index s, const VisitCounts& counts,
                         const ExplorationSchedule& exploration, const ToleranceSpec& tolerance,
                         std::int64_t t, Rng& rng) {
  const double eps = std::clamp(exploration.value(counts.state[static_cast<std::size_t>(s)]), 0.0, 1.0);
  return lex_epsilon_greedy(q, s, eps, tolerance, t, rng);
}

double restricted_max(const QTables& q, Index s, Index i, const ToleranceSpec& tolerance, std::int64_t t) {
  const ActionSet allowed =
      lex_filter_prefix(q, s, i, [&](Index, double best) { return tolerance.evaluate(best, t); });
  const auto row = q[i].row(s);
  double best = -std::numeric_limits<double>::infinity();
  allowed.for_each([&](Index a) { best = std::max<double>(best, row(a)); });
  return best;
}

namespace {

inline void blend(double& value, double alpha, double target) {
  value = (1.0 - alpha) * value + alpha * target;
}

}  // namespace

void lex_q_update(QTables& q, const TransitionRecord& rec, Index i, double alpha, double gamma,
                  const ToleranceSpec& update_tolerance, std::int64_t t) {
  double target = rec.rewards(i);
  if (!rec.terminal) target += gamma * restricted_max(q, rec.next_state, i, update_tolerance, t);
  blend(q[i](rec.state, rec.action), alpha, target);
}

void sarsa_update(QTables& q, const TransitionRecord& rec, Index next_action, Index i, double alpha,
                  double gamma) {
  double target = rec.rewards(i);
  if (!rec.terminal) target += gamma * q[i](rec.next_state, next_action);
  blend(q[i](rec.state, rec.action), alpha, target);
}

void expected_sarsa_update(QTables& q, const TransitionRecord& rec, Index i, double alpha, double gamma,
                           double eps, const ToleranceSpec& bandit_tolerance, std::int64_t t) {
  double target = rec.rewards(i);
  if (!rec.terminal) {
    const VectorXd p = bandit_action_distribution(q, rec.next_state, eps, bandit_tolerance, t);
    double expected = 0.0;
    for (Index a = 0; a < p.size(); ++a) expected += p(a) * q[i](rec.next_state, a);
    target += gamma * expected;
  }
  blend(q[i](rec.state, rec.action), alpha, target);
}

bool lex_double_q_update(PairedQTables& q, const TransitionRecord& rec, Index i, double alpha,
                         double gamma, const ToleranceSpec& update_tolerance, std::int64_t t, Rng& rng) {
  const bool update_a = uniform01(rng) < 0.5;
  QTables& primary = update_a ? q.a : q.b;
  const QTables& other = update_a ? q.b : q.a;
  double target = rec.rewards(i);
  if (!rec.terminal) {
    const Index sp = rec.next_state;
    const ActionSet allowed = lex_filter_prefix(
        q.effective, sp, i, [&](Index, double best) { return update_tolerance.evaluate(best, t); });
    const auto row = primary[i].row(sp);
    Index pick = allowed.lowest();
    allowed.for_each([&](Index a) {
      if (row(a) > row(pick)) pick = a;
    });
    target += gamma * other[i](sp, pick);
  }
  blend(primary[i](rec.state, rec.action), alpha, target);
  q.effective[i](rec.state, rec.action) = 0.5 * (q.a[i](rec.state, rec.action) + q.b[i](rec.state, rec.action));
  return update_a;
}

std::vector<ActionSet> greedy_action_sets(const QTables& q, const ToleranceSpec& bandit_tolerance) {
  std::vector<ActionSet> sets(static_cast<std::size_t>(q.num_states()));
  for (Index s = 0; s < q.num_states(); ++s) sets[static_cast<std::size_t>(s)] = last_level(q, s, bandit_tolerance, -1);
  return sets;
}

VblrlResult run_vblrl(const Momdp& momdp, const VblrlConfig& config, Rng& rng) {
  validate_config(config);
  require_valid(momdp);
  const Index S = momdp.num_states;
  const Index A = momdp.num_actions;
  const Index m = momdp.num_objectives;
  const bool double_q = config.rule == UpdateRule::LexDoubleQ;

  VblrlResult result;
  result.series = MetricsSeries(m);
  result.q = QTables::constant(S, A, m, config.q_init);
  if (double_q) result.paired = PairedQTables::constant(S, A, m, config.q_init);
  QTables& tables = double_q ? result.paired->effective : result.q;

  VisitCounts counts(S, A);
  ConvergenceDetector detector(config.convergence);

  auto choose = [&](Index s, std::int64_t t) {
    const Index a = lex_epsilon_greedy(tables, s, counts, config.exploration, config.bandit_tolerance, t, rng);
    ++counts.state[static_cast<std::size_t>(s)];
    return a;
  };

  std::int64_t t = 0;
  Index s = sample_initial(momdp, rng);
  Index a = choose(s, t);
  std::int64_t episode_length = 0;
  VectorXd episode_return = VectorXd::Zero(m);
  double episode_q_delta = 0.0;

  while (t < config.max_steps) {
    const TransitionRecord rec = sample_transition(momdp, s, a, rng, t);
    ++episode_length;
    episode_return += rec.rewards;
    const bool end_episode =
        rec.terminal || (momdp.episode_horizon && episode_length >= *momdp.episode_horizon);

    Index next_action = 0;
    if (config.rule == UpdateRule::Sarsa && !rec.terminal) next_action = choose(rec.next_state, t);

    std::int64_t& n_sa = counts.sa(s, a);
    const double alpha = std::clamp(config.step_size.value(n_sa), 0.0, 1.0);
    ++n_sa;
    for (Index i = 0; i < m; ++i) {
      const double before = tables[i](s, a);
      const double gamma = momdp.discounts(i);
      switch (config.rule) {
        case UpdateRule::LexQ:
          lex_q_update(tables, rec, i, alpha, gamma, config.update_tolerance, t);
          break;
        case UpdateRule::Sarsa:
          sarsa_update(tables, rec, next_action, i, alpha, gamma);
          break;
        case UpdateRule::ExpectedSarsa: {
          const double eps = std::clamp(
              config.exploration.value(counts.state[static_cast<std::size_t>(rec.next_state)]), 0.0, 1.0);
          expected_sarsa_update(tables, rec, i, alpha, gamma, eps, config.bandit_tolerance, t);
          break;
        }
        case UpdateRule::LexDoubleQ:
          lex_double_q_update(*result.paired, rec, i, alpha, gamma, config.update_tolerance, t, rng);
          break;
      }
      episode_q_delta = std::max(episode_q_delta, std::abs(tables[i](s, a) - before));
    }
    ++t;

    if (end_episode) {
      result.series.add_episode(episode_length, episode_return, t);
      result.series.q_deltas.push_back(episode_q_delta);
      const bool fired = detector.push(result.series.episodes.back().episode, episode_return);
      episode_length = 0;
      episode_return.setZero();
      episode_q_delta = 0.0;
      if (fired && config.stop_on_convergence) break;
      if (t >= config.max_steps) break;
      s = sample_initial(momdp, rng);
      a = choose(s, t);
    } else {
      s = rec.next_state;
      a = config.rule == UpdateRule::Sarsa ? next_action : choose(s, t);
    }
  }

  result.steps = t;
  result.converged_episode = detector.converged_at();
  if (double_q) result.q = result.paired->effective;
  result.greedy_sets = greedy_action_sets(result.q, config.bandit_tolerance);
  return result;
}

std::string qtables_csv(const QTables& q) {
  std::string out = "objective,state,action,value\n";
  char buf[96];
  for (Index i = 0; i < q.num_objectives(); ++i)
    for (Index s = 0; s < q.num_states(); ++s)
      for (Index a = 0; a < q.num_actions(); ++a) {
        std::snprintf(buf, sizeof buf, "%ld,%ld,%ld,%.17g\n", static_cast<long>(i), static_cast<long>(s),
                      static_cast<long>(a), q[i](s, a));
        out += buf;
      }
  return out;
}

}  // namespace lexrl
