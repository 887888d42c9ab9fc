#include "lexrl/lexoracle.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>

namespace lexrl {

namespace {

constexpr double kTieThreshold = 1e-9;

void check_policy_shape(const Momdp& momdp, const PolicyTable& policy) {
  if (policy.rows() != momdp.num_states || policy.cols() != momdp.num_actions)
    throw ContractError("policy table shape does not match the momdp");
}

}  // namespace

PolicyTable deterministic_policy(const std::vector<Index>& actions, Index num_actions) {
  PolicyTable p = PolicyTable::Zero(static_cast<Index>(actions.size()), num_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= num_actions)
      throw ContractError("deterministic_policy: action out of range");
    p(static_cast<Index>(s), actions[s]) = 1.0;
  }
  return p;
}

PolicyTable uniform_over(const std::vector<ActionSet>& sets, Index num_actions) {
  PolicyTable p = PolicyTable::Zero(static_cast<Index>(sets.size()), num_actions);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (sets[s].empty()) throw ContractError("uniform_over: empty action set");
    const double w = 1.0 / sets[s].size();
    sets[s].for_each([&](Index a) { p(static_cast<Index>(s), a) = w; });
  }
  return p;
}

VectorXd policy_state_values(const Momdp& momdp, const PolicyTable& policy, Index objective) {
  check_policy_shape(momdp, policy);
  const Index S = momdp.num_states;
  const double gamma = momdp.discounts(objective);
  const TableXd rbar = momdp.expected_reward(objective);

  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S);
  VectorXd r_pi = VectorXd::Zero(S);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < momdp.num_actions; ++a) {
      const double p = policy(s, a);
      if (p == 0.0) continue;
      system.row(s) -= gamma * p * momdp.transition.row(momdp.row(s, a));
      r_pi(s) += p * rbar(s, a);
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  VectorXd v = lu.solve(r_pi);
  // One round of iterative refinement, then check the residual.
  v += lu.solve(r_pi - system * v);
  const double residual = (system * v - r_pi).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (!v.allFinite() || residual > 1e-10 * scale)
    throw NumericError("policy evaluation residual " + std::to_string(residual) +
                       " above tolerance");
  return v;
}

TableXd policy_q_values(const Momdp& momdp, const PolicyTable& policy, Index objective) {
  const VectorXd v = policy_state_values(momdp, policy, objective);
  TableXd q = momdp.expected_reward(objective);
  const double gamma = momdp.discounts(objective);
  for (Index s = 0; s < momdp.num_states; ++s)
    for (Index a = 0; a < momdp.num_actions; ++a)
      q(s, a) += gamma * momdp.transition.row(momdp.row(s, a)).dot(v);
  return q;
}

VectorXd evaluate_policy_exact(const Momdp& momdp, const PolicyTable& policy) {
  for (Index i = 0; i < momdp.num_objectives; ++i)
    if (!(momdp.discounts(i) < 1.0))
      throw ContractError("evaluate_policy_exact: discounts must be < 1");
  VectorXd j(momdp.num_objectives);
  for (Index i = 0; i < momdp.num_objectives; ++i)
    j(i) = momdp.initial.dot(policy_state_values(momdp, policy, i));
  return j;
}

TableXd value_iteration_restricted(const Momdp& momdp, Index objective,
                                   const std::vector<ActionSet>& allowed, double tol) {
  if (!(tol > 0.0)) throw ContractError("value_iteration_restricted: tol must be positive");
  const Index S = momdp.num_states;
  const Index A = momdp.num_actions;
  if (static_cast<Index>(allowed.size()) != S)
    throw ContractError("value_iteration_restricted: one action set per state required");
  for (const ActionSet& set : allowed)
    if (set.empty() || !set.is_subset_of(ActionSet::all(A)))
      throw ContractError("value_iteration_restricted: action sets must be nonempty subsets of A");

  const double gamma = momdp.discounts(objective);
  const TableXd rbar = momdp.expected_reward(objective);
  TableXd q = TableXd::Zero(S, A);
  VectorXd v(S);
  VectorXd backup(S * A);

  const double iterations_needed =
      gamma > 0.0 ? std::log(tol / (1.0 + momdp.reward_bound)) / std::log(gamma) : 1.0;
  const auto max_iterations = static_cast<long>(std::max(1000.0, 10.0 * iterations_needed));
  for (long it = 0; it < max_iterations; ++it) {
    for (Index s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      allowed[static_cast<std::size_t>(s)].for_each([&](Index a) { best = std::max(best, q(s, a)); });
      v(s) = best;
    }
    backup.noalias() = momdp.transition * v;
    const Eigen::Map<const TableXd> future(backup.data(), S, A);
    TableXd next = rbar + gamma * future;
    const double residual = (next - q).cwiseAbs().maxCoeff();
    q.swap(next);
    if (residual < tol * std::max(1.0, q.cwiseAbs().maxCoeff())) return q;
  }
  throw NumericError("value_iteration_restricted: no convergence within the iteration cap");
}

std::optional<double> smallest_action_gap(const std::vector<TableXd>& q_tables) {
  std::optional<double> gap;
  for (const TableXd& q : q_tables)
    for (Index s = 0; s < q.rows(); ++s)
      for (Index a = 0; a < q.cols(); ++a)
        for (Index b = a + 1; b < q.cols(); ++b) {
          const double d = std::abs(q(s, a) - q(s, b));
          if (d > kTieThreshold && (!gap || d < *gap)) gap = d;
        }
  return gap;
}

LexSolution lex_value_iteration(const Momdp& momdp, double tie_tol, double vi_tol) {
  if (!(tie_tol > 0.0)) throw ContractError("lex_value_iteration: tie_tol must be positive");
  const Index S = momdp.num_states;
  const Index A = momdp.num_actions;
  LexSolution sol;
  std::vector<ActionSet> current(static_cast<std::size_t>(S), ActionSet::all(A));

  for (Index i = 0; i < momdp.num_objectives; ++i) {
    TableXd q = value_iteration_restricted(momdp, i, current, vi_tol);
    std::vector<ActionSet> filtered(static_cast<std::size_t>(S));
    for (Index s = 0; s < S; ++s) {
      const ActionSet prev = current[static_cast<std::size_t>(s)];
      double best = -std::numeric_limits<double>::infinity();
      prev.for_each([&](Index a) { best = std::max(best, q(s, a)); });
      ActionSet keep;
      prev.for_each([&](Index a) {
        if (q(s, a) >= best - tie_tol) keep.insert(a);
      });
      filtered[static_cast<std::size_t>(s)] = keep;
    }
    if (i + 1 < momdp.num_objectives) {
      for (Index s = 0; s < S && !sol.upper_level_ties; ++s)
        for (Index a = 0; a < A && !sol.upper_level_ties; ++a)
          for (Index b = a + 1; b < A; ++b)
            if (std::abs(q(s, a) - q(s, b)) <= kTieThreshold) {
              sol.upper_level_ties = true;
              break;
            }
    }
    sol.q_tables.push_back(std::move(q));
    sol.action_sets.push_back(filtered);
    current = std::move(filtered);
  }

  sol.policy.resize(static_cast<std::size_t>(S));
  for (Index s = 0; s < S; ++s) sol.policy[static_cast<std::size_t>(s)] = current[static_cast<std::size_t>(s)].lowest();
  sol.j_vector = evaluate_policy_exact(momdp, deterministic_policy(sol.policy, A));
  sol.min_gap = smallest_action_gap(sol.q_tables);
  return sol;
}

BruteForceResult brute_force_lex_optimal(const Momdp& momdp, double tie_tol) {
  const Index S = momdp.num_states;
  const Index A = momdp.num_actions;
  double count = std::pow(static_cast<double>(A), static_cast<double>(S));
  if (count > 1e6)
    throw InstanceTooLarge("brute_force_lex_optimal: |A|^|S| exceeds 10^6");

  const auto total = static_cast<std::size_t>(std::llround(count));
  std::vector<std::vector<Index>> policies;
  std::vector<VectorXd> values;
  policies.reserve(total);
  values.reserve(total);
  std::vector<Index> digits(static_cast<std::size_t>(S), 0);
  for (std::size_t k = 0; k < total; ++k) {
    values.push_back(evaluate_policy_exact(momdp, deterministic_policy(digits, A)));
    policies.push_back(digits);
    for (std::size_t d = 0; d < digits.size(); ++d) {  // mixed-radix increment
      if (++digits[d] < A) break;
      digits[d] = 0;
    }
  }

  std::vector<std::size_t> survivors(total);
  for (std::size_t k = 0; k < total; ++k) survivors[k] = k;
  for (Index i = 0; i < momdp.num_objectives; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k : survivors) best = std::max(best, values[k](i));
    std::vector<std::size_t> next;
    for (std::size_t k : survivors)
      if (values[k](i) >= best - tie_tol) next.push_back(k);
    survivors = std::move(next);
  }
  const std::size_t pick = survivors.front();
  return {policies[pick], values[pick]};
}

double min_action_gap(const LexSolution& solution) {
  const auto gap = smallest_action_gap(solution.q_tables);
  if (!gap) throw NoGapError("min_action_gap: every action pair is tied on every objective");
  return *gap;
}

std::string lex_solution_csv(const LexSolution& solution) {
  std::string out = "objective,state,action,q_value\n";
  char buf[96];
  for (std::size_t i = 0; i < solution.q_tables.size(); ++i) {
    const TableXd& q = solution.q_tables[i];
    for (Index s = 0; s < q.rows(); ++s)
      for (Index a = 0; a < q.cols(); ++a) {
        std::snprintf(buf, sizeof buf, "%zu,%ld,%ld,%.17g\n", i, static_cast<long>(s),
                      static_cast<long>(a), q(s, a));
        out += buf;
      }
  }
  return out;
}

std::string lex_solution_summary(const LexSolution& solution) {
  nlohmann::ordered_json doc;
  doc["policy"] = solution.policy;
  auto labels = nlohmann::ordered_json::array();
  for (Index a : solution.policy) labels.push_back("a" + std::to_string(a + 1));
  doc["policy_labels"] = labels;
  doc["j_vector"] = std::vector<double>(solution.j_vector.begin(), solution.j_vector.end());
  doc["min_gap"] = solution.min_gap ? nlohmann::ordered_json(*solution.min_gap) : nullptr;
  doc["upper_level_ties"] = solution.upper_level_ties;
  auto levels = nlohmann::ordered_json::array();
  for (const auto& level : solution.action_sets) {
    auto states = nlohmann::ordered_json::array();
    for (const ActionSet& set : level) {
      std::vector<Index> members;
      set.for_each([&](Index a) { members.push_back(a); });
      states.push_back(members);
    }
    levels.push_back(states);
  }
  doc["action_sets"] = levels;
  return doc.dump(2) + "\n";
}

}  // namespace lexrl
