#pragma once

#include "lexrl/momdp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lexrl {

/// Stationary policy as an S x A table of action probabilities.
using PolicyTable = TableXd;

PolicyTable deterministic_policy(const std::vector<Index>& actions, Index num_actions);
PolicyTable uniform_over(const std::vector<ActionSet>& sets, Index num_actions);

/// Exact state values of `policy` for one objective, from the noise-free reward
/// means: solves (I - gamma P_pi) v = r_pi. Throws NumericError when the solve
/// residual exceeds 1e-10 relative to max(1, |v|).
VectorXd policy_state_values(const Momdp& momdp, const PolicyTable& policy, Index objective);

/// q_pi(s, a) = rbar(s, a) + gamma * sum_{s'} T(s, a, s') v_pi(s').
TableXd policy_q_values(const Momdp& momdp, const PolicyTable& policy, Index objective);

/// J_i = sum_s I(s) v_pi^i(s) for every objective.
VectorXd evaluate_policy_exact(const Momdp& momdp, const PolicyTable& policy);

/// Fixed point of the Bellman optimality operator whose successor maximum only
/// ranges over `allowed[s']`. Q is returned for every action. Stops when the
/// sup-norm residual falls below tol * max(1, |Q|).
TableXd value_iteration_restricted(const Momdp& momdp, Index objective,
                                   const std::vector<ActionSet>& allowed, double tol);

struct LexSolution {
  std::vector<TableXd> q_tables;                   // q_i^l, one S x A table per objective
  std::vector<std::vector<ActionSet>> action_sets; // [i][s]: Delta_{s,i+1}, nested in i
  std::vector<Index> policy;                       // lowest-index member of the last level
  VectorXd j_vector;
  std::optional<double> min_gap;                   // empty when every pair is tied
  bool upper_level_ties = false;                   // exact ties on some objective before the last
};

/// Lexicographic value iteration: objective i is solved over the action sets
/// surviving objectives 0..i-1, then filtered with `tie_tol`.
LexSolution lex_value_iteration(const Momdp& momdp, double tie_tol = 1e-9, double vi_tol = 1e-12);

class InstanceTooLarge : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct BruteForceResult {
  std::vector<Index> policy;
  VectorXd j_vector;
};

/// Enumerates every deterministic stationary policy (|A|^|S| <= 10^6), keeps the
/// policies within tie_tol of the best J_i level by level, and returns the
/// first survivor in enumeration order.
BruteForceResult brute_force_lex_optimal(const Momdp& momdp, double tie_tol);

class NoGapError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Smallest |q_i(s,a) - q_i(s,a')| above 1e-9 over all objectives, states and
/// action pairs.
double min_action_gap(const LexSolution& solution);

/// Same scan over raw tables; returns nullopt when all pairs are tied.
std::optional<double> smallest_action_gap(const std::vector<TableXd>& q_tables);

/// CSV with header `objective,state,action,q_value`.
std::string lex_solution_csv(const LexSolution& solution);

/// JSON summary: policy, j_vector, min_gap, action_sets, upper_level_ties.
std::string lex_solution_summary(const LexSolution& solution);

}  // namespace lexrl
