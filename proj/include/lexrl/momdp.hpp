#pragma once

#include "lexrl/rng.hpp"
#include "lexrl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lexrl {

/// Finite multi-objective MDP with per-objective discounts.
///
/// Transition and reward tables are stored with one row per (state, action)
/// pair, row index `s * num_actions + a`, and one column per successor state.
/// Objectives are 0-based; objective 0 has the highest priority.
struct Momdp {
  Index num_states = 0;
  Index num_actions = 0;
  Index num_objectives = 0;

  TableXd transition;                 // (S*A) x S
  std::vector<TableXd> reward_mean;   // m tables, each (S*A) x S
  VectorXd reward_noise_sigma;        // m
  VectorXd discounts;                 // m, each in [0, 1)
  VectorXd initial;                   // S
  std::vector<bool> terminal;         // S
  std::optional<std::int64_t> episode_horizon;
  double reward_bound = 1.0;          // declared R_max

  Index row(Index s, Index a) const { return s * num_actions + a; }

  /// Expected immediate reward sum_{s'} T(s,a,s') R_i(s,a,s') as an S x A table.
  TableXd expected_reward(Index objective) const;

  /// Smallest discount over all objectives.
  double min_discount() const { return discounts.minCoeff(); }
};

/// Zero-initialised MOMDP of the given shape: no transitions, uniform initial
/// distribution, discounts 0.9, no noise, no terminal states.
Momdp make_momdp(Index num_states, Index num_actions, Index num_objectives);

/// Copy of `momdp` keeping only the listed objectives, in the listed order.
Momdp select_objectives(const Momdp& momdp, const std::vector<Index>& objectives);

struct TransitionRecord {
  Index state = 0;
  Index action = 0;
  Index next_state = 0;
  VectorXd rewards;  // sampled, noise included
  bool terminal = false;
  std::int64_t step = 0;
};

/// Draws s' ~ T(s,a) and noisy rewards. From a terminal state the record is
/// (s, 0, true) and no randomness is consumed.
///
/// Random draws, in order: one uniform for the successor, then one normal per
/// objective whose noise sigma is positive.
TransitionRecord sample_transition(const Momdp& momdp, Index s, Index a, Rng& rng,
                                   std::int64_t step = 0);

/// Draws a start state from the initial distribution (one uniform).
Index sample_initial(const Momdp& momdp, Rng& rng);

struct RandomMomdpConfig {
  Index num_states = 64;
  Index num_actions = 4;
  Index num_objectives = 2;
  std::uint64_t seed = 0;
  double density = 1.0;           // fraction of successor states per row
  double reward_noise_sigma = 0.2;
  std::int64_t horizon = 100;
  double discount = 0.9;
};

/// Seeded random MOMDP: each row is supported on ceil(density*|S|) successors
/// with Dirichlet(1) weights, reward means uniform in [0,1) on the support,
/// uniform initial distribution, no terminal states.
Momdp generate_random_momdp(const RandomMomdpConfig& config);

struct GridNavConfig {
  Index grid_side = 12;
  double unsafe_density = 0.25;
  double slip_prob = 0.1;
  double goal_reward = 100.0;
  double unsafe_cost = 1.0;
  std::int64_t step_limit = 200;
  double discount = 0.99;
  std::uint64_t seed = 0;
};

/// Cell layout of a GridNav instance. Cell (r, c) is state r * side + c.
struct GridNavLayout {
  Index side = 0;
  std::vector<bool> unsafe;
  Index start = 0;
  Index goal = 0;
};

enum GridAction : Index { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

class GenerationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Samples unsafe cells i.i.d. until a path of safe cells joins start (0,0)
/// and goal (side-1, side-1). Throws GenerationError after 1000 attempts.
GridNavLayout generate_gridnav_layout(const GridNavConfig& config);

/// True when a 4-connected path of safe cells joins start and goal.
bool has_safe_path(const GridNavLayout& layout);

/// Two-objective GridNav MOMDP for an explicit layout. Objective 0 is the
/// negated cost of entering unsafe cells, objective 1 the goal reward. The goal
/// cell is absorbing and terminal.
Momdp build_gridnav(const GridNavConfig& config, const GridNavLayout& layout);
Momdp build_gridnav(const GridNavConfig& config);

/// Every violated Momdp invariant, one message per violation. Empty means valid.
std::vector<std::string> validate(const Momdp& momdp);

/// Throws ContractError listing the violations when validate() is not empty.
void require_valid(const Momdp& momdp);

// Text serialization, see momdp_io.cpp for the line format.
std::string to_text(const Momdp& momdp);
Momdp momdp_from_text(std::string_view text);
void save_momdp(const Momdp& momdp, const std::string& path);
Momdp load_momdp(const std::string& path);

}  // namespace lexrl
