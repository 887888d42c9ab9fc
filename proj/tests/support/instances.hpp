#pragma once

#include "lexrl/momdp.hpp"

#include <cstdint>
#include <vector>

namespace lexrl::testing {

/// One state, two actions, gamma 0.5. Both actions pay 1 on objective 1; only
/// a2 pays 1 on objective 2.
Momdp tie_instance(std::int64_t horizon = 100);

/// One state, a1 pays delta and a2 pays 0 on a single objective.
Momdp gap_instance(double delta, double gamma);

/// One state, one action, reward r, discount gamma.
Momdp self_loop(double r, double gamma);

/// Noise-free random MOMDP with the given shape.
Momdp random_instance(std::uint64_t seed, Index states, Index actions, Index objectives, double discount = 0.9,
                      double noise = 0.0);

/// Random 5-state, 2-action, m=2 instances (noise 0.2) whose lex optimum is
/// unique in every state, taken in seed order from seed 1.
std::vector<Momdp> unique_optimum_instances(std::size_t count);

}  // namespace lexrl::testing
