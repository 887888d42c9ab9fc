#include "lexrl/momdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

namespace lexrl {

TableXd Momdp::expected_reward(Index objective) const {
  TableXd out(num_states, num_actions);
  const TableXd& r = reward_mean[static_cast<std::size_t>(objective)];
  for (Index s = 0; s < num_states; ++s)
    for (Index a = 0; a < num_actions; ++a)
      out(s, a) = transition.row(row(s, a)).dot(r.row(row(s, a)));
  return out;
}

Momdp make_momdp(Index num_states, Index num_actions, Index num_objectives) {
  if (num_states <= 0 || num_actions <= 0 || num_objectives <= 0)
    throw ContractError("make_momdp: dimensions must be positive");
  if (num_actions > kMaxActions)
    throw ContractError("make_momdp: at most 64 actions are supported");
  Momdp m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.num_objectives = num_objectives;
  m.transition = TableXd::Zero(num_states * num_actions, num_states);
  m.reward_mean.assign(static_cast<std::size_t>(num_objectives),
                       TableXd::Zero(num_states * num_actions, num_states));
  m.reward_noise_sigma = VectorXd::Zero(num_objectives);
  m.discounts = VectorXd::Constant(num_objectives, 0.9);
  m.initial = VectorXd::Constant(num_states, 1.0 / static_cast<double>(num_states));
  m.terminal.assign(static_cast<std::size_t>(num_states), false);
  return m;
}

Momdp select_objectives(const Momdp& momdp, const std::vector<Index>& objectives) {
  if (objectives.empty()) throw ContractError("select_objectives: empty objective list");
  Momdp out = momdp;
  const auto m = static_cast<Index>(objectives.size());
  out.num_objectives = m;
  out.reward_mean.clear();
  out.reward_noise_sigma.resize(m);
  out.discounts.resize(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = objectives[static_cast<std::size_t>(k)];
    if (i < 0 || i >= momdp.num_objectives)
      throw ContractError("select_objectives: objective index out of range");
    out.reward_mean.push_back(momdp.reward_mean[static_cast<std::size_t>(i)]);
    out.reward_noise_sigma(k) = momdp.reward_noise_sigma(i);
    out.discounts(k) = momdp.discounts(i);
  }
  return out;
}

TransitionRecord sample_transition(const Momdp& momdp, Index s, Index a, Rng& rng,
                                   std::int64_t step) {
  if (s < 0 || s >= momdp.num_states || a < 0 || a >= momdp.num_actions) {
    std::ostringstream msg;
    msg << "sample_transition: (state " << s << ", action " << a << ") out of range";
    throw ContractError(msg.str());
  }
  TransitionRecord rec;
  rec.state = s;
  rec.action = a;
  rec.step = step;
  rec.rewards = VectorXd::Zero(momdp.num_objectives);
  if (momdp.terminal[static_cast<std::size_t>(s)]) {
    rec.next_state = s;
    rec.terminal = true;
    return rec;
  }

  const Index r = momdp.row(s, a);
  const auto row = momdp.transition.row(r);
  const double u = uniform01(rng);
  double cumulative = 0.0;
  Index next = -1;
  Index last_support = 0;
  for (Index j = 0; j < momdp.num_states; ++j) {
    const double p = row(j);
    if (p <= 0.0) continue;
    last_support = j;
    cumulative += p;
    if (u < cumulative) {
      next = j;
      break;
    }
  }
  // Rounding can leave the cumulative sum a hair below u.
  if (next < 0) next = last_support;

  rec.next_state = next;
  rec.terminal = momdp.terminal[static_cast<std::size_t>(next)];
  for (Index i = 0; i < momdp.num_objectives; ++i) {
    double value = momdp.reward_mean[static_cast<std::size_t>(i)](r, next);
    const double sigma = momdp.reward_noise_sigma(i);
    if (sigma > 0.0) value += sigma * standard_normal(rng);
    rec.rewards(i) = value;
  }
  return rec;
}

Index sample_initial(const Momdp& momdp, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  Index last_support = 0;
  for (Index s = 0; s < momdp.num_states; ++s) {
    const double p = momdp.initial(s);
    if (p <= 0.0) continue;
    last_support = s;
    cumulative += p;
    if (u < cumulative) return s;
  }
  return last_support;
}

Momdp generate_random_momdp(const RandomMomdpConfig& config) {
  if (config.density <= 0.0 || config.density > 1.0)
    throw ContractError("generate_random_momdp: density must be in (0, 1]");
  if (config.density * static_cast<double>(config.num_states) < 1.0 - 1e-9)
    throw ContractError("generate_random_momdp: density * |S| must be at least 1");
  if (config.horizon <= 0) throw ContractError("generate_random_momdp: horizon must be positive");
  if (config.discount < 0.0 || config.discount >= 1.0)
    throw ContractError("generate_random_momdp: discount must be in [0, 1)");

  Momdp m = make_momdp(config.num_states, config.num_actions, config.num_objectives);
  const Index S = config.num_states;
  const auto support_size = std::clamp<Index>(
      static_cast<Index>(std::ceil(config.density * static_cast<double>(S) - 1e-9)), 1, S);

  Rng rng(config.seed);
  std::vector<Index> states(static_cast<std::size_t>(S));
  std::vector<std::vector<Index>> supports(static_cast<std::size_t>(S * config.num_actions));

  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < config.num_actions; ++a) {
      // Partial Fisher-Yates for the support, then Dirichlet(1) weights as
      // normalised unit exponentials.
      std::iota(states.begin(), states.end(), Index{0});
      for (Index k = 0; k < support_size; ++k) {
        const Index j = k + uniform_index(rng, S - k);
        std::swap(states[static_cast<std::size_t>(k)], states[static_cast<std::size_t>(j)]);
      }
      std::vector<Index> support(states.begin(), states.begin() + support_size);
      std::sort(support.begin(), support.end());
      std::vector<double> weights(support.size());
      double total = 0.0;
      for (double& w : weights) {
        w = -std::log(1.0 - uniform01(rng));
        total += w;
      }
      if (!(total > 0.0)) {
        std::fill(weights.begin(), weights.end(), 1.0);
        total = static_cast<double>(weights.size());
      }
      for (std::size_t k = 0; k < support.size(); ++k)
        m.transition(m.row(s, a), support[k]) = weights[k] / total;
      supports[static_cast<std::size_t>(m.row(s, a))] = std::move(support);
    }
  }
  for (Index i = 0; i < config.num_objectives; ++i) {
    TableXd& r = m.reward_mean[static_cast<std::size_t>(i)];
    for (Index row = 0; row < S * config.num_actions; ++row)
      for (Index next : supports[static_cast<std::size_t>(row)]) r(row, next) = uniform01(rng);
  }

  m.reward_noise_sigma.setConstant(config.reward_noise_sigma);
  m.discounts.setConstant(config.discount);
  m.episode_horizon = config.horizon;
  m.reward_bound = 1.0;
  return m;
}

namespace {

Index grid_move(Index side, Index cell, Index direction) {
  Index r = cell / side;
  Index c = cell % side;
  switch (direction) {
    case kUp: r -= 1; break;
    case kDown: r += 1; break;
    case kLeft: c -= 1; break;
    case kRight: c += 1; break;
    default: break;
  }
  if (r < 0 || r >= side || c < 0 || c >= side) return cell;
  return r * side + c;
}

}  // namespace

bool has_safe_path(const GridNavLayout& layout) {
  const Index n = layout.side * layout.side;
  if (layout.unsafe[static_cast<std::size_t>(layout.start)] ||
      layout.unsafe[static_cast<std::size_t>(layout.goal)])
    return false;
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::deque<Index> frontier{layout.start};
  seen[static_cast<std::size_t>(layout.start)] = true;
  while (!frontier.empty()) {
    const Index cell = frontier.front();
    frontier.pop_front();
    if (cell == layout.goal) return true;
    for (Index d = 0; d < 4; ++d) {
      const Index next = grid_move(layout.side, cell, d);
      const auto k = static_cast<std::size_t>(next);
      if (!seen[k] && !layout.unsafe[k]) {
        seen[k] = true;
        frontier.push_back(next);
      }
    }
  }
  return false;
}

GridNavLayout generate_gridnav_layout(const GridNavConfig& config) {
  if (config.grid_side < 2) throw ContractError("gridnav: grid_side must be at least 2");
  if (config.unsafe_density < 0.0 || config.unsafe_density >= 1.0)
    throw ContractError("gridnav: unsafe_density must be in [0, 1)");
  Rng rng(config.seed);
  GridNavLayout layout;
  layout.side = config.grid_side;
  const Index n = config.grid_side * config.grid_side;
  layout.start = 0;
  layout.goal = n - 1;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    layout.unsafe.assign(static_cast<std::size_t>(n), false);
    for (Index cell = 0; cell < n; ++cell) {
      const bool draw = uniform01(rng) < config.unsafe_density;
      if (cell != layout.start && cell != layout.goal) layout.unsafe[static_cast<std::size_t>(cell)] = draw;
    }
    if (has_safe_path(layout)) return layout;
  }
  throw GenerationError("gridnav: no layout with a safe start-goal path after 1000 attempts");
}

Momdp build_gridnav(const GridNavConfig& config, const GridNavLayout& layout) {
  if (config.slip_prob < 0.0 || config.slip_prob >= 1.0)
    throw ContractError("gridnav: slip_prob must be in [0, 1)");
  if (config.step_limit <= 0) throw ContractError("gridnav: step_limit must be positive");
  const Index side = layout.side;
  const Index n = side * side;
  Momdp m = make_momdp(n, 4, 2);
  for (Index cell = 0; cell < n; ++cell) {
    for (Index a = 0; a < 4; ++a) {
      const Index r = m.row(cell, a);
      if (cell == layout.goal) {
        m.transition(r, cell) = 1.0;
        continue;
      }
      for (Index d = 0; d < 4; ++d) {
        const double p = (d == a ? 1.0 - config.slip_prob : 0.0) + config.slip_prob / 4.0;
        m.transition(r, grid_move(side, cell, d)) += p;
      }
      for (Index next = 0; next < n; ++next) {
        if (layout.unsafe[static_cast<std::size_t>(next)]) m.reward_mean[0](r, next) = -config.unsafe_cost;
        if (next == layout.goal) m.reward_mean[1](r, next) = config.goal_reward;
      }
    }
  }
  m.terminal[static_cast<std::size_t>(layout.goal)] = true;
  m.initial.setZero();
  m.initial(layout.start) = 1.0;
  m.discounts.setConstant(config.discount);
  m.episode_horizon = config.step_limit;
  m.reward_bound = std::max(std::abs(config.goal_reward), std::abs(config.unsafe_cost));
  return m;
}

Momdp build_gridnav(const GridNavConfig& config) {
  return build_gridnav(config, generate_gridnav_layout(config));
}

std::vector<std::string> validate(const Momdp& m) {
  std::vector<std::string> out;
  auto fail = [&out](const std::string& msg) { out.push_back(msg); };
  if (m.num_states <= 0 || m.num_actions <= 0 || m.num_objectives <= 0) {
    fail("dimensions must be positive");
    return out;
  }
  if (m.num_actions > kMaxActions) fail("more than 64 actions");
  const Index rows = m.num_states * m.num_actions;
  if (m.transition.rows() != rows || m.transition.cols() != m.num_states) {
    fail("transition table has wrong shape");
    return out;
  }
  if (static_cast<Index>(m.reward_mean.size()) != m.num_objectives) {
    fail("reward table count differs from num_objectives");
    return out;
  }
  for (const TableXd& r : m.reward_mean) {
    if (r.rows() != rows || r.cols() != m.num_states) {
      fail("reward table has wrong shape");
      return out;
    }
  }
  if (m.discounts.size() != m.num_objectives || m.reward_noise_sigma.size() != m.num_objectives ||
      m.initial.size() != m.num_states || static_cast<Index>(m.terminal.size()) != m.num_states) {
    fail("per-objective or per-state vector has wrong length");
    return out;
  }

  for (Index s = 0; s < m.num_states; ++s) {
    for (Index a = 0; a < m.num_actions; ++a) {
      const auto row = m.transition.row(m.row(s, a));
      if ((row.array() < 0.0).any() || !row.allFinite()) {
        std::ostringstream msg;
        msg << "transition row (" << s << ", " << a << ") has negative or non-finite entries";
        fail(msg.str());
      }
      const double sum = row.sum();
      if (std::abs(sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "transition row (" << s << ", " << a << ") sums to " << sum << ", expected 1";
        fail(msg.str());
      }
    }
  }
  for (Index i = 0; i < m.num_objectives; ++i) {
    const TableXd& r = m.reward_mean[static_cast<std::size_t>(i)];
    if (!r.allFinite() || r.cwiseAbs().maxCoeff() > m.reward_bound) {
      std::ostringstream msg;
      msg << "objective " << i << " has reward means that are non-finite or exceed R_max "
          << m.reward_bound;
      fail(msg.str());
    }
    const double g = m.discounts(i);
    if (!(g >= 0.0 && g < 1.0)) {
      std::ostringstream msg;
      msg << "objective " << i << " discount " << g << " not in [0, 1)";
      fail(msg.str());
    }
    if (!(m.reward_noise_sigma(i) >= 0.0)) {
      std::ostringstream msg;
      msg << "objective " << i << " has negative noise sigma";
      fail(msg.str());
    }
  }
  if ((m.initial.array() < 0.0).any() || std::abs(m.initial.sum() - 1.0) > 1e-12)
    fail("initial distribution is not a probability vector");
  if (m.episode_horizon && *m.episode_horizon <= 0) fail("episode horizon must be positive");

  for (Index s = 0; s < m.num_states; ++s) {
    if (!m.terminal[static_cast<std::size_t>(s)]) continue;
    for (Index a = 0; a < m.num_actions; ++a) {
      const Index r = m.row(s, a);
      if (m.transition(r, s) != 1.0) {
        std::ostringstream msg;
        msg << "terminal state " << s << " action " << a
            << " is not a probability-1 self-loop (terminal requires T(s,a)=s and R(s,a,s)=0)";
        fail(msg.str());
      }
      for (Index i = 0; i < m.num_objectives; ++i) {
        if (m.reward_mean[static_cast<std::size_t>(i)](r, s) != 0.0) {
          std::ostringstream msg;
          msg << "terminal state " << s << " action " << a << " objective " << i
              << " has nonzero reward mean (terminal requires T(s,a)=s and R(s,a,s)=0)";
          fail(msg.str());
        }
      }
    }
  }
  return out;
}

void require_valid(const Momdp& momdp) {
  const auto violations = validate(momdp);
  if (violations.empty()) return;
  std::string msg = "invalid momdp:";
  for (const auto& v : violations) msg += "\n  " + v;
  throw ContractError(msg);
}

}  // namespace lexrl
