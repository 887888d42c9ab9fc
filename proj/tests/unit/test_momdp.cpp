#include "instances.hpp"

#include "lexrl/momdp.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <queue>

using namespace lexrl;
using namespace lexrl::testing;

namespace {

Momdp two_state_chain() {
  Momdp m = make_momdp(2, 1, 2);
  m.transition(m.row(0, 0), 1) = 1.0;
  m.transition(m.row(1, 0), 1) = 1.0;
  m.reward_mean[0](m.row(0, 0), 1) = 0.25;
  m.reward_mean[1](m.row(0, 0), 1) = -0.5;
  m.terminal[1] = true;
  return m;
}

bool same_momdp(const Momdp& a, const Momdp& b) {
  if (a.num_states != b.num_states || a.num_actions != b.num_actions || a.num_objectives != b.num_objectives)
    return false;
  if (!(a.transition.array() == b.transition.array()).all()) return false;
  for (std::size_t i = 0; i < a.reward_mean.size(); ++i)
    if (!(a.reward_mean[i].array() == b.reward_mean[i].array()).all()) return false;
  return (a.reward_noise_sigma.array() == b.reward_noise_sigma.array()).all() &&
         (a.discounts.array() == b.discounts.array()).all() && (a.initial.array() == b.initial.array()).all() &&
         a.terminal == b.terminal && a.episode_horizon == b.episode_horizon && a.reward_bound == b.reward_bound;
}

}  // namespace

TEST_SUITE("momdp") {
  TEST_CASE("terminal state returns itself with zero rewards") {
    const Momdp m = two_state_chain();
    Rng rng(1);
    for (int k = 0; k < 5; ++k) {
      const Rng before = rng;
      const TransitionRecord rec = sample_transition(m, 1, 0, rng);
      CHECK(rec.next_state == 1);
      CHECK(rec.terminal);
      CHECK(rec.rewards.isZero(0.0));
      CHECK(rng == before);  // no randomness consumed
    }
  }

  TEST_CASE("deterministic chain without noise returns the reward means exactly") {
    const Momdp m = two_state_chain();
    Rng rng(2);
    const TransitionRecord rec = sample_transition(m, 0, 0, rng, 7);
    CHECK(rec.next_state == 1);
    CHECK(rec.terminal);
    CHECK(rec.rewards(0) == 0.25);
    CHECK(rec.rewards(1) == -0.5);
    CHECK(rec.step == 7);
  }

  TEST_CASE("successor frequencies follow the transition row") {
    Momdp m = make_momdp(2, 1, 1);
    m.transition(0, 0) = 0.3;
    m.transition(0, 1) = 0.7;
    m.transition(1, 1) = 1.0;
    Rng rng(3);
    const int n = 1000000;
    int ones = 0;
    for (int k = 0; k < n; ++k) ones += sample_transition(m, 0, 0, rng).next_state == 1;
    CHECK(std::abs(static_cast<double>(ones) / n - 0.7) < 0.005);
  }

  TEST_CASE("reward noise has the configured spread") {
    Momdp m = self_loop(1.0, 0.5);
    m.reward_noise_sigma(0) = 0.2;
    Rng rng(4);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
      const double r = sample_transition(m, 0, 0, rng).rewards(0);
      sum += r;
      sq += r * r;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - 1.0) < 0.005);
    CHECK(std::abs(std::sqrt(sq / n - mean * mean) - 0.2) < 0.005);
  }

  TEST_CASE("out-of-range indices are contract errors") {
    const Momdp m = two_state_chain();
    Rng rng(5);
    CHECK_THROWS_AS(sample_transition(m, 2, 0, rng), ContractError);
    CHECK_THROWS_AS(sample_transition(m, 0, 1, rng), ContractError);
    CHECK_THROWS_AS(sample_transition(m, -1, 0, rng), ContractError);
  }

  TEST_CASE("sample_initial respects the initial distribution") {
    Momdp m = make_momdp(5, 1, 1);
    m.transition.setConstant(0.2);
    m.initial.setZero();
    m.initial(3) = 1.0;
    Rng rng(6);
    for (int k = 0; k < 100; ++k) CHECK(sample_initial(m, rng) == 3);

    Momdp u = make_momdp(4, 1, 1);
    u.transition.setConstant(0.25);
    std::vector<int> counts(4, 0);
    for (int k = 0; k < 100000; ++k) ++counts[static_cast<std::size_t>(sample_initial(u, rng))];
    for (int c : counts) CHECK(std::abs(c / 100000.0 - 0.25) < 0.01);

    u.initial << 0.5, 0.25, 0.0, 0.25;
    for (int k = 0; k < 100000; ++k) REQUIRE(sample_initial(u, rng) != 2);
  }

  TEST_CASE("generator is deterministic and valid") {
    RandomMomdpConfig c;
    c.num_states = 256;
    c.num_actions = 4;
    c.num_objectives = 3;
    c.seed = 99;
    const Momdp a = generate_random_momdp(c);
    const Momdp b = generate_random_momdp(c);
    CHECK(same_momdp(a, b));
    CHECK(to_text(a) == to_text(b));
    CHECK(validate(a).empty());
    for (Index r = 0; r < a.transition.rows(); ++r) CHECK(std::abs(a.transition.row(r).sum() - 1.0) <= 1e-12);
    CHECK(a.episode_horizon == std::optional<std::int64_t>(100));
    for (bool t : a.terminal) CHECK_FALSE(t);
    for (const TableXd& r : a.reward_mean) {
      CHECK(r.minCoeff() >= 0.0);
      CHECK(r.maxCoeff() < 1.0);
    }
    c.seed = 100;
    CHECK_FALSE(same_momdp(a, generate_random_momdp(c)));
  }

  TEST_CASE("minimal density gives point-mass rows") {
    RandomMomdpConfig c;
    c.num_states = 16;
    c.num_actions = 3;
    c.density = 1.0 / 16.0;
    c.seed = 5;
    const Momdp m = generate_random_momdp(c);
    for (Index r = 0; r < m.transition.rows(); ++r) {
      CHECK(m.transition.row(r).maxCoeff() == 1.0);
      CHECK((m.transition.row(r).array() > 0.0).count() == 1);
    }
  }

  TEST_CASE("partial density supports ceil(density |S|) successors") {
    RandomMomdpConfig c;
    c.num_states = 10;
    c.density = 0.25;
    c.seed = 8;
    const Momdp m = generate_random_momdp(c);
    for (Index r = 0; r < m.transition.rows(); ++r) CHECK((m.transition.row(r).array() > 0.0).count() == 3);
  }

  TEST_CASE("generator rejects invalid configs") {
    RandomMomdpConfig c;
    c.num_states = 4;
    c.density = 0.1;
    CHECK_THROWS_AS(generate_random_momdp(c), ContractError);
    c.density = 1.0;
    c.discount = 1.0;
    CHECK_THROWS_AS(generate_random_momdp(c), ContractError);
  }

  TEST_CASE("gridnav: moving into the goal without slip ends the episode with the goal reward") {
    GridNavConfig c;
    c.grid_side = 3;
    c.slip_prob = 0.0;
    GridNavLayout layout{3, std::vector<bool>(9, false), 0, 8};
    const Momdp m = build_gridnav(c, layout);
    CHECK(validate(m).empty());
    Rng rng(9);
    const TransitionRecord rec = sample_transition(m, 7, kRight, rng);
    CHECK(rec.next_state == 8);
    CHECK(rec.terminal);
    CHECK(rec.rewards(0) == 0.0);
    CHECK(rec.rewards(1) == 100.0);
    CHECK(m.episode_horizon == std::optional<std::int64_t>(200));
  }

  TEST_CASE("gridnav: slip mixture puts 0.925 on the intended move") {
    GridNavConfig c;
    c.grid_side = 5;
    GridNavLayout layout{5, std::vector<bool>(25, false), 0, 24};
    const Momdp m = build_gridnav(c, layout);
    const Index centre = 12;
    CHECK(m.transition(m.row(centre, kRight), 13) == doctest::Approx(0.925).epsilon(1e-15));
    CHECK(m.transition(m.row(centre, kRight), 11) == doctest::Approx(0.025).epsilon(1e-15));
    // Off-grid slips stay in place: from the corner, up and left both stay.
    CHECK(m.transition(m.row(0, kRight), 0) == doctest::Approx(0.05).epsilon(1e-15));

    // Empirical next-cell law against the analytic mixture.
    Rng rng(10);
    std::vector<double> freq(25, 0.0);
    const int n = 100000;
    for (int k = 0; k < n; ++k) freq[static_cast<std::size_t>(sample_transition(m, centre, kDown, rng).next_state)] += 1.0;
    double tv = 0.0;
    for (Index s = 0; s < 25; ++s) tv += std::abs(freq[static_cast<std::size_t>(s)] / n - m.transition(m.row(centre, kDown), s));
    CHECK(0.5 * tv < 0.01);
  }

  TEST_CASE("gridnav: entering an unsafe cell costs unsafe_cost") {
    GridNavConfig c;
    c.grid_side = 3;
    c.slip_prob = 0.0;
    GridNavLayout layout{3, std::vector<bool>(9, false), 0, 8};
    layout.unsafe[1] = true;
    const Momdp m = build_gridnav(c, layout);
    Rng rng(11);
    const TransitionRecord rec = sample_transition(m, 0, kRight, rng);
    CHECK(rec.next_state == 1);
    CHECK(rec.rewards(0) == -1.0);
    CHECK(rec.rewards(1) == 0.0);
  }

  TEST_CASE("gridnav layouts keep start and goal safe and joined by a safe path") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      GridNavConfig c;
      c.seed = seed;
      const GridNavLayout layout = generate_gridnav_layout(c);
      CHECK_FALSE(layout.unsafe[static_cast<std::size_t>(layout.start)]);
      CHECK_FALSE(layout.unsafe[static_cast<std::size_t>(layout.goal)]);
      CHECK(has_safe_path(layout));
      CHECK(layout.goal == 12 * 12 - 1);
    }
    GridNavConfig dense;
    dense.unsafe_density = 0.99;
    CHECK_THROWS_AS(generate_gridnav_layout(dense), GenerationError);
  }

  TEST_CASE("validate reports broken rows and terminal rewards") {
    Momdp m = random_instance(1, 4, 2, 2);
    CHECK(validate(m).empty());
    m.transition.row(m.row(2, 1)) *= 0.9;
    const auto v = validate(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("(2, 1)") != std::string::npos);

    Momdp t = two_state_chain();
    CHECK(validate(t).empty());
    t.reward_mean[1](t.row(1, 0), 1) = 0.5;
    const auto w = validate(t);
    REQUIRE(w.size() == 1);
    CHECK(w[0].find("terminal") != std::string::npos);
    CHECK_THROWS_AS(require_valid(t), ContractError);
  }

  TEST_CASE("terminal absorption holds under repeated sampling") {
    GridNavConfig c;
    const Momdp m = build_gridnav(c);
    Rng rng(12);
    for (int k = 0; k < 100; ++k) {
      const TransitionRecord rec = sample_transition(m, 143, uniform_index(rng, 4), rng);
      CHECK(rec.next_state == 143);
      CHECK(rec.rewards.isZero(0.0));
    }
  }

  TEST_CASE("text round trip is bit-exact") {
    Momdp m = random_instance(17, 7, 3, 3, 0.95, 0.3);
    m.terminal[4] = true;
    m.transition.row(m.row(4, 0)).setZero();
    m.transition.row(m.row(4, 1)).setZero();
    m.transition.row(m.row(4, 2)).setZero();
    for (Index a = 0; a < 3; ++a) {
      m.transition(m.row(4, a), 4) = 1.0;
      for (TableXd& r : m.reward_mean) r.row(m.row(4, a)).setZero();
    }
    REQUIRE(validate(m).empty());
    const Momdp back = momdp_from_text(to_text(m));
    CHECK(same_momdp(m, back));
    CHECK(to_text(back) == to_text(m));

    const GridNavConfig gc;
    const Momdp grid = build_gridnav(gc);
    CHECK(same_momdp(grid, momdp_from_text(to_text(grid))));

    const auto dir = std::filesystem::temp_directory_path() / "lexrl_momdp_io";
    std::filesystem::create_directories(dir);
    save_momdp(m, (dir / "m.momdp").string());
    CHECK(same_momdp(m, load_momdp((dir / "m.momdp").string())));
  }

  TEST_CASE("malformed text is a format error naming the line") {
    CHECK_THROWS_AS(momdp_from_text("momdp v2 1 1 1\n"), FormatError);
    try {
      momdp_from_text("momdp v1 1 1 1\nT 0 0 zero\n");
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  TEST_CASE("select_objectives keeps the listed channels in order") {
    const Momdp m = random_instance(3, 4, 2, 3);
    const Momdp s = select_objectives(m, {2, 0});
    CHECK(s.num_objectives == 2);
    CHECK((s.reward_mean[0].array() == m.reward_mean[2].array()).all());
    CHECK((s.reward_mean[1].array() == m.reward_mean[0].array()).all());
  }
}
