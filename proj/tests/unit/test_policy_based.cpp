#include "instances.hpp"
#include "invariants.hpp"
#include "reference.hpp"

#include "lexrl/policy_based.hpp"

#include <doctest.h>

#include <cmath>

using namespace lexrl;
using namespace lexrl::testing;

namespace {

std::vector<BatchSample> random_batch(Rng& rng, Index S, Index A, Index m, int n) {
  std::vector<BatchSample> batch;
  for (int k = 0; k < n; ++k) {
    BatchSample x;
    x.state = uniform_index(rng, S);
    x.action = uniform_index(rng, A);
    x.deltas = VectorXd(m);
    for (Index i = 0; i < m; ++i) x.deltas(i) = standard_normal(rng);
    batch.push_back(x);
  }
  return batch;
}

// Closed form for one-hot softmax: d log pi(a|s) / d theta(s, b) = [a == b] - pi(b|s).
TableXd a2c_grad_oracle(const TableXd& theta, const std::vector<BatchSample>& batch, Index i) {
  TableXd g = TableXd::Zero(theta.rows(), theta.cols());
  for (const BatchSample& x : batch) {
    const auto z = theta.row(x.state);
    const double top = z.maxCoeff();
    VectorXd p(theta.cols());
    double total = 0.0;
    for (Index b = 0; b < theta.cols(); ++b) total += (p(b) = std::exp(z(b) - top));
    p /= total;
    for (Index b = 0; b < theta.cols(); ++b) g(x.state, b) += x.deltas(i) * ((b == x.action ? 1.0 : 0.0) - p(b));
  }
  return g / static_cast<double>(batch.size());
}

}  // namespace

TEST_SUITE("policy_based") {
  TEST_CASE("zero parameters give the uniform policy") {
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(3));
    const SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 4);
    const PolicyTable t = policy_table(p);
    CHECK((t.array() - 0.25).abs().maxCoeff() < 1e-15);
  }

  TEST_CASE("softmax is stable for large logits") {
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(1));
    SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 2);
    p.theta(0, 0) = 100.0;
    p.theta(0, 1) = -100.0;
    const VectorXd d = policy_distribution(p, 0);
    CHECK(d.allFinite());
    CHECK(d(0) == 1.0);
    CHECK(d(1) == doctest::Approx(std::exp(-200.0)).epsilon(1e-10));
  }

  TEST_CASE("softmax rows are normalised and positive") {
    Rng rng(15);
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(8));
    SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 5);
    for (int trial = 0; trial < 100; ++trial) {
      for (Index s = 0; s < 8; ++s)
        for (Index a = 0; a < 5; ++a) p.theta(s, a) = 30.0 * standard_normal(rng);
      const PolicyTable t = policy_table(p);
      CHECK(((t.rowwise().sum().array() - 1.0).abs() <= 1e-12).all());
      CHECK((t.array() > 0.0).all());
    }
  }

  TEST_CASE("tracker flags never revert and the frontier counts converged objectives") {
    Rng rng(16);
    ObjectiveTracker tracker(4, 3, 0.05);
    Index converged = 0;
    for (int k = 0; k < 2000 && tracker.active() < 4; ++k) {
      const double v = 10.0 + (uniform01(rng) < 0.7 ? 0.0 : 5.0 * uniform01(rng));
      if (tracker.push(tracker.active(), v)) ++converged;
      for (Index i = 0; i < converged; ++i) CHECK(tracker.converged(i));
      CHECK(tracker.active() == converged);
    }
    CHECK(converged == 4);
  }

  TEST_CASE("sample_action frequencies follow the distribution") {
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(1));
    SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 3);
    p.theta(0, 0) = 1.0;
    p.theta(0, 2) = -0.5;
    const VectorXd d = policy_distribution(p, 0);
    Rng rng(4);
    VectorXd freq = VectorXd::Zero(3);
    const int n = 100000;
    for (int k = 0; k < n; ++k) freq(sample_action(p, 0, rng)) += 1.0;
    CHECK(0.5 * (freq / n - d).cwiseAbs().sum() < 0.01);
  }

  TEST_CASE("A2C gradient matches the one-hot closed form") {
    Rng rng(12);
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(4));
    SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 3);
    for (Index s = 0; s < 4; ++s)
      for (Index a = 0; a < 3; ++a) p.theta(s, a) = 2.0 * standard_normal(rng);
    const auto batch = random_batch(rng, 4, 3, 2, 16);
    for (Index i = 0; i < 2; ++i)
      CHECK((a2c_objective_grad(p, batch, i) - a2c_grad_oracle(p.theta, batch, i)).cwiseAbs().maxCoeff() < 1e-13);
  }

  TEST_CASE("PPO objective at the snapshot equals the mean advantage") {
    Rng rng(13);
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(3));
    SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 2);
    p.theta(1, 0) = 0.7;
    const auto batch = random_batch(rng, 3, 2, 1, 10);
    double mean = 0.0;
    for (const auto& x : batch) mean += x.deltas(0);
    mean /= 10.0;
    CHECK(ppo_objective_value(p, p, batch, 0, 1.5) == doctest::Approx(mean).epsilon(1e-13));
  }

  TEST_CASE("gradient and tangency checks at reduced size") {
    for (const CheckResult& r : {check_gradients(3, 21), check_ppo_tangency(3, 22), check_lambda_theta(2000, 23),
                                 check_rate_chain(), check_coefficient_identity(50, 24)}) {
      INFO(r.detail);
      CHECK(r.ok);
    }
  }

  TEST_CASE("timescale exponents and tau schedule") {
    const Index m = 2;
    for (Index k = 0; k <= 2 * m + 1; ++k)
      CHECK(TimescaleChain::exponent(k, m) == doctest::Approx(0.55 + 0.40 * k / 5.0));
    CHECK(TimescaleChain::exponent(2 * m + 1, m) < 1.0);
    TimescaleChain c;
    c.t0 = 10.0;
    c.tau0 = 0.2;
    CHECK(c.tau(0) == doctest::Approx(0.2));
    CHECK(c.tau(10) == doctest::Approx(0.1));
    CHECK(c.alpha(0, m) == doctest::Approx(c.alpha_base));
    CHECK(c.alpha(10, m) == doctest::Approx(c.alpha_base * std::pow(2.0, -0.55)));
    CHECK(c.beta(2, 0, m) == doctest::Approx(c.beta_base * c.beta_ratio));
  }

  TEST_CASE("coefficients follow c^i = beta^i + lambda_i sum_{j>i} beta^j") {
    TimescaleChain chain;
    Multipliers lambda{VectorXd(3)};
    lambda.lambda << 0.5, 2.0, 7.0;
    const std::int64_t t = 321;
    const VectorXd c = timescale_coefficients(t, 3, lambda, chain);
    const double b1 = chain.beta(1, t, 3), b2 = chain.beta(2, t, 3), b3 = chain.beta(3, t, 3);
    CHECK(c(0) == doctest::Approx(b1 + 0.5 * (b2 + b3)).epsilon(1e-14));
    CHECK(c(1) == doctest::Approx(b2 + 2.0 * b3).epsilon(1e-14));
    CHECK(c(2) == doctest::Approx(b3).epsilon(1e-14));
    CHECK_THROWS_AS(timescale_coefficients(t, 2, lambda, chain), ContractError);
  }

  TEST_CASE("lambda update is projected and only touches converged objectives") {
    ObjectiveTracker tracker(3, 1, 1e300);
    tracker.push(0, 5.0);
    Multipliers lambda = Multipliers::zeros(3);
    VectorXd est(3);
    est << 4.0, 1.0, 1.0;
    lambda_update(lambda, tracker, est, 0.5, 0.1);
    CHECK(lambda.lambda(0) == doctest::Approx(0.5 * (5.0 - 0.1 - 4.0)));
    CHECK(lambda.lambda(1) == 0.0);
    est(0) = 100.0;
    lambda_update(lambda, tracker, est, 0.5, 0.1);
    CHECK(lambda.lambda(0) == 0.0);
  }

  TEST_CASE("theta update clamps and rejects non-finite steps") {
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(2));
    SoftmaxPolicyParams p = SoftmaxPolicyParams::zeros(phi, 2, 5.0);
    TableXd step = TableXd::Zero(2, 2);
    step(0, 0) = 12.0;
    step(1, 1) = -7.0;
    theta_update(p, step, 0);
    CHECK(p.theta(0, 0) == 5.0);
    CHECK(p.theta(1, 1) == -5.0);
    step(0, 1) = std::nan("");
    try {
      theta_update(p, step, 42);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("42") != std::string::npos);
    }
    CHECK_THROWS_AS(theta_update(p, TableXd::Zero(3, 2), 0), ContractError);
  }

  TEST_CASE("feature maps") {
    CHECK_NOTHROW(FeatureMap::from_matrix(TableXd::Identity(4, 4)));
    TableXd rank_deficient(3, 2);
    rank_deficient << 1, 2, 2, 4, 0, 0;
    CHECK_THROWS_AS(FeatureMap::from_matrix(rank_deficient), ContractError);
    TableXd bias(3, 2);
    bias << 1, 0, 1, 1, 1, 2;
    CHECK_THROWS_AS(FeatureMap::from_matrix(bias), ContractError);

    TableXd phi(3, 2);
    phi << 1, 0, 0, 1, 2, 3;
    const FeatureMap f = FeatureMap::from_matrix(phi);
    VectorXd w(2);
    w << 0.5, -1.0;
    CHECK(f.dot(2, w) == doctest::Approx(-2.0));
    CHECK(FeatureMap::one_hot(3).dot(1, VectorXd::LinSpaced(3, 0.0, 2.0)) == 1.0);
  }

  TEST_CASE("critic TD(0) update") {
    const auto phi = std::make_shared<const FeatureMap>(FeatureMap::one_hot(2));
    LinearCritics v = LinearCritics::zeros(phi, 1);
    v.w(0, 1) = 2.0;
    TransitionRecord rec;
    rec.state = 0;
    rec.next_state = 1;
    rec.rewards = VectorXd::Constant(1, 1.0);
    const double delta = critic_td0_update(v, rec, 0, 0.5, 0.9);
    CHECK(delta == doctest::Approx(2.8));
    CHECK(v.value(0, 0) == doctest::Approx(1.4));
    rec.terminal = true;
    CHECK(critic_td0_update(v, rec, 0, 0.0, 0.9) == doctest::Approx(1.0 - 1.4));
  }

  TEST_CASE("tracker convergence rules") {
    ObjectiveTracker constant(1, 5, 0.01);
    for (int k = 1; k <= 4; ++k) CHECK_FALSE(constant.push(0, 3.0));
    CHECK(constant.push(0, 3.0));
    CHECK(constant.converged(0));
    CHECK(constant.k_hat(0) == 3.0);
    CHECK_THROWS_AS(constant.push(0, 3.0), ContractError);

    ObjectiveTracker growing(1, 5, 0.01);
    double v = 1.0;
    for (int k = 0; k < 200; ++k) CHECK_FALSE(growing.push(0, v *= 1.5));

    Rng rng(8);
    int converged = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      ObjectiveTracker noisy(1, 100, 0.01);
      bool hit = false;
      for (int k = 0; k < 100 && !hit; ++k) hit = noisy.push(0, 10.0 + 0.02 * (uniform01(rng) - 0.5));
      converged += hit;
    }
    CHECK(converged >= 990);
  }

  TEST_CASE("config validation") {
    PblrlConfig c;
    CHECK_NOTHROW(validate_config(c));
    c.objective = PolicyObjective::PPO;
    c.kappa = 0.5;
    CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("kappa > 1"), ContractError);
    c.kappa = 1.5;
    c.batch_size = 0;
    CHECK_THROWS_AS(validate_config(c), ContractError);
  }

  TEST_CASE("single objective run matches the plain actor-critic") {
    const Momdp m = random_instance(6, 5, 3, 1, 0.9, 0.2);
    for (PolicyObjective obj : {PolicyObjective::A2C, PolicyObjective::PPO}) {
      PblrlConfig c;
      c.objective = obj;
      c.max_steps = 4000;
      Rng a(3), b(3);
      const PblrlResult r = run_pblrl(m, c, a);
      const PlainActorCritic plain = plain_actor_critic(m, c, b);
      CHECK((r.params.theta.array() == plain.theta.array()).all());
      CHECK((r.critics.w.row(0).transpose().array() == plain.w.array()).all());
      CHECK(a == b);
    }
  }

  TEST_CASE("run_pblrl records a trace and respects theta bounds") {
    PblrlConfig c;
    c.max_steps = 3200;
    c.theta_max = 3.0;
    Rng rng(5);
    const PblrlResult r = run_pblrl(tie_instance(), c, rng, true);
    CHECK(r.steps == 3200);
    CHECK(r.updates == 100);
    CHECK(r.params.theta.cwiseAbs().maxCoeff() <= 3.0);
    CHECK((r.multipliers.lambda.array() >= 0.0).all());
    CHECK(r.trace.size() == 200);
    CHECK(trace_csv(r.trace).rfind("t,i,lambda_i,c_i,beta_i,eta_active\n", 0) == 0);
    CHECK(policy_csv(r.params).rfind("state,action,probability\n", 0) == 0);
  }
}
