#include "instances.hpp"

#include "lexrl/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace lexrl;
using namespace lexrl::testing;

namespace {

ScalingExperimentConfig small_scaling() {
  ScalingExperimentConfig c;
  c.states = {6};
  c.actions = 2;
  c.objectives = {1, 2};
  c.momdps_per_cell = 2;
  c.vb.max_steps = 3000;
  c.vb.stop_on_convergence = false;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("algorithm names round trip") {
    for (AlgorithmKind k : {AlgorithmKind::LexQ, AlgorithmKind::Sarsa, AlgorithmKind::ExpectedSarsa,
                            AlgorithmKind::LexDoubleQ, AlgorithmKind::LA2C, AlgorithmKind::LPPO, AlgorithmKind::Baseline})
      CHECK(parse_algorithm(algorithm_name(k)) == k);
    CHECK(is_value_based(AlgorithmKind::Sarsa));
    CHECK_FALSE(is_value_based(AlgorithmKind::LPPO));
  }

  TEST_CASE("config digest is FNV-1a 64") {
    CHECK(config_digest("") == "cbf29ce484222325");
    CHECK(config_digest("a") == "af63dc4c8601ec8c");
    CHECK(config_digest("x = 1\n") != config_digest("x = 2\n"));
  }

  TEST_CASE("format_double keeps full precision") {
    CHECK(std::stod(format_double(0.1)) == 0.1);
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(2.0) == "2");
  }

  TEST_CASE("runs csv round trip") {
    RunRecord a;
    a.algorithm = "lexq";
    a.env = "random_6x2";
    a.seed = 123456789012345ULL;
    a.config_digest = "0123456789abcdef";
    a.m = 2;
    a.states = 6;
    a.actions = 2;
    a.episodes_to_convergence = 57;
    a.j = VectorXd(2);
    a.j << 1.0 / 3.0, -2.5;
    RunRecord b = a;
    b.seed = 2;
    b.episodes_to_convergence.reset();
    b.wall_seconds = 0.125;
    const std::string text = runs_csv({a, b});
    CHECK(text.rfind("algorithm,env,seed,config_digest,m,states,actions,episodes_to_convergence,wall_seconds", 0) == 0);
    const std::vector<RunRecord> back = read_runs_csv(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == a);
    CHECK(back[1] == b);
    CHECK_THROWS_AS(read_runs_csv("nonsense\n"), FormatError);
  }

  TEST_CASE("series csv lists one row per episode") {
    MetricsSeries s(2);
    s.add_episode(3, VectorXd::Ones(2), 3);
    s.add_episode(4, VectorXd::Zero(2), 7);
    const std::string csv = series_csv(s);
    std::istringstream in(csv);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 3);
    CHECK(csv.rfind("episode,length", 0) == 0);
  }

  TEST_CASE("plot aggregation: mean and standard error per group") {
    RunRecord r;
    r.algorithm = "lexq";
    r.env = "e";
    r.config_digest = "d";
    r.m = 1;
    r.states = 4;
    r.actions = 2;
    r.j = VectorXd::Zero(1);
    std::vector<RunRecord> runs;
    for (int k : {10, 20, 30}) {
      r.episodes_to_convergence = k;
      runs.push_back(r);
    }
    r.episodes_to_convergence.reset();
    runs.push_back(r);
    const std::string out = aggregate_plot_csv(runs_csv(runs));
    CHECK(out.rfind("algorithm,m,runs,converged,mean_episodes,se_episodes\n", 0) == 0);
    // Oracle: mean 20, sample sd 10, se 10/sqrt(3).
    std::istringstream in(out);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(row.rfind("lexq,1,4,3,20,", 0) == 0);
    const double se = std::stod(row.substr(row.rfind(',') + 1));
    CHECK(se == doctest::Approx(10.0 / std::sqrt(3.0)).epsilon(1e-12));

    const std::string safety = aggregate_plot_csv(safety_csv({{"lexq", 0, 1.0, 10.0, 1.0}, {"lexq", 1, 3.0, 30.0, 0.0}}));
    CHECK(safety.find("lexq,2,2,1,20,10,0.5,0.5") != std::string::npos);
  }

  TEST_CASE("evaluate_rollouts on a deterministic chain") {
    Momdp m = make_momdp(3, 1, 1);
    m.transition(m.row(0, 0), 1) = 1.0;
    m.transition(m.row(1, 0), 2) = 1.0;
    m.transition(m.row(2, 0), 2) = 1.0;
    m.reward_mean[0](m.row(0, 0), 1) = 0.5;
    m.reward_mean[0](m.row(1, 0), 2) = 1.0;
    m.terminal[2] = true;
    m.initial.setZero();
    m.initial(0) = 1.0;
    Rng rng(1);
    const RolloutSummary r = evaluate_rollouts(m, PolicyTable::Ones(3, 1), 10, rng);
    CHECK(r.mean_return(0) == doctest::Approx(1.5));
    CHECK(r.terminal_rate == 1.0);
  }

  TEST_CASE("evaluate_rollouts honours the horizon") {
    const Momdp m = tie_instance(7);
    Rng rng(2);
    PolicyTable pi(1, 2);
    pi << 0.0, 1.0;
    const RolloutSummary r = evaluate_rollouts(m, pi, 5, rng);
    CHECK(r.mean_return(0) == doctest::Approx(7.0));
    CHECK(r.mean_return(1) == doctest::Approx(7.0));
    CHECK(r.terminal_rate == 0.0);
  }

  TEST_CASE("scaling experiment is independent of the thread count") {
    const ScalingExperimentConfig c = small_scaling();
    const auto one = run_scaling_experiment(c, {1, false, "x"});
    const auto two = run_scaling_experiment(c, {2, false, "x"});
    REQUIRE(one.size() == 4);
    REQUIRE(two.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(one[k].record == two[k].record);
      CHECK(series_csv(one[k].series) == series_csv(two[k].series));
      CHECK(one[k].record.error.empty());
    }
    CHECK(one[0].record.m == 1);
    CHECK(one[3].record.m == 2);
  }

  TEST_CASE("train_policy returns stochastic tables") {
    const Momdp m = random_instance(3, 4, 3, 2);
    VblrlConfig vb;
    vb.max_steps = 2000;
    PblrlConfig pb;
    pb.max_steps = 2000;
    for (AlgorithmKind k : {AlgorithmKind::LexQ, AlgorithmKind::LA2C}) {
      const TrainedPolicy t = train_policy(m, k, vb, pb, 9);
      CHECK(t.steps == 2000);
      CHECK(((t.policy.rowwise().sum().array() - 1.0).abs() < 1e-12).all());
    }
  }

  TEST_CASE("write_metrics_csv writes runs and one series per successful run") {
    const char* root = std::getenv("LEXRL_TEST_TMP");
    const std::filesystem::path dir =
        std::filesystem::path(root ? root : std::filesystem::temp_directory_path().string()) / "harness_write";
    std::filesystem::remove_all(dir);
    CHECK(write_metrics_csv({}, dir.string()).size() == 1);
    CHECK(read_text_file((dir / "runs.csv").string()).find('\n') == read_text_file((dir / "runs.csv").string()).size() - 1);

    RunOutput ok;
    ok.record.algorithm = "lexq";
    ok.record.config_digest = "abc";
    ok.record.seed = 4;
    ok.record.m = 2;
    ok.record.j = VectorXd::Zero(2);
    ok.series = MetricsSeries(2);
    for (int e = 0; e < 3; ++e) ok.series.add_episode(2, VectorXd::Ones(2), 2 * (e + 1));
    RunOutput failed = ok;
    failed.record.seed = 5;
    failed.record.error = "boom";
    const auto paths = write_metrics_csv({ok, failed}, dir.string());
    REQUIRE(paths.size() == 2);
    const std::string series = read_text_file((dir / "series_abc_4.csv").string());
    CHECK(series.rfind("episode,length,ret_1,ret_2,global_step\n", 0) == 0);
    CHECK(std::count(series.begin(), series.end(), '\n') == 4);
  }

  TEST_CASE("write_text_file reports the path on failure") {
    CHECK_THROWS_WITH(write_text_file("/nonexistent_dir_lexrl/x.csv", "a"),
                      doctest::Contains("/nonexistent_dir_lexrl/x.csv"));
  }
}
