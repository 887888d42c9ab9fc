#pragma once

#include "lexrl/lexoracle.hpp"
#include "lexrl/metrics.hpp"
#include "lexrl/momdp.hpp"
#include "lexrl/policy_based.hpp"
#include "lexrl/value_based.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lexrl {

enum class AlgorithmKind { LexQ, Sarsa, ExpectedSarsa, LexDoubleQ, LA2C, LPPO, Baseline };

std::string algorithm_name(AlgorithmKind kind);
/// Accepts lexq, sarsa, expected_sarsa, double_q, la2c, lppo, baseline.
AlgorithmKind parse_algorithm(const std::string& name);
bool is_value_based(AlgorithmKind kind);

struct TrainedPolicy {
  PolicyTable policy;  // greedy sets made uniform (value-based) or the softmax table
  MetricsSeries series;
  std::optional<std::int64_t> converged_episode;
  std::int64_t steps = 0;
};

/// Trains one learner. The baseline is Lex Q-learning on whatever MOMDP it is
/// given; callers pass the reward-only projection.
TrainedPolicy train_policy(const Momdp& momdp, AlgorithmKind kind, const VblrlConfig& vb, const PblrlConfig& pb,
                           std::uint64_t seed);

struct RunRecord {
  std::string algorithm;
  std::string env;
  std::uint64_t seed = 0;
  std::string config_digest;
  Index m = 0;
  Index states = 0;
  Index actions = 0;
  std::optional<std::int64_t> episodes_to_convergence;
  std::optional<double> wall_seconds;  // only with timing enabled
  VectorXd j;                          // exact, from evaluate_policy_exact
  std::string error;                   // non-empty when the run failed

  friend bool operator==(const RunRecord& a, const RunRecord& b);
};

struct ScalingExperimentConfig {
  std::vector<Index> states{64};
  Index actions = 4;
  std::vector<Index> objectives{1, 2, 4};
  Index momdps_per_cell = 30;
  AlgorithmKind algorithm = AlgorithmKind::LexQ;
  RandomMomdpConfig generator;  // shape and seed fields are overridden per run
  VblrlConfig vb = scaling_vb_defaults();
  PblrlConfig pb;
  std::uint64_t seed = 0;

  /// Tabular hyperparameters of the random-MOMDP study: alpha = 0.01,
  /// eps = 0.05, slack 0.01 * max Q, stop at the convergence episode.
  static VblrlConfig scaling_vb_defaults();
};

struct SafetyExperimentConfig {
  GridNavConfig env;
  std::vector<AlgorithmKind> algorithms{AlgorithmKind::LexQ, AlgorithmKind::LA2C, AlgorithmKind::LPPO,
                                        AlgorithmKind::Baseline};
  Index seeds = 10;
  Index eval_episodes = 100;
  VblrlConfig vb = safety_vb_defaults();
  PblrlConfig pb = safety_pb_defaults();
  std::uint64_t seed = 0;

  /// Constant slack 0.3, 5e5 steps. The policy-gradient learners get 1e6 steps
  /// and a KL coefficient of 3.
  static VblrlConfig safety_vb_defaults();
  static PblrlConfig safety_pb_defaults();
};

struct RunOutput {
  RunRecord record;
  MetricsSeries series;
};

struct ExperimentOptions {
  Index threads = 1;
  bool timing = false;
  std::string config_text;  // serialized effective config, hashed into the digests
};

/// One run per (states, m, k). MOMDP and learner seeds are derived from the
/// master seed, so results do not depend on the thread count. Output is sorted
/// by (states, m, seed). Failing runs carry their message in `error`.
std::vector<RunOutput> run_scaling_experiment(const ScalingExperimentConfig& config,
                                              const ExperimentOptions& options = {});

struct SafetyRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  double mean_cost = 0.0;
  double mean_reward = 0.0;
  double goal_rate = 0.0;
};

struct SafetyOutput {
  std::vector<RunOutput> runs;
  std::vector<SafetyRecord> evaluations;
};

/// Trains every algorithm on one GridNav layout with `seeds` learner seeds and
/// evaluates each final policy over fresh episodes. Objective order is
/// (-cost, reward); the baseline sees the reward only.
SafetyOutput run_safety_experiment(const SafetyExperimentConfig& config, const ExperimentOptions& options = {});

struct RolloutSummary {
  VectorXd mean_return;  // undiscounted, per objective
  double terminal_rate = 0.0;
};

/// Monte Carlo rollouts of a fixed policy until a terminal state or the horizon.
RolloutSummary evaluate_rollouts(const Momdp& momdp, const PolicyTable& policy, Index episodes, Rng& rng);

/// Writes runs.csv and series_<digest>_<seed>.csv into `dir` and returns the
/// paths written. Throws std::runtime_error naming the path on I/O failure.
std::vector<std::string> write_metrics_csv(const std::vector<RunOutput>& runs, const std::string& dir);

std::string runs_csv(const std::vector<RunRecord>& records);
std::string series_csv(const MetricsSeries& series);
std::string safety_csv(const std::vector<SafetyRecord>& records);
std::string failures_csv(const std::vector<RunRecord>& records);

/// Parses runs.csv text back into records (error messages are not stored).
std::vector<RunRecord> read_runs_csv(const std::string& text);

/// Mean and standard error per group, from runs.csv or safety.csv text.
/// runs.csv: algorithm,m,runs,converged,mean_episodes,se_episodes.
/// safety.csv: algorithm,seeds,mean_cost,se_cost,mean_reward,se_reward,mean_goal_rate,se_goal_rate.
std::string aggregate_plot_csv(const std::string& text);

/// Writes `contents` to `path`, throwing std::runtime_error with the path on failure.
void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

/// FNV-1a 64 of the text, as 16 lowercase hex digits.
std::string config_digest(const std::string& text);

/// Formats with 17 significant digits.
std::string format_double(double v);

}  // namespace lexrl
