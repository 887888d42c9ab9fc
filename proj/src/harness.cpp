#include "lexrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lexrl {

namespace {

struct NamedAlgorithm {
  AlgorithmKind kind;
  const char* name;
};

constexpr NamedAlgorithm kAlgorithms[] = {
    {AlgorithmKind::LexQ, "lexq"},         {AlgorithmKind::Sarsa, "sarsa"},
    {AlgorithmKind::ExpectedSarsa, "expected_sarsa"}, {AlgorithmKind::LexDoubleQ, "double_q"},
    {AlgorithmKind::LA2C, "la2c"},         {AlgorithmKind::LPPO, "lppo"},
    {AlgorithmKind::Baseline, "baseline"},
};

/// Runs job(i) for i in [0, n) on `threads` workers. Each job writes its own slot.
template <typename Job>
void parallel_for(std::size_t n, Index threads, Job&& job) {
  const auto workers = static_cast<std::size_t>(std::clamp<Index>(threads, 1, 256));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  for (std::thread& t : pool) t.join();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(std::string("bad ") + what + " value '" + s + "'");
}

std::int64_t parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(std::string("bad ") + what + " value '" + s + "'");
}

std::uint64_t parse_uint(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used == s.size() && (s.empty() || s[0] != '-')) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(std::string("bad ") + what + " value '" + s + "'");
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return out;
}

}  // namespace

std::string algorithm_name(AlgorithmKind kind) {
  for (const auto& a : kAlgorithms)
    if (a.kind == kind) return a.name;
  return "unknown";
}

AlgorithmKind parse_algorithm(const std::string& name) {
  for (const auto& a : kAlgorithms)
    if (name == a.name) return a.kind;
  throw ContractError("unknown algorithm '" + name +
                      "' (expected lexq, sarsa, expected_sarsa, double_q, la2c, lppo or baseline)");
}

bool is_value_based(AlgorithmKind kind) {
  return kind != AlgorithmKind::LA2C && kind != AlgorithmKind::LPPO;
}

TrainedPolicy train_policy(const Momdp& momdp, AlgorithmKind kind, const VblrlConfig& vb, const PblrlConfig& pb,
                           std::uint64_t seed) {
  Rng rng(seed);
  TrainedPolicy out;
  if (is_value_based(kind)) {
    VblrlConfig c = vb;
    switch (kind) {
      case AlgorithmKind::Sarsa: c.rule = UpdateRule::Sarsa; break;
      case AlgorithmKind::ExpectedSarsa: c.rule = UpdateRule::ExpectedSarsa; break;
      case AlgorithmKind::LexDoubleQ: c.rule = UpdateRule::LexDoubleQ; break;
      default: c.rule = UpdateRule::LexQ; break;
    }
    VblrlResult r = run_vblrl(momdp, c, rng);
    out.policy = uniform_over(r.greedy_sets, momdp.num_actions);
    out.series = std::move(r.series);
    out.converged_episode = r.converged_episode;
    out.steps = r.steps;
  } else {
    PblrlConfig c = pb;
    c.objective = kind == AlgorithmKind::LPPO ? PolicyObjective::PPO : PolicyObjective::A2C;
    PblrlResult r = run_pblrl(momdp, c, rng);
    out.policy = policy_table(r.params);
    out.series = std::move(r.series);
    out.converged_episode = r.converged_episode;
    out.steps = r.steps;
  }
  return out;
}

bool operator==(const RunRecord& a, const RunRecord& b) {
  return a.algorithm == b.algorithm && a.env == b.env && a.seed == b.seed && a.config_digest == b.config_digest &&
         a.m == b.m && a.states == b.states && a.actions == b.actions &&
         a.episodes_to_convergence == b.episodes_to_convergence && a.wall_seconds == b.wall_seconds &&
         a.j.size() == b.j.size() && a.j == b.j && a.error == b.error;
}

VblrlConfig ScalingExperimentConfig::scaling_vb_defaults() {
  VblrlConfig c;
  c.rule = UpdateRule::LexQ;
  c.bandit_tolerance = ToleranceSpec::proportional(0.01);
  c.update_tolerance = ToleranceSpec::proportional(0.01);
  c.step_size = StepSizeSchedule::constant(0.01);
  c.exploration = ExplorationSchedule::constant(0.05);
  c.max_steps = 500000;
  c.stop_on_convergence = true;
  return c;
}

VblrlConfig SafetyExperimentConfig::safety_vb_defaults() {
  VblrlConfig c;
  c.rule = UpdateRule::LexQ;
  c.bandit_tolerance = ToleranceSpec::constant(0.3);
  c.update_tolerance = ToleranceSpec::constant(0.3);
  c.max_steps = 500000;
  return c;
}

PblrlConfig SafetyExperimentConfig::safety_pb_defaults() {
  PblrlConfig c;
  c.max_steps = 1000000;
  c.kappa = 3.0;
  return c;
}

namespace {

RunOutput execute_run(const Momdp& train_on, const Momdp& evaluate_on, AlgorithmKind kind, const VblrlConfig& vb,
                      const PblrlConfig& pb, std::uint64_t learner_seed, RunRecord record, bool timing,
                      PolicyTable* policy_out = nullptr) {
  RunOutput out;
  try {
    const auto start = std::chrono::steady_clock::now();
    TrainedPolicy trained = train_policy(train_on, kind, vb, pb, learner_seed);
    if (timing)
      record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    record.episodes_to_convergence = trained.converged_episode;
    record.j = evaluate_policy_exact(evaluate_on, trained.policy);
    out.series = std::move(trained.series);
    if (policy_out) *policy_out = std::move(trained.policy);
  } catch (const std::exception& e) {
    record.error = e.what();
    record.j = VectorXd();
  }
  out.record = std::move(record);
  return out;
}

}  // namespace

std::vector<RunOutput> run_scaling_experiment(const ScalingExperimentConfig& config, const ExperimentOptions& options) {
  if (config.momdps_per_cell < 1) throw ContractError("scaling: momdps_per_cell must be >= 1");
  if (config.algorithm == AlgorithmKind::Baseline)
    throw ContractError("scaling: the reward-only baseline is only defined for the safety study");
  struct Job {
    Index states;
    Index m;
    Index k;
  };
  std::vector<Job> jobs;
  for (Index states : config.states)
    for (Index m : config.objectives)
      for (Index k = 0; k < config.momdps_per_cell; ++k) jobs.push_back({states, m, k});

  const std::string name = algorithm_name(config.algorithm);
  std::vector<RunOutput> results(jobs.size());
  parallel_for(jobs.size(), options.threads, [&](std::size_t idx) {
    const Job& job = jobs[idx];
    const std::uint64_t momdp_seed = derive_seed(
        config.seed, (static_cast<std::uint64_t>(job.states) << 16) | static_cast<std::uint64_t>(job.m),
        static_cast<std::uint64_t>(job.k));
    RunRecord record;
    record.algorithm = name;
    record.env = "random-" + std::to_string(job.states) + "x" + std::to_string(config.actions);
    record.seed = momdp_seed;
    record.m = job.m;
    record.states = job.states;
    record.actions = config.actions;
    record.config_digest = config_digest(options.config_text + "\nrun=" + name + "," + record.env + ",m" +
                                         std::to_string(job.m) + "\n");
    try {
      RandomMomdpConfig gen = config.generator;
      gen.num_states = job.states;
      gen.num_actions = config.actions;
      gen.num_objectives = job.m;
      gen.seed = momdp_seed;
      const Momdp momdp = generate_random_momdp(gen);
      results[idx] = execute_run(momdp, momdp, config.algorithm, config.vb, config.pb, derive_seed(momdp_seed, 1),
                                 std::move(record), options.timing);
    } catch (const std::exception& e) {
      record.error = e.what();
      results[idx].record = std::move(record);
    }
  });

  std::stable_sort(results.begin(), results.end(), [](const RunOutput& a, const RunOutput& b) {
    if (a.record.states != b.record.states) return a.record.states < b.record.states;
    if (a.record.m != b.record.m) return a.record.m < b.record.m;
    return a.record.seed < b.record.seed;
  });
  return results;
}

RolloutSummary evaluate_rollouts(const Momdp& momdp, const PolicyTable& policy, Index episodes, Rng& rng) {
  if (episodes < 1) throw ContractError("evaluate_rollouts: episodes must be >= 1");
  if (policy.rows() != momdp.num_states || policy.cols() != momdp.num_actions)
    throw ContractError("evaluate_rollouts: policy shape does not match the momdp");
  const std::int64_t horizon = momdp.episode_horizon.value_or(10000);
  RolloutSummary out{VectorXd::Zero(momdp.num_objectives), 0.0};
  Index terminal = 0;
  for (Index ep = 0; ep < episodes; ++ep) {
    Index s = sample_initial(momdp, rng);
    for (std::int64_t k = 0; k < horizon; ++k) {
      const double u = uniform01(rng);
      Index a = momdp.num_actions - 1;
      double acc = 0.0;
      for (Index b = 0; b + 1 < momdp.num_actions; ++b) {
        acc += policy(s, b);
        if (u < acc) {
          a = b;
          break;
        }
      }
      const TransitionRecord rec = sample_transition(momdp, s, a, rng, k);
      out.mean_return += rec.rewards;
      s = rec.next_state;
      if (rec.terminal) {
        ++terminal;
        break;
      }
    }
  }
  out.mean_return /= static_cast<double>(episodes);
  out.terminal_rate = static_cast<double>(terminal) / static_cast<double>(episodes);
  return out;
}

SafetyOutput run_safety_experiment(const SafetyExperimentConfig& config, const ExperimentOptions& options) {
  if (config.seeds < 1) throw ContractError("safety: seeds must be >= 1");
  if (config.algorithms.empty()) throw ContractError("safety: no algorithms selected");
  const GridNavLayout layout = generate_gridnav_layout(config.env);
  const Momdp env = build_gridnav(config.env, layout);
  const Momdp reward_only = select_objectives(env, {1});
  const std::string env_name = "gridnav-" + std::to_string(config.env.grid_side);

  const std::size_t n = config.algorithms.size() * static_cast<std::size_t>(config.seeds);
  std::vector<RunOutput> runs(n);
  std::vector<SafetyRecord> evals(n);
  parallel_for(n, options.threads, [&](std::size_t idx) {
    const AlgorithmKind kind = config.algorithms[idx / static_cast<std::size_t>(config.seeds)];
    const auto k = static_cast<std::uint64_t>(idx % static_cast<std::size_t>(config.seeds));
    const std::string name = algorithm_name(kind);
    const std::uint64_t learner_seed = derive_seed(config.seed, k);
    RunRecord record;
    record.algorithm = name;
    record.env = env_name;
    record.seed = learner_seed;
    record.m = env.num_objectives;
    record.states = env.num_states;
    record.actions = env.num_actions;
    record.config_digest = config_digest(options.config_text + "\nrun=" + name + "," + env_name + "\n");

    PolicyTable policy;
    const Momdp& train_on = kind == AlgorithmKind::Baseline ? reward_only : env;
    runs[idx] = execute_run(train_on, env, kind, config.vb, config.pb, learner_seed, std::move(record),
                            options.timing, &policy);
    SafetyRecord& eval = evals[idx];
    eval.algorithm = name;
    eval.seed = learner_seed;
    if (runs[idx].record.error.empty()) {
      Rng rng(derive_seed(config.seed, k, 2));
      const RolloutSummary summary = evaluate_rollouts(env, policy, config.eval_episodes, rng);
      eval.mean_cost = -summary.mean_return(0);
      eval.mean_reward = summary.mean_return(1);
      eval.goal_rate = summary.terminal_rate;
    } else {
      eval.mean_cost = eval.mean_reward = eval.goal_rate = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return {std::move(runs), std::move(evals)};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string config_digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string runs_csv(const std::vector<RunRecord>& records) {
  Index width = 0;
  for (const RunRecord& r : records) width = std::max(width, r.m);
  std::string out = "algorithm,env,seed,config_digest,m,states,actions,episodes_to_convergence,wall_seconds";
  for (Index i = 1; i <= width; ++i) out += ",j_" + std::to_string(i);
  out += '\n';
  for (const RunRecord& r : records) {
    out += r.algorithm + ',' + r.env + ',' + std::to_string(r.seed) + ',' + r.config_digest + ',' +
           std::to_string(r.m) + ',' + std::to_string(r.states) + ',' + std::to_string(r.actions) + ',';
    out += r.episodes_to_convergence ? std::to_string(*r.episodes_to_convergence) : "none";
    out += ',';
    if (r.wall_seconds) out += format_double(*r.wall_seconds);
    for (Index i = 0; i < width; ++i) {
      out += ',';
      if (i < r.j.size()) out += format_double(r.j(i));
    }
    out += '\n';
  }
  return out;
}

std::string series_csv(const MetricsSeries& series) {
  std::string out = "episode,length";
  for (Index i = 1; i <= series.num_objectives; ++i) out += ",ret_" + std::to_string(i);
  out += ",global_step\n";
  for (const EpisodeRecord& e : series.episodes) {
    out += std::to_string(e.episode) + ',' + std::to_string(e.length);
    for (Index i = 0; i < e.returns.size(); ++i) out += ',' + format_double(e.returns(i));
    out += ',' + std::to_string(e.global_step) + '\n';
  }
  return out;
}

std::string safety_csv(const std::vector<SafetyRecord>& records) {
  std::string out = "algorithm,seed,mean_cost,mean_reward,goal_rate\n";
  for (const SafetyRecord& r : records)
    out += r.algorithm + ',' + std::to_string(r.seed) + ',' + format_double(r.mean_cost) + ',' +
           format_double(r.mean_reward) + ',' + format_double(r.goal_rate) + '\n';
  return out;
}

std::string failures_csv(const std::vector<RunRecord>& records) {
  std::string out = "algorithm,env,seed,message\n";
  for (const RunRecord& r : records) {
    if (r.error.empty()) continue;
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out += r.algorithm + ',' + r.env + ',' + std::to_string(r.seed) + ',' + msg + '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> write_metrics_csv(const std::vector<RunOutput>& runs, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
  std::vector<std::string> paths;
  std::vector<RunRecord> records;
  for (const RunOutput& r : runs) records.push_back(r.record);
  const std::string runs_path = (std::filesystem::path(dir) / "runs.csv").string();
  write_text_file(runs_path, runs_csv(records));
  paths.push_back(runs_path);
  for (const RunOutput& r : runs) {
    if (!r.record.error.empty()) continue;
    const std::string path = (std::filesystem::path(dir) / ("series_" + r.record.config_digest + "_" +
                                                            std::to_string(r.record.seed) + ".csv"))
                                 .string();
    write_text_file(path, series_csv(r.series));
    paths.push_back(path);
  }
  return paths;
}

std::vector<RunRecord> read_runs_csv(const std::string& text) {
  const std::vector<std::string> lines = lines_of(text);
  if (lines.empty()) throw FormatError("runs.csv: missing header");
  const std::vector<std::string> header = split_line(lines[0]);
  if (header.size() < 9 || header[0] != "algorithm" || header[8] != "wall_seconds")
    throw FormatError("runs.csv: unexpected header");
  const std::size_t width = header.size() - 9;
  std::vector<RunRecord> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::vector<std::string> cells = split_line(lines[n]);
    if (cells.size() != header.size())
      throw FormatError("runs.csv line " + std::to_string(n + 1) + ": expected " + std::to_string(header.size()) +
                        " columns");
    RunRecord r;
    r.algorithm = cells[0];
    r.env = cells[1];
    r.seed = parse_uint(cells[2], "seed");
    r.config_digest = cells[3];
    r.m = parse_int(cells[4], "m");
    r.states = parse_int(cells[5], "states");
    r.actions = parse_int(cells[6], "actions");
    if (cells[7] != "none") r.episodes_to_convergence = parse_int(cells[7], "episodes_to_convergence");
    if (!cells[8].empty()) r.wall_seconds = parse_double(cells[8], "wall_seconds");
    std::vector<double> j;
    for (std::size_t i = 0; i < width; ++i) {
      if (cells[9 + i].empty()) break;
      j.push_back(parse_double(cells[9 + i], "j"));
    }
    r.j = Eigen::Map<const VectorXd>(j.data(), static_cast<Index>(j.size()));
    out.push_back(std::move(r));
  }
  return out;
}

std::string aggregate_plot_csv(const std::string& text) {
  const std::vector<std::string> lines = lines_of(text);
  if (lines.empty()) throw FormatError("plot: empty input");
  const std::vector<std::string> header = split_line(lines[0]);

  if (!header.empty() && header[0] == "algorithm" && header.size() >= 2 && header[1] == "seed") {
    // safety.csv
    std::map<std::string, std::vector<std::vector<double>>> groups;
    std::vector<std::string> order;
    for (std::size_t n = 1; n < lines.size(); ++n) {
      const std::vector<std::string> cells = split_line(lines[n]);
      if (cells.size() != 5) throw FormatError("safety.csv line " + std::to_string(n + 1) + ": expected 5 columns");
      if (!groups.count(cells[0])) order.push_back(cells[0]);
      auto& g = groups[cells[0]];
      g.resize(3);
      for (int c = 0; c < 3; ++c) g[c].push_back(parse_double(cells[2 + c], "metric"));
    }
    std::string out = "algorithm,seeds,mean_cost,se_cost,mean_reward,se_reward,mean_goal_rate,se_goal_rate\n";
    for (const std::string& name : order) {
      const auto& g = groups[name];
      out += name + ',' + std::to_string(g[0].size());
      for (int c = 0; c < 3; ++c) {
        const MeanSe ms = mean_se(g[c]);
        out += ',' + format_double(ms.mean) + ',' + format_double(ms.se);
      }
      out += '\n';
    }
    return out;
  }

  const std::vector<RunRecord> records = read_runs_csv(text);
  std::map<std::pair<std::string, Index>, std::pair<std::size_t, std::vector<double>>> groups;
  for (const RunRecord& r : records) {
    auto& g = groups[{r.algorithm, r.m}];
    ++g.first;
    if (r.episodes_to_convergence) g.second.push_back(static_cast<double>(*r.episodes_to_convergence));
  }
  std::string out = "algorithm,m,runs,converged,mean_episodes,se_episodes\n";
  for (const auto& [key, g] : groups) {
    out += key.first + ',' + std::to_string(key.second) + ',' + std::to_string(g.first) + ',' +
           std::to_string(g.second.size()) + ',';
    if (!g.second.empty()) {
      const MeanSe ms = mean_se(g.second);
      out += format_double(ms.mean) + ',' + format_double(ms.se);
    } else {
      out += ',';
    }
    out += '\n';
  }
  return out;
}

}  // namespace lexrl
