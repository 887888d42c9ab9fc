#include "lexrl/cli.hpp"

#include "lexrl/config.hpp"
#include "lexrl/harness.hpp"
#include "lexrl/lexoracle.hpp"
#include "lexrl/momdp.hpp"
#include "lexrl/policy_based.hpp"
#include "lexrl/value_based.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <sstream>

namespace lexrl {

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  Index threads = 1;
  bool quiet = false;
  bool timing = false;
};

class Session {
public:
  Session(const GlobalOptions& global, std::ostream& out) : global_(global), out_(out) {}

  void wrote(const std::string& path) const {
    if (!global_.quiet) out_ << "wrote " << path << "\n";
  }
  void say(const std::string& line) const {
    if (!global_.quiet) out_ << line << "\n";
  }
  void write(const std::string& path, const std::string& text) const {
    write_text_file(path, text);
    wrote(path);
  }

  const GlobalOptions& global() const { return global_; }

private:
  const GlobalOptions& global_;
  std::ostream& out_;
};

ConfigDocument load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return ConfigDocument::parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string env_name(const std::string& momdp_path) { return fs::path(momdp_path).stem().string(); }

std::string policy_table_csv(const PolicyTable& policy) {
  std::string out = "state,action,probability\n";
  for (Index s = 0; s < policy.rows(); ++s)
    for (Index a = 0; a < policy.cols(); ++a)
      out += std::to_string(s) + "," + std::to_string(a) + "," + format_double(policy(s, a)) + "\n";
  return out;
}

PolicyTable read_policy_csv(const std::string& text, Index num_states, Index num_actions) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "state,action,probability")
    throw FormatError("policy CSV: expected header state,action,probability");
  PolicyTable policy = PolicyTable::Zero(num_states, num_actions);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    long long s = -1, a = -1;
    double p = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> s >> c1 >> a >> c2 >> p) || c1 != ',' || c2 != ',' || s < 0 || s >= num_states || a < 0 ||
        a >= num_actions)
      throw FormatError("policy CSV line " + std::to_string(line_no) + ": malformed row '" + line + "'");
    policy(s, a) = p;
  }
  return policy;
}

RunRecord base_record(const std::string& algorithm, const std::string& env, std::uint64_t seed,
                      const std::string& config_text, const Momdp& momdp) {
  RunRecord r;
  r.algorithm = algorithm;
  r.env = env;
  r.seed = seed;
  r.config_digest = config_digest(config_text);
  r.m = momdp.num_objectives;
  r.states = momdp.num_states;
  r.actions = momdp.num_actions;
  return r;
}

void write_run(const Session& session, const std::string& dir, RunOutput run) {
  for (const std::string& path : write_metrics_csv({std::move(run)}, dir)) session.wrote(path);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const char* rule_name(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::Sarsa: return "sarsa";
    case UpdateRule::ExpectedSarsa: return "expected_sarsa";
    case UpdateRule::LexDoubleQ: return "double_q";
    default: return "lexq";
  }
}

void cmd_gen(const Session& session, const std::string& config_path, const std::string& out_path) {
  GenMomdpConfig config = parse_gen_config(load_config(config_path));
  if (session.global().seed) {
    config.random.seed = *session.global().seed;
    config.gridnav.seed = *session.global().seed;
  }
  const Momdp momdp = config.kind == GenMomdpConfig::Kind::GridNav ? build_gridnav(config.gridnav)
                                                                   : generate_random_momdp(config.random);
  save_momdp(momdp, out_path);
  session.wrote(out_path);
  session.write(out_path + ".effective_config", serialize(config));
}

void cmd_oracle(const Session& session, const std::string& momdp_path, const std::string& dir, double tie_tol) {
  const Momdp momdp = load_momdp(momdp_path);
  const LexSolution sol = lex_value_iteration(momdp, tie_tol);
  make_dir(dir);
  session.write(join(dir, "lex_q.csv"), lex_solution_csv(sol));
  session.write(join(dir, "summary.json"), lex_solution_summary(sol));
  std::string actions;
  for (Index a : sol.policy) actions += (actions.empty() ? "" : " ") + ("a" + std::to_string(a + 1));
  session.say("lex-optimal actions by state: " + actions);
}

void cmd_train_vb(const Session& session, const std::string& config_path, const std::string& momdp_path,
                  const std::string& dir) {
  VblrlConfig config = parse_vb_config(load_config(config_path));
  if (session.global().seed) config.seed = *session.global().seed;
  const Momdp momdp = load_momdp(momdp_path);
  make_dir(dir);
  const std::string text = serialize(config);
  session.write(join(dir, "effective_config"), text);

  Rng rng(config.seed);
  const auto start = std::chrono::steady_clock::now();
  VblrlResult result = run_vblrl(momdp, config, rng);
  const double wall = seconds_since(start);

  const PolicyTable policy = uniform_over(result.greedy_sets, momdp.num_actions);
  session.write(join(dir, "q_tables.csv"), qtables_csv(result.q));
  session.write(join(dir, "policy.csv"), policy_table_csv(policy));

  RunOutput run;
  run.record = base_record(rule_name(config.rule), env_name(momdp_path), config.seed, text, momdp);
  run.record.episodes_to_convergence = result.converged_episode;
  if (session.global().timing) run.record.wall_seconds = wall;
  run.record.j = evaluate_policy_exact(momdp, policy);
  run.series = std::move(result.series);
  write_run(session, dir, std::move(run));
}

void cmd_train_pb(const Session& session, const std::string& config_path, const std::string& momdp_path,
                  const std::string& dir) {
  PblrlConfig config = parse_pb_config(load_config(config_path));
  if (session.global().seed) config.seed = *session.global().seed;
  const Momdp momdp = load_momdp(momdp_path);
  make_dir(dir);
  const std::string text = serialize(config);
  session.write(join(dir, "effective_config"), text);

  Rng rng(config.seed);
  const auto start = std::chrono::steady_clock::now();
  PblrlResult result = run_pblrl(momdp, config, rng, true);
  const double wall = seconds_since(start);

  session.write(join(dir, "policy.csv"), policy_csv(result.params));
  session.write(join(dir, "trace.csv"), trace_csv(result.trace));

  RunOutput run;
  run.record = base_record(config.objective == PolicyObjective::PPO ? "lppo" : "la2c", env_name(momdp_path),
                           config.seed, text, momdp);
  run.record.episodes_to_convergence = result.converged_episode;
  if (session.global().timing) run.record.wall_seconds = wall;
  run.record.j = evaluate_policy_exact(momdp, policy_table(result.params));
  run.series = std::move(result.series);
  write_run(session, dir, std::move(run));
}

void report_failures(const Session& session, const std::string& dir, const std::vector<RunRecord>& records) {
  std::size_t failed = 0;
  for (const RunRecord& r : records) failed += r.error.empty() ? 0 : 1;
  if (failed == 0) return;
  session.write(join(dir, "failures.csv"), failures_csv(records));
  session.say(std::to_string(failed) + " run(s) failed, see failures.csv");
}

void cmd_scaling(const Session& session, const std::string& config_path, const std::string& dir) {
  ScalingExperimentConfig config = parse_scaling_config(load_config(config_path));
  if (session.global().seed) config.seed = *session.global().seed;
  make_dir(dir);
  ExperimentOptions options;
  options.threads = session.global().threads;
  options.timing = session.global().timing;
  options.config_text = serialize(config);
  session.write(join(dir, "effective_config"), options.config_text);

  const std::vector<RunOutput> runs = run_scaling_experiment(config, options);
  for (const std::string& path : write_metrics_csv(runs, dir)) session.wrote(path);
  std::vector<RunRecord> records;
  for (const RunOutput& r : runs) records.push_back(r.record);
  report_failures(session, dir, records);
}

void cmd_safety(const Session& session, const std::string& config_path, const std::string& dir) {
  SafetyExperimentConfig config = parse_safety_config(load_config(config_path));
  if (session.global().seed) config.seed = *session.global().seed;
  make_dir(dir);
  ExperimentOptions options;
  options.threads = session.global().threads;
  options.timing = session.global().timing;
  options.config_text = serialize(config);
  session.write(join(dir, "effective_config"), options.config_text);

  const SafetyOutput result = run_safety_experiment(config, options);
  for (const std::string& path : write_metrics_csv(result.runs, dir)) session.wrote(path);
  session.write(join(dir, "safety.csv"), safety_csv(result.evaluations));
  std::vector<RunRecord> records;
  for (const RunOutput& r : result.runs) records.push_back(r.record);
  report_failures(session, dir, records);
}

void cmd_plot(const Session& session, const std::string& runs_path, const std::string& out_path) {
  session.write(out_path, aggregate_plot_csv(read_text_file(runs_path)));
}

// Checks a trained policy against the oracle: per-state support inside
// Delta_{s,m}, and the J gap to the lex optimum.
void cmd_compare(std::ostream& out, const std::string& momdp_path,
                 const std::string& policy_path, double tie_tol) {
  const Momdp momdp = load_momdp(momdp_path);
  const LexSolution sol = lex_value_iteration(momdp, tie_tol);
  const PolicyTable policy = read_policy_csv(read_text_file(policy_path), momdp.num_states, momdp.num_actions);
  const auto& last = sol.action_sets.back();
  Index matched = 0;
  for (Index s = 0; s < momdp.num_states; ++s) {
    bool inside = true;
    for (Index a = 0; a < momdp.num_actions; ++a)
      if (policy(s, a) > 1e-9 && !last[static_cast<std::size_t>(s)].contains(a)) inside = false;
    matched += inside ? 1 : 0;
  }
  const VectorXd j = evaluate_policy_exact(momdp, policy);
  std::ostringstream report;
  report << "states_matching " << matched << "/" << momdp.num_states << "\n";
  for (Index i = 0; i < j.size(); ++i)
    report << "objective " << (i + 1) << " J_policy " << format_double(j(i)) << " J_oracle "
           << format_double(sol.j_vector(i)) << " difference " << format_double(sol.j_vector(i) - j(i)) << "\n";
  out << report.str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lexicographic multi-objective reinforcement learning toolkit", "lexrl"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Override the master seed of the config");
  app.add_option("--threads", global.threads, "Worker threads for experiments")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", global.quiet, "Print nothing on success");
  app.add_flag("--timing", global.timing, "Record wall-clock seconds in runs.csv");

  std::string config_path, momdp_path, out_path, runs_path, policy_path;
  double tie_tol = 1e-9;

  auto* gen = app.add_subcommand("gen-momdp", "Generate a random or GridNav MOMDP");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_path, "Output MOMDP file")->required();

  auto* oracle = app.add_subcommand("oracle", "Solve a MOMDP exactly");
  oracle->add_option("--momdp", momdp_path)->required();
  oracle->add_option("--out", out_path, "Output directory")->required();
  oracle->add_option("--tie-tol", tie_tol)->check(CLI::PositiveNumber);

  auto* train_vb = app.add_subcommand("train-vb", "Value-based lexicographic learner");
  train_vb->add_option("--config", config_path)->required();
  train_vb->add_option("--momdp", momdp_path)->required();
  train_vb->add_option("--out", out_path, "Output directory")->required();

  auto* train_pb = app.add_subcommand("train-pb", "Policy-based lexicographic learner");
  train_pb->add_option("--config", config_path)->required();
  train_pb->add_option("--momdp", momdp_path)->required();
  train_pb->add_option("--out", out_path, "Output directory")->required();

  auto* scaling = app.add_subcommand("scaling", "Objective-count scaling study on random MOMDPs");
  scaling->add_option("--config", config_path)->required();
  scaling->add_option("--out", out_path, "Output directory")->required();

  auto* safety = app.add_subcommand("safety", "GridNav safety study");
  safety->add_option("--config", config_path)->required();
  safety->add_option("--out", out_path, "Output directory")->required();

  auto* plot = app.add_subcommand("plot", "Aggregate runs.csv or safety.csv to mean and standard error");
  plot->add_option("--runs", runs_path)->required();
  plot->add_option("--out", out_path, "Output CSV")->required();

  auto* compare = app.add_subcommand("compare", "Compare a policy CSV with the oracle");
  compare->add_option("--momdp", momdp_path)->required();
  compare->add_option("--policy", policy_path)->required();
  compare->add_option("--tie-tol", tie_tol)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    bool known = false;
    for (const CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; }))
      known = known || (argc > 1 && sub->get_name() == argv[1]);
    if (argc > 1 && argv[1][0] != '-' && !known)
      err << "lexrl: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    else
      err << "lexrl: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const Session session(global, out);
  try {
    if (gen->parsed()) cmd_gen(session, config_path, out_path);
    else if (oracle->parsed()) cmd_oracle(session, momdp_path, out_path, tie_tol);
    else if (train_vb->parsed()) cmd_train_vb(session, config_path, momdp_path, out_path);
    else if (train_pb->parsed()) cmd_train_pb(session, config_path, momdp_path, out_path);
    else if (scaling->parsed()) cmd_scaling(session, config_path, out_path);
    else if (safety->parsed()) cmd_safety(session, config_path, out_path);
    else if (plot->parsed()) cmd_plot(session, runs_path, out_path);
    else if (compare->parsed()) cmd_compare(out, momdp_path, policy_path, tie_tol);
  } catch (const ConfigError& e) {
    err << "lexrl: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "lexrl: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace lexrl
