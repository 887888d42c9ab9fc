#include "lexrl/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <utility>

namespace lexrl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string where(const std::string& section, const std::string& key, int line) {
  return section + "." + key + " (line " + std::to_string(line) + ")";
}

template <typename E>
using NameTable = std::vector<std::pair<E, const char*>>;

const NameTable<UpdateRule> kRules = {{UpdateRule::LexQ, "lexq"},
                                      {UpdateRule::Sarsa, "sarsa"},
                                      {UpdateRule::ExpectedSarsa, "expected_sarsa"},
                                      {UpdateRule::LexDoubleQ, "double_q"}};
const NameTable<ToleranceSpec::Kind> kToleranceKinds = {{ToleranceSpec::Kind::Constant, "constant"},
                                                        {ToleranceSpec::Kind::Proportional, "proportional"},
                                                        {ToleranceSpec::Kind::Decaying, "decaying"}};
const NameTable<StepSizeSchedule::Kind> kStepKinds = {{StepSizeSchedule::Kind::Constant, "constant"},
                                                      {StepSizeSchedule::Kind::VisitPower, "visit_power"}};
const NameTable<ExplorationSchedule::Kind> kExplorationKinds = {
    {ExplorationSchedule::Kind::Constant, "constant"}, {ExplorationSchedule::Kind::VisitPower, "visit_power"}};
const NameTable<PolicyObjective> kObjectives = {{PolicyObjective::A2C, "a2c"}, {PolicyObjective::PPO, "ppo"}};
const NameTable<GenMomdpConfig::Kind> kGeneratorKinds = {{GenMomdpConfig::Kind::Random, "random"},
                                                         {GenMomdpConfig::Kind::GridNav, "gridnav"}};

template <typename E>
std::string names_of(const NameTable<E>& table) {
  std::string out;
  for (const auto& [value, name] : table) out += (out.empty() ? "" : ", ") + std::string(name);
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    out.push_back(trim(std::string_view(value).substr(start, comma == std::string::npos ? std::string::npos
                                                                                          : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Value conversions. Each returns false on malformed text.

bool convert(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || *end != '\0') return false;
  out = v;
  return true;
}

bool convert(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-') return false;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || *end != '\0') return false;
  out = v;
  return true;
}

bool convert(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || *end != '\0' || !std::isfinite(v)) return false;
  out = v;
  return true;
}

bool convert(const std::string& s, bool& out) {
  if (s == "true") {
    out = true;
    return true;
  }
  if (s == "false") {
    out = false;
    return true;
  }
  return false;
}

bool convert(const std::string& s, std::vector<Index>& out) {
  std::vector<Index> items;
  for (const std::string& item : split_list(s)) {
    std::int64_t v = 0;
    if (!convert(item, v)) return false;
    items.push_back(v);
  }
  out = std::move(items);
  return true;
}

bool convert(const std::string& s, std::vector<AlgorithmKind>& out) {
  std::vector<AlgorithmKind> items;
  for (const std::string& item : split_list(s)) {
    try {
      items.push_back(parse_algorithm(item));
    } catch (const ContractError&) {
      return false;
    }
  }
  out = std::move(items);
  return true;
}

const char* type_name(const std::int64_t&) { return "an integer"; }
const char* type_name(const std::uint64_t&) { return "a non-negative integer"; }
const char* type_name(const double&) { return "a finite real"; }
const char* type_name(const bool&) { return "true or false"; }
const char* type_name(const std::vector<Index>&) { return "a comma-separated list of integers"; }
const char* type_name(const std::vector<AlgorithmKind>&) {
  return "a comma-separated list of lexq, sarsa, expected_sarsa, double_q, la2c, lppo, baseline";
}

std::string render(std::int64_t v) { return std::to_string(v); }
std::string render(std::uint64_t v) { return std::to_string(v); }
std::string render(double v) { return format_double(v); }
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(const std::vector<Index>& v) {
  std::string out;
  for (Index x : v) out += (out.empty() ? "" : ", ") + std::to_string(x);
  return out;
}
std::string render(const std::vector<AlgorithmKind>& v) {
  std::string out;
  for (AlgorithmKind x : v) out += (out.empty() ? "" : ", ") + algorithm_name(x);
  return out;
}

/// Reads fields out of a document, remembering which keys were consumed.
class Reader {
public:
  Reader(const ConfigDocument& doc, const std::set<std::string>& allowed) : doc_(doc) {
    for (const auto& section : doc.sections)
      if (!allowed.count(section.name))
        throw ConfigError("unknown section [" + section.name + "] (line " + std::to_string(section.line) + ")");
  }

  void enter(const std::string& section) { section_ = section; }

  template <typename T>
  void field(const char* key, T& out) {
    const ConfigDocument::Entry* e = lookup(key);
    if (!e) return;
    if (!convert(e->value, out))
      throw ConfigError(where(section_, key, e->line) + ": expected " + type_name(out) + ", got '" + e->value + "'");
  }

  template <typename E>
  void choice(const char* key, E& out, const NameTable<E>& table) {
    const ConfigDocument::Entry* e = lookup(key);
    if (!e) return;
    for (const auto& [value, name] : table)
      if (e->value == name) {
        out = value;
        return;
      }
    throw ConfigError(where(section_, key, e->line) + ": expected one of " + names_of(table) + ", got '" +
                      e->value + "'");
  }

  void algorithm(const char* key, AlgorithmKind& out) {
    const ConfigDocument::Entry* e = lookup(key);
    if (!e) return;
    try {
      out = parse_algorithm(e->value);
    } catch (const ContractError& err) {
      throw ConfigError(where(section_, key, e->line) + ": " + err.what());
    }
  }

  void require(const char* key, bool ok, const std::string& what) {
    if (ok) return;
    const ConfigDocument::Entry* e = find(section_, key);
    if (e) throw ConfigError(where(section_, key, e->line) + ": " + what);
    throw ConfigError(section_ + "." + key + ": " + what);
  }

  void finish() const {
    for (const auto& section : doc_.sections)
      for (const auto& entry : section.entries)
        if (!used_.count({section.name, entry.key}))
          throw ConfigError("unknown key " + where(section.name, entry.key, entry.line));
  }

private:
  const ConfigDocument::Entry* find(const std::string& section, const std::string& key) const {
    const ConfigDocument::Section* s = doc_.find(section);
    if (!s) return nullptr;
    for (const auto& e : s->entries)
      if (e.key == key) return &e;
    return nullptr;
  }

  const ConfigDocument::Entry* lookup(const char* key) {
    used_.insert({section_, key});
    return find(section_, key);
  }

  const ConfigDocument& doc_;
  std::string section_;
  std::set<std::pair<std::string, std::string>> used_;
};

/// Writes every visited field as `key = value`.
class Writer {
public:
  void enter(const std::string& section) {
    if (section == section_) return;
    if (!out_.empty()) out_ += '\n';
    out_ += "[" + section + "]\n";
    section_ = section;
  }

  template <typename T>
  void field(const char* key, T& value) {
    out_ += std::string(key) + " = " + render(value) + "\n";
  }

  template <typename E>
  void choice(const char* key, E& value, const NameTable<E>& table) {
    for (const auto& [v, name] : table)
      if (v == value) out_ += std::string(key) + " = " + name + "\n";
  }

  void algorithm(const char* key, AlgorithmKind& value) {
    out_ += std::string(key) + " = " + algorithm_name(value) + "\n";
  }

  void require(const char*, bool, const std::string&) {}

  const std::string& text() const { return out_; }

private:
  std::string out_;
  std::string section_;
};

// Schemas, shared by reading and writing.

template <typename V>
void visit_tolerance(V& v, const std::string& prefix, ToleranceSpec& t) {
  v.choice(prefix.c_str(), t.kind, kToleranceKinds);
  const std::string value = prefix + "_value";
  const std::string power = prefix + "_power";
  v.field(value.c_str(), t.value);
  v.field(power.c_str(), t.power);
  v.require(value.c_str(), t.value > 0.0, "tolerance must be positive");
  v.require(power.c_str(), t.power >= 0.0, "decay power must be >= 0");
}

template <typename V, typename S, typename K>
void visit_schedule(V& v, const std::string& prefix, S& s, const NameTable<K>& kinds) {
  v.choice(prefix.c_str(), s.kind, kinds);
  const std::string scale = prefix + "_scale";
  const std::string power = prefix + "_power";
  v.field(scale.c_str(), s.scale);
  v.field(power.c_str(), s.power);
}

template <typename V>
void visit_vb(V& v, VblrlConfig& c) {
  v.enter("vb");
  v.choice("rule", c.rule, kRules);
  visit_tolerance(v, "bandit_tolerance", c.bandit_tolerance);
  visit_tolerance(v, "update_tolerance", c.update_tolerance);
  visit_schedule(v, "step_size", c.step_size, kStepKinds);
  visit_schedule(v, "exploration", c.exploration, kExplorationKinds);
  v.field("max_steps", c.max_steps);
  v.require("max_steps", c.max_steps > 0, "must be positive");
  v.field("q_init", c.q_init);
  v.field("stop_on_convergence", c.stop_on_convergence);
}

template <typename V>
void visit_pb(V& v, PblrlConfig& c) {
  v.enter("pb");
  v.choice("objective", c.objective, kObjectives);
  v.field("batch_size", c.batch_size);
  v.require("batch_size", c.batch_size >= 1, "must be >= 1");
  v.field("kappa", c.kappa);
  v.require("kappa", c.objective != PolicyObjective::PPO || c.kappa > 1.0,
            "the KL-penalised objective needs kappa > 1 (convergence condition on the KL coefficient)");
  v.field("ppo_epochs", c.ppo_epochs);
  v.field("alpha_base", c.chain.alpha_base);
  v.field("beta_base", c.chain.beta_base);
  v.field("eta_base", c.chain.eta_base);
  v.field("beta_ratio", c.chain.beta_ratio);
  v.field("t0", c.chain.t0);
  v.field("tau0", c.chain.tau0);
  v.field("theta_max", c.theta_max);
  v.field("tracker_window", c.tracker_window);
  v.field("tracker_threshold", c.tracker_threshold);
  v.field("return_window", c.return_window);
  v.field("max_steps", c.max_steps);
  v.require("max_steps", c.max_steps > 0, "must be positive");
}

template <typename V>
void visit_convergence(V& v, ConvergenceConfig& c) {
  v.enter("convergence");
  v.field("window", c.window);
  v.require("window", c.window >= 2, "must be >= 2");
  v.field("threshold", c.threshold);
  v.require("threshold", c.threshold > 0.0, "must be positive");
}

template <typename V>
void visit_generator_params(V& v, RandomMomdpConfig& c) {
  v.field("density", c.density);
  v.require("density", c.density > 0.0 && c.density <= 1.0, "must lie in (0, 1]");
  v.field("noise_sigma", c.reward_noise_sigma);
  v.require("noise_sigma", c.reward_noise_sigma >= 0.0, "must be >= 0");
  v.field("horizon", c.horizon);
  v.require("horizon", c.horizon > 0, "must be positive");
  v.field("discount", c.discount);
  v.require("discount", c.discount >= 0.0 && c.discount < 1.0, "must lie in [0, 1)");
}

template <typename V>
void visit_gridnav(V& v, GridNavConfig& c) {
  v.enter("gridnav");
  v.field("side", c.grid_side);
  v.require("side", c.grid_side >= 2, "must be >= 2");
  v.field("unsafe_density", c.unsafe_density);
  v.require("unsafe_density", c.unsafe_density >= 0.0 && c.unsafe_density < 1.0, "must lie in [0, 1)");
  v.field("slip_prob", c.slip_prob);
  v.require("slip_prob", c.slip_prob >= 0.0 && c.slip_prob < 1.0, "must lie in [0, 1)");
  v.field("goal_reward", c.goal_reward);
  v.field("unsafe_cost", c.unsafe_cost);
  v.field("step_limit", c.step_limit);
  v.require("step_limit", c.step_limit > 0, "must be positive");
  v.field("discount", c.discount);
  v.require("discount", c.discount >= 0.0 && c.discount < 1.0, "must lie in [0, 1)");
  v.field("seed", c.seed);
}

template <typename V>
void visit_gen(V& v, GenMomdpConfig& c) {
  v.enter("generator");
  v.choice("kind", c.kind, kGeneratorKinds);
  v.field("states", c.random.num_states);
  v.require("states", c.random.num_states >= 1, "must be positive");
  v.field("actions", c.random.num_actions);
  v.require("actions", c.random.num_actions >= 1 && c.random.num_actions <= kMaxActions, "must lie in [1, 64]");
  v.field("objectives", c.random.num_objectives);
  v.require("objectives", c.random.num_objectives >= 1, "must be positive");
  visit_generator_params(v, c.random);
  v.field("seed", c.random.seed);
  visit_gridnav(v, c.gridnav);
}

template <typename V>
void visit_scaling(V& v, ScalingExperimentConfig& c) {
  v.enter("scaling");
  v.field("states", c.states);
  v.require("states", !c.states.empty(), "needs at least one entry");
  for (Index s : c.states) v.require("states", s >= 1, "entries must be positive");
  v.field("actions", c.actions);
  v.require("actions", c.actions >= 1 && c.actions <= kMaxActions, "must lie in [1, 64]");
  v.field("objectives", c.objectives);
  v.require("objectives", !c.objectives.empty(), "needs at least one entry");
  for (Index m : c.objectives) v.require("objectives", m >= 1, "entries must be positive");
  v.field("momdps_per_cell", c.momdps_per_cell);
  v.require("momdps_per_cell", c.momdps_per_cell >= 1, "must be >= 1");
  v.algorithm("algorithm", c.algorithm);
  v.require("algorithm", c.algorithm != AlgorithmKind::Baseline, "baseline is only available in the safety study");
  v.field("seed", c.seed);
  v.enter("generator");
  visit_generator_params(v, c.generator);
  visit_vb(v, c.vb);
  visit_pb(v, c.pb);
  visit_convergence(v, c.vb.convergence);
  c.pb.convergence = c.vb.convergence;
}

template <typename V>
void visit_safety(V& v, SafetyExperimentConfig& c) {
  v.enter("safety");
  v.field("algorithms", c.algorithms);
  v.require("algorithms", !c.algorithms.empty(), "needs at least one entry");
  v.field("seeds", c.seeds);
  v.require("seeds", c.seeds >= 1, "must be >= 1");
  v.field("eval_episodes", c.eval_episodes);
  v.require("eval_episodes", c.eval_episodes >= 1, "must be >= 1");
  v.field("seed", c.seed);
  visit_gridnav(v, c.env);
  visit_vb(v, c.vb);
  visit_pb(v, c.pb);
  visit_convergence(v, c.vb.convergence);
  c.pb.convergence = c.vb.convergence;
}

template <typename T, typename Fn>
void run_contract_check(const char* section, const T& config, Fn&& check) {
  try {
    check(config);
  } catch (const ContractError& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

void check_vb(const VblrlConfig& c) { validate_config(c); }
void check_pb(const PblrlConfig& c) { validate_config(c); }

}  // namespace

ConfigDocument ConfigDocument::parse(std::string_view text) {
  ConfigDocument doc;
  std::map<std::string, int> section_lines;
  std::map<std::string, int> key_lines;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header '" + line + "'");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      if (auto it = section_lines.find(name); it != section_lines.end())
        throw ConfigError("duplicate section [" + name + "] (lines " + std::to_string(it->second) + " and " +
                          std::to_string(line_no) + ")");
      section_lines[name] = line_no;
      doc.sections.push_back({name, line_no, {}});
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value` or `[section]`, got '" + line +
                        "'");
    if (doc.sections.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside of any [section]");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key before '='");
    const std::string full = doc.sections.back().name + "." + key;
    if (auto it = key_lines.find(full); it != key_lines.end())
      throw ConfigError("duplicate key " + full + " (lines " + std::to_string(it->second) + " and " +
                        std::to_string(line_no) + ")");
    key_lines[full] = line_no;
    doc.sections.back().entries.push_back({key, value, line_no});
  }
  return doc;
}

const ConfigDocument::Section* ConfigDocument::find(const std::string& name) const {
  for (const Section& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

GenMomdpConfig parse_gen_config(const ConfigDocument& doc) {
  Reader r(doc, {"generator", "gridnav"});
  GenMomdpConfig c;
  visit_gen(r, c);
  r.finish();
  return c;
}

VblrlConfig parse_vb_config(const ConfigDocument& doc) {
  Reader r(doc, {"vb", "convergence", "run"});
  VblrlConfig c;
  visit_vb(r, c);
  visit_convergence(r, c.convergence);
  r.enter("run");
  r.field("seed", c.seed);
  r.finish();
  run_contract_check("vb", c, check_vb);
  return c;
}

PblrlConfig parse_pb_config(const ConfigDocument& doc) {
  Reader r(doc, {"pb", "convergence", "run"});
  PblrlConfig c;
  visit_pb(r, c);
  visit_convergence(r, c.convergence);
  r.enter("run");
  r.field("seed", c.seed);
  r.finish();
  run_contract_check("pb", c, check_pb);
  return c;
}

ScalingExperimentConfig parse_scaling_config(const ConfigDocument& doc) {
  Reader r(doc, {"scaling", "generator", "vb", "pb", "convergence"});
  ScalingExperimentConfig c;
  visit_scaling(r, c);
  r.finish();
  run_contract_check("vb", c.vb, check_vb);
  run_contract_check("pb", c.pb, check_pb);
  return c;
}

SafetyExperimentConfig parse_safety_config(const ConfigDocument& doc) {
  Reader r(doc, {"safety", "gridnav", "vb", "pb", "convergence"});
  SafetyExperimentConfig c;
  visit_safety(r, c);
  r.finish();
  run_contract_check("vb", c.vb, check_vb);
  run_contract_check("pb", c.pb, check_pb);
  return c;
}

std::string serialize(const GenMomdpConfig& config) {
  GenMomdpConfig c = config;
  Writer w;
  visit_gen(w, c);
  return w.text();
}

std::string serialize(const VblrlConfig& config) {
  VblrlConfig c = config;
  Writer w;
  visit_vb(w, c);
  visit_convergence(w, c.convergence);
  w.enter("run");
  w.field("seed", c.seed);
  return w.text();
}

std::string serialize(const PblrlConfig& config) {
  PblrlConfig c = config;
  Writer w;
  visit_pb(w, c);
  visit_convergence(w, c.convergence);
  w.enter("run");
  w.field("seed", c.seed);
  return w.text();
}

std::string serialize(const ScalingExperimentConfig& config) {
  ScalingExperimentConfig c = config;
  Writer w;
  visit_scaling(w, c);
  return w.text();
}

std::string serialize(const SafetyExperimentConfig& config) {
  SafetyExperimentConfig c = config;
  Writer w;
  visit_safety(w, c);
  return w.text();
}

}  // namespace lexrl
