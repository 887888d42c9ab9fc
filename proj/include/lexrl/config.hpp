#pragma once

#include "lexrl/harness.hpp"
#include "lexrl/momdp.hpp"
#include "lexrl/policy_based.hpp"
#include "lexrl/value_based.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lexrl {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` comments.
/// Duplicate sections and duplicate keys are rejected.
struct ConfigDocument {
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };
  struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
  };
  std::vector<Section> sections;

  static ConfigDocument parse(std::string_view text);
  const Section* find(const std::string& name) const;
};

struct GenMomdpConfig {
  enum class Kind { Random, GridNav };
  Kind kind = Kind::Random;
  RandomMomdpConfig random;
  GridNavConfig gridnav;
};

// Each parse_* reads only the sections its subcommand understands. Unknown
// sections or keys, malformed values and violated constraints throw
// ConfigError naming section.key and the line. Missing keys keep defaults.
//
//   gen-momdp  [generator] [gridnav]
//   train-vb   [vb] [convergence] [run]
//   train-pb   [pb] [convergence] [run]
//   scaling    [scaling] [generator] [vb] [pb] [convergence]
//   safety     [safety] [gridnav] [vb] [pb] [convergence]

GenMomdpConfig parse_gen_config(const ConfigDocument& doc);
VblrlConfig parse_vb_config(const ConfigDocument& doc);
PblrlConfig parse_pb_config(const ConfigDocument& doc);
ScalingExperimentConfig parse_scaling_config(const ConfigDocument& doc);
SafetyExperimentConfig parse_safety_config(const ConfigDocument& doc);

/// Every field written out, so that parsing the text gives back the same config.
std::string serialize(const GenMomdpConfig& config);
std::string serialize(const VblrlConfig& config);
std::string serialize(const PblrlConfig& config);
std::string serialize(const ScalingExperimentConfig& config);
std::string serialize(const SafetyExperimentConfig& config);

}  // namespace lexrl
