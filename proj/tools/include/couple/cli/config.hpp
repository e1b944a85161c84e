#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "couple/datakit/synth.hpp"
#include "couple/model/params.hpp"
#include "couple/model/trainer.hpp"

namespace couple::cli {

// One setting a command accepts. Flags are spelled --name with underscores
// turned into dashes; `flag` settings take no value on the command line.
struct KeySpec {
  std::string name;
  std::string fallback;
  std::string help;
  bool flag = false;
};

// Settings of a command in echo order. Throws ValidationError for an unknown
// command.
const std::vector<KeySpec>& keys_for(const std::string& command);
const std::vector<std::string>& command_names();

// True when any command accepts the key, so one file can feed every stage.
bool known_key(const std::string& key);

std::string flag_name(const std::string& key);

// Flat `key = value` text with `#` comments. Unknown keys, missing `=`,
// empty keys and repeated keys are errors naming `origin` and the line.
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin);

// Resolved settings of one command.
class RunConfig {
 public:
  RunConfig() = default;
  explicit RunConfig(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& text(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<std::size_t> sizes(const std::string& key, char sep) const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

datakit::SyntheticConfig synth_config(const RunConfig& config);
model::ModelConfig model_config(const RunConfig& config);
model::TrainConfig train_config(const RunConfig& config);

}  // namespace couple::cli
