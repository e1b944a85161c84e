#include "couple/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "couple/errors.hpp"

namespace couple::cli {

namespace {

using Table = std::map<std::string, std::vector<KeySpec>>;

std::vector<KeySpec> model_keys() {
  return {
      {"dim", "64", "embedding width d"},
      {"heads", "4", "attention heads m"},
      {"max_len", "5", "items per history l"},
      {"max_tags", "15", "tags per item n"},
      {"tree", "1-32-512", "memory tree layer sizes"},
      {"top_k", "8", "leaves used for the group vector"},
      {"dropout", "0.2", "dropout on the group vector"},
      {"positions", "true", "add position embeddings"},
      {"use_content", "true", "content branch on/off"},
      {"use_group", "true", "group branch on/off"},
      {"batch_size", "256", "samples per step"},
      {"epochs", "1", "passes over the training samples"},
      {"max_steps", "0", "stop after this many steps (0: no cap)"},
      {"lr", "1e-4", "Adam learning rate"},
      {"omega", "0.03", "contrastive temperature"},
      {"lambda", "0.1", "orthogonality penalty weight"},
      {"queue_capacity", "2560", "negative queue size"},
      {"in_batch_negatives", "false", "add other rows' positives as negatives"},
      {"power_iters", "2", "power iterations per penalty term"},
      {"anneal_rate", "1e-5", "Gumbel temperature decay rate"},
      {"anneal_interval", "1000", "steps between temperature updates"},
      {"seed", "42", "run seed"},
  };
}

const Table& table() {
  static const Table t = [] {
    Table out;
    out["synth"] = {
        {"out", "", "output directory"},
        {"seed", "7", "generator seed"},
        {"groups", "4", "planted user groups"},
        {"users_per_group", "500", "users per group"},
        {"items_per_domain", "1500", "items in each domain"},
        {"tag_vocab", "200", "tag vocabulary size"},
        {"shared_fraction", "0.6", "fraction of tags shared by both domains"},
        {"tags_per_item", "4", "tags per item"},
        {"interactions_per_user", "32", "events per user"},
        {"noise", "0.1", "probability of an off-profile pick"},
        {"source_ratio", "3", "source events per target event"},
        {"tag_bias", "0.8", "probability a tag comes from the item's group profile"},
        {"favorite_tags", "2", "favourite tags per user"},
        {"favorite_bias", "0.7", "probability a pick carries a favourite tag"},
    };
    out["split"] = {
        {"catalog", "", "catalog TSV"},
        {"interactions", "", "interaction TSV"},
        {"out", "", "output directory"},
        {"target_domain", "1", "domain holding the held-out items"},
        {"cold_fraction", "0.5", "fraction of test users made cold"},
        {"seed", "7", "split seed"},
        {"eval_random", "50", "uniform negatives per case"},
        {"eval_popular", "50", "popularity-weighted negatives per case"},
    };
    auto train = std::vector<KeySpec>{
        {"data", "", "split directory"},
        {"checkpoint", "", "checkpoint file written (and read with --resume)"},
        {"loss_log", "", "loss TSV (default: <checkpoint>.loss.tsv)"},
        {"resume", "false", "continue from the checkpoint", true},
        {"checkpoint_every", "0", "also save every N steps (0: only at the end)"},
    };
    for (auto& k : model_keys()) train.push_back(std::move(k));
    out["train"] = std::move(train);
    out["eval"] = {
        {"checkpoint", "", "trained checkpoint"},
        {"split", "", "split directory"},
        {"out", "", "report JSON"},
        {"k", "5,10", "comma-separated cutoffs"},
        {"workers", "1", "threads for user vectors"},
    };
    out["baseline"] = {
        {"kind", "", "random or popularity"},
        {"split", "", "split directory"},
        {"out", "", "report JSON"},
        {"k", "5,10", "comma-separated cutoffs"},
        {"seed", "42", "seed of the random baseline"},
    };
    out["export-embeddings"] = {
        {"checkpoint", "", "trained checkpoint"},
        {"what", "", "tags, leaves, users or assignments"},
        {"split", "", "split directory (tags, users, assignments)"},
        {"out", "", "output TSV"},
    };
    out["report"] = {
        {"in", "", "report JSON"},
        {"format", "table", "table, csv or json"},
        {"out", "", "output file (default: standard output)"},
    };
    return out;
  }();
  return t;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ValidationError("setting '" + key + "': expected " + want + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const char* want) {
  T out{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (value.empty() || res.ec != std::errc() || res.ptr != end) bad_value(key, value, want);
  return out;
}

}  // namespace

const std::vector<KeySpec>& keys_for(const std::string& command) {
  const auto it = table().find(command);
  if (it == table().end()) throw ValidationError("unknown command '" + command + "'");
  return it->second;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "split", "train", "eval",
                                              "baseline", "export-embeddings", "report"};
  return names;
}

bool known_key(const std::string& key) {
  for (const auto& [cmd, keys] : table()) {
    if (std::any_of(keys.begin(), keys.end(), [&](const KeySpec& k) { return k.name == key; })) {
      return true;
    }
  }
  return false;
}

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key(trim(t.substr(0, eq)));
    const std::string value(trim(t.substr(eq + 1)));
    if (key.empty()) throw ValidationError(where + "empty key");
    if (key.find_first_of("[]{}.") != std::string::npos) {
      throw ValidationError(where + "nested keys are not supported ('" + key + "')");
    }
    if (!known_key(key)) throw ValidationError(where + "unknown key '" + key + "'");
    if (!out.emplace(key, value).second) throw ValidationError(where + "key '" + key + "' repeated");
  }
  return out;
}

const std::string& RunConfig::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("setting '" + key + "' is not defined");
  return it->second;
}

std::size_t RunConfig::size(const std::string& key) const {
  return parse_number<std::size_t>(key, text(key), "a non-negative integer");
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, text(key), "a non-negative integer");
}

double RunConfig::real(const std::string& key) const {
  return parse_number<double>(key, text(key), "a number");
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& v = text(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::size_t> RunConfig::sizes(const std::string& key, char sep) const {
  const auto& v = text(key);
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = v.find(sep, start);
    const std::string part(trim(std::string_view(v).substr(start, pos - start)));
    out.push_back(parse_number<std::size_t>(key, part, "a list of non-negative integers"));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

datakit::SyntheticConfig synth_config(const RunConfig& c) {
  datakit::SyntheticConfig s;
  s.groups = c.size("groups");
  s.users_per_group = c.size("users_per_group");
  s.items_per_domain = c.size("items_per_domain");
  s.tag_vocab = c.size("tag_vocab");
  s.shared_fraction = c.real("shared_fraction");
  s.tags_per_item = c.size("tags_per_item");
  s.interactions_per_user = c.size("interactions_per_user");
  s.noise = c.real("noise");
  s.seed = c.u64("seed");
  s.source_ratio = c.real("source_ratio");
  s.tag_bias = c.real("tag_bias");
  s.favorite_tags = c.size("favorite_tags");
  s.favorite_bias = c.real("favorite_bias");
  datakit::validate(s);
  return s;
}

model::ModelConfig model_config(const RunConfig& c) {
  model::ModelConfig m;
  m.dim = c.size("dim");
  m.heads = c.size("heads");
  m.max_len = c.size("max_len");
  m.max_tags = c.size("max_tags");
  m.tree.layers = c.sizes("tree", '-');
  m.top_k = c.size("top_k");
  m.dropout = c.real("dropout");
  m.positions = c.boolean("positions");
  m.use_content = c.boolean("use_content");
  m.use_group = c.boolean("use_group");
  m.validate();
  return m;
}

model::TrainConfig train_config(const RunConfig& c) {
  model::TrainConfig t;
  t.batch_size = c.size("batch_size");
  t.epochs = c.size("epochs");
  t.max_steps = c.u64("max_steps");
  t.lr = c.real("lr");
  t.omega = c.real("omega");
  t.lambda = c.real("lambda");
  t.queue_capacity = c.size("queue_capacity");
  t.in_batch_negatives = c.boolean("in_batch_negatives");
  t.power_iters = static_cast<int>(c.size("power_iters"));
  t.anneal.rate = c.real("anneal_rate");
  t.anneal.interval = c.u64("anneal_interval");
  t.seed = c.u64("seed");
  t.validate();
  return t;
}

}  // namespace couple::cli
