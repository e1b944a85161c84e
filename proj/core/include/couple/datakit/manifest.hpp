#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "couple/datakit/catalog.hpp"
#include "couple/datakit/split.hpp"

namespace couple::datakit {

// Resolved run settings echoed into artifacts.
using ConfigEcho = std::map<std::string, std::string>;

// `key=value` lines, in key order, for TSV comment headers.
std::vector<std::string> echo_lines(const ConfigEcho& config);

struct SplitDir {
  ItemCatalog catalog;
  SplitResult split;
  ConfigEcho config;
};

// A split directory holds catalog.tsv, train.tsv and split.json. The JSON
// manifest lists every test case (user, history, truth, cold flag, the fixed
// candidate list and truth slot) so an evaluation can be replayed exactly.
void write_split_dir(const std::filesystem::path& dir, const ItemCatalog& catalog,
                     const SplitResult& split, const ConfigEcho& config);
SplitDir load_split_dir(const std::filesystem::path& dir);

}  // namespace couple::datakit
