#include "couple/datakit/manifest.hpp"

#include <fstream>
#include <json.hpp>

#include "couple/errors.hpp"

namespace couple::datakit {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json ids(const ItemCatalog& catalog, const std::vector<std::size_t>& items) {
  json out = json::array();
  for (auto i : items) out.push_back(catalog.item(i).id);
  return out;
}

std::vector<std::size_t> resolve(const ItemCatalog& catalog, const json& arr) {
  std::vector<std::size_t> out;
  for (const auto& v : arr) out.push_back(catalog.index_of(v.get<std::string>()));
  return out;
}

}  // namespace

std::vector<std::string> echo_lines(const ConfigEcho& config) {
  std::vector<std::string> out;
  out.reserve(config.size());
  for (const auto& [k, v] : config) out.push_back(k + "=" + v);
  return out;
}

void write_split_dir(const std::filesystem::path& dir, const ItemCatalog& catalog,
                     const SplitResult& split, const ConfigEcho& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  const auto comments = echo_lines(config);
  write_catalog(catalog, dir / "catalog.tsv", comments);
  write_interactions(split.train, catalog, dir / "train.tsv", comments);

  json doc;
  doc["format_version"] = kFormatVersion;
  doc["target_domain"] = split.target_domain;
  doc["cold_fraction"] = split.cold_fraction;
  doc["seed"] = split.seed;
  doc["config"] = config;
  doc["cold_items"] = ids(catalog, split.cold_items);
  json cases = json::array();
  for (const TestCase& tc : split.cases) {
    json c;
    c["user"] = split.train.user_name(tc.user);
    c["history"] = ids(catalog, tc.history);
    c["truth"] = catalog.item(tc.truth).id;
    c["cold"] = tc.cold;
    c["candidates"] = ids(catalog, tc.candidates);
    c["truth_index"] = tc.truth_index;
    c["skipped"] = tc.skipped;
    if (tc.skipped) c["skip_reason"] = tc.skip_reason;
    cases.push_back(std::move(c));
  }
  doc["cases"] = std::move(cases);

  const auto path = dir / "split.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

SplitDir load_split_dir(const std::filesystem::path& dir) {
  SplitDir out;
  out.catalog = load_catalog(dir / "catalog.tsv");
  out.split.train = load_interactions(dir / "train.tsv", out.catalog);

  const auto path = dir / "split.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
    if (doc.at("format_version").get<int>() != kFormatVersion) {
      throw ValidationError(path.string() + ": unsupported format_version");
    }
    SplitResult& s = out.split;
    s.target_domain = doc.at("target_domain").get<std::size_t>();
    s.cold_fraction = doc.at("cold_fraction").get<double>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    out.config = doc.at("config").get<ConfigEcho>();
    s.cold_items = resolve(out.catalog, doc.at("cold_items"));
    for (const auto& c : doc.at("cases")) {
      TestCase tc;
      tc.user = s.train.intern_user(c.at("user").get<std::string>());
      tc.history = resolve(out.catalog, c.at("history"));
      tc.truth = out.catalog.index_of(c.at("truth").get<std::string>());
      tc.cold = c.at("cold").get<bool>();
      tc.candidates = resolve(out.catalog, c.at("candidates"));
      tc.truth_index = c.at("truth_index").get<std::size_t>();
      tc.skipped = c.at("skipped").get<bool>();
      if (tc.skipped) tc.skip_reason = c.value("skip_reason", std::string());
      if (!tc.skipped && (tc.truth_index >= tc.candidates.size() ||
                          tc.candidates[tc.truth_index] != tc.truth)) {
        throw ValidationError(path.string() + ": candidate list of user '" +
                              c.at("user").get<std::string>() + "' does not hold the truth at truth_index");
      }
      s.cases.push_back(std::move(tc));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed split manifest: " + e.what());
  }
  return out;
}

}  // namespace couple::datakit
