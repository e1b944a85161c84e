#include "couple/evalkit/report.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "couple/errors.hpp"

namespace couple::evalkit {

namespace {

using json = nlohmann::ordered_json;

const char* const kSlices[] = {"overall", "cold", "warm"};

const SliceMetrics& slice_of(const EvalReport& r, const std::string& name) {
  if (name == "cold") return r.cold;
  if (name == "warm") return r.warm;
  return r.overall;
}

SliceMetrics& slice_of(EvalReport& r, const std::string& name) {
  return const_cast<SliceMetrics&>(slice_of(static_cast<const EvalReport&>(r), name));
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string report_json(const EvalReport& r) {
  json j;
  j["model"] = r.model;
  j["seed"] = r.seed;
  j["candidates"] = r.candidates;
  j["test_cases"] = r.test_cases;
  j["scored"] = r.overall.cases;
  j["skipped"] = r.skipped;
  j["ks"] = r.ks;
  json metrics = json::object();
  for (const char* name : kSlices) {
    const SliceMetrics& s = slice_of(r, name);
    json m;
    m["cases"] = s.cases;
    for (auto k : r.ks) {
      m["hr@" + std::to_string(k)] = s.hr.at(k);
      m["ndcg@" + std::to_string(k)] = s.ndcg.at(k);
    }
    metrics[name] = m;
  }
  j["metrics"] = metrics;
  json cfg = json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    r.model = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.candidates = j.at("candidates").get<std::size_t>();
    r.test_cases = j.at("test_cases").get<std::size_t>();
    r.skipped = j.at("skipped").get<std::size_t>();
    r.ks = j.at("ks").get<std::vector<std::size_t>>();
    for (const char* name : kSlices) {
      const json& m = j.at("metrics").at(name);
      SliceMetrics& s = slice_of(r, name);
      s.cases = m.at("cases").get<std::size_t>();
      for (auto k : r.ks) {
        s.hr[k] = m.at("hr@" + std::to_string(k)).get<double>();
        s.ndcg[k] = m.at("ndcg@" + std::to_string(k)).get<double>();
      }
    }
    for (const auto& [k, v] : j.at("config").items()) r.config[k] = v.get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"slice", "cases"};
  for (auto k : r.ks) {
    header.push_back("HR@" + std::to_string(k));
    header.push_back("NDCG@" + std::to_string(k));
  }
  rows.push_back(header);
  for (const char* name : kSlices) {
    const SliceMetrics& s = slice_of(r, name);
    std::vector<std::string> row{name, std::to_string(s.cases)};
    for (auto k : r.ks) {
      row.push_back(fixed(s.hr.at(k)));
      row.push_back(fixed(s.ndcg.at(k)));
    }
    rows.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  out << "model " << r.model << ", " << r.candidates << " candidates per case, " << r.skipped
      << " skipped of " << r.test_cases << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      if (c == 0) {
        out << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        out << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    out << "\n";
  }
  return out.str();
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,k,slice,value\n";
  char buf[64];
  for (const char* metric : {"hr", "ndcg"}) {
    for (auto k : r.ks) {
      for (const char* name : kSlices) {
        const SliceMetrics& s = slice_of(r, name);
        const double v = std::string(metric) == "hr" ? s.hr.at(k) : s.ndcg.at(k);
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << metric << ',' << k << ',' << name << ',' << buf << "\n";
      }
    }
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace couple::evalkit
