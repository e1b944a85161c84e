#pragma once

#include <filesystem>
#include <string>

#include "couple/evalkit/evaluate.hpp"

namespace couple::evalkit {

std::string report_json(const EvalReport& report);
EvalReport parse_report_json(const std::string& text);

// Aligned columns: slice, cases, then HR@K / NDCG@K per cutoff.
std::string report_table(const EvalReport& report);

// `metric,k,slice,value` rows with a header.
std::string report_csv(const EvalReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace couple::evalkit
