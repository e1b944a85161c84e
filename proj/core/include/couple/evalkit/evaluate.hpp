#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "couple/datakit/catalog.hpp"
#include "couple/datakit/split.hpp"
#include "couple/model/params.hpp"

namespace couple::evalkit {

struct SliceMetrics {
  std::size_t cases = 0;
  std::map<std::size_t, double> hr;    // K -> mean
  std::map<std::size_t, double> ndcg;  // K -> mean
};

struct EvalReport {
  std::string model;
  std::vector<std::size_t> ks{5, 10};
  SliceMetrics overall, cold, warm;
  std::size_t candidates = 0;  // per scored case
  std::size_t test_cases = 0;
  std::size_t skipped = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
};

// Fills `scores` (one per candidate, in candidate order) for a case.
using CaseScorer = std::function<void(std::size_t case_index, const datakit::TestCase& tc,
                                      std::vector<double>& scores)>;

// Scores every non-skipped case and aggregates HR/NDCG per K overall and per
// cold/warm slice. Case sums run in case order.
EvalReport score_cases(const datakit::SplitResult& split, const std::vector<std::size_t>& ks,
                       const CaseScorer& scorer);

// Inference-mode user vectors on each case's history against tag-only
// candidate embeddings. Cases with an empty history are counted as skipped.
// `workers` > 1 computes user vectors on several threads (same result).
EvalReport evaluate(const model::CoupleParams& params, const datakit::SplitResult& split,
                    const datakit::ItemCatalog& catalog, const std::vector<std::size_t>& ks,
                    std::uint64_t seed, std::size_t workers = 1);

enum class BaselineKind { kRandom, kPopularity };

BaselineKind parse_baseline(const std::string& name);

// Random: seeded uniform scores per case. Popularity: training interaction
// counts of the split.
EvalReport baseline_scores(BaselineKind kind, const datakit::SplitResult& split,
                           const datakit::ItemCatalog& catalog, const std::vector<std::size_t>& ks,
                           std::uint64_t seed);

}  // namespace couple::evalkit
