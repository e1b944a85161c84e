#include "couple/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "couple/errors.hpp"

namespace couple::evalkit {

std::size_t rank_of(std::span<const double> scores, std::size_t truth_index) {
  if (truth_index >= scores.size()) {
    throw ValidationError("truth index " + std::to_string(truth_index) + " outside " +
                          std::to_string(scores.size()) + " candidates");
  }
  const double t = scores[truth_index];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > t || (scores[j] == t && j < truth_index)) ++ahead;
  }
  return ahead + 1;
}

RankScore rank_and_score(std::span<const double> scores, std::size_t truth_index, std::size_t k) {
  RankScore r;
  r.rank = rank_of(scores, truth_index);
  if (r.rank <= k) {
    r.hr = 1.0;
    r.ndcg = 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
  }
  return r;
}

double uniform_rank_hr(std::size_t k, std::size_t candidates) {
  if (candidates == 0) throw ValidationError("uniform_rank_hr: no candidates");
  return static_cast<double>(std::min(k, candidates)) / static_cast<double>(candidates);
}

double uniform_rank_ndcg(std::size_t k, std::size_t candidates) {
  if (candidates == 0) throw ValidationError("uniform_rank_ndcg: no candidates");
  double total = 0.0;
  for (std::size_t r = 1; r <= std::min(k, candidates); ++r) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return total / static_cast<double>(candidates);
}

}  // namespace couple::evalkit
