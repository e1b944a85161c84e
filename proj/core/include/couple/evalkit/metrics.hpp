#pragma once

#include <cstddef>
#include <span>

namespace couple::evalkit {

struct RankScore {
  std::size_t rank = 0;  // 1-based
  double hr = 0.0;
  double ndcg = 0.0;
};

// 1-based rank of the truth among the scores; equal scores are ordered by
// candidate index.
std::size_t rank_of(std::span<const double> scores, std::size_t truth_index);

// hr = [rank <= K], ndcg = 1 / log2(rank + 1) when rank <= K, else 0.
RankScore rank_and_score(std::span<const double> scores, std::size_t truth_index, std::size_t k);

// Expected HR@K and NDCG@K when the truth's rank is uniform over `candidates`.
double uniform_rank_hr(std::size_t k, std::size_t candidates);
double uniform_rank_ndcg(std::size_t k, std::size_t candidates);

}  // namespace couple::evalkit
