#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "couple/datakit/catalog.hpp"
#include "couple/errors.hpp"

namespace couple::datakit {

struct TestCase {
  std::size_t user = 0;
  std::vector<std::size_t> history;  // temporally ordered, truth excluded
  std::size_t truth = 0;
  bool cold = false;

  // Filled by attach_candidates: truth plus sampled negatives in a seeded
  // random order; candidates[truth_index] == truth.
  std::vector<std::size_t> candidates;
  std::size_t truth_index = 0;
  bool skipped = false;
  std::string skip_reason;
};

struct SplitResult {
  InteractionLog train;
  std::vector<TestCase> cases;
  std::vector<std::size_t> cold_items;  // sorted ground-truth items
  std::size_t target_domain = 1;
  double cold_fraction = 0.5;
  std::uint64_t seed = 0;
};

// Leave-one-out on the target domain. A user is eligible with at least one
// target-domain event and at least two events overall. The last target-domain
// event becomes the ground truth and the rest of the sequence the history;
// every occurrence of any ground-truth item is removed from training. A seeded
// random round(cold_fraction * cases) subset of users is flagged cold and has
// all target-domain items stripped from its history.
SplitResult leave_one_out_split(const InteractionLog& log, const ItemCatalog& catalog,
                                std::size_t target_domain, double cold_fraction,
                                std::uint64_t seed);

class PoolTooSmall : public ValidationError {
 public:
  PoolTooSmall(std::size_t pool, std::size_t needed)
      : ValidationError("negative pool has " + std::to_string(pool) + " items, need " +
                        std::to_string(needed)),
        pool_size(pool) {}
  std::size_t pool_size;
};

// Target-domain items the user never interacted with, excluding the truth.
std::vector<std::size_t> candidate_pool(const ItemCatalog& catalog, std::size_t target_domain,
                                        const std::vector<std::size_t>& user_items,
                                        std::size_t truth);

// (count + 1) / sum over the pool.
std::vector<double> popularity_distribution(const std::vector<std::size_t>& pool,
                                            const std::vector<std::size_t>& train_counts);

// count_popular items drawn without replacement proportional to smoothed
// training popularity, then count_random drawn uniformly from the rest.
std::vector<std::size_t> sample_eval_negatives(const ItemCatalog& catalog,
                                               std::size_t target_domain,
                                               const std::vector<std::size_t>& user_items,
                                               std::size_t truth,
                                               const std::vector<std::size_t>& train_counts,
                                               std::size_t count_random, std::size_t count_popular,
                                               std::uint64_t seed);

// Samples negatives for every case (seed keyed by case index) and places the
// truth at a seeded position. Cases whose pool is too small are marked skipped.
void attach_candidates(SplitResult& split, const InteractionLog& full_log,
                       const ItemCatalog& catalog, std::size_t count_random = 50,
                       std::size_t count_popular = 50);

}  // namespace couple::datakit
