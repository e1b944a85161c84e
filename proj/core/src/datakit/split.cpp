#include "couple/datakit/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "couple/numerics/rng.hpp"

namespace couple::datakit {

using numerics::make_stream;
using numerics::Stream;

SplitResult leave_one_out_split(const InteractionLog& log, const ItemCatalog& catalog,
                                std::size_t target_domain, double cold_fraction,
                                std::uint64_t seed) {
  if (!(cold_fraction >= 0.0 && cold_fraction <= 1.0)) {
    throw ValidationError("cold fraction must lie in [0, 1]");
  }
  SplitResult out;
  out.target_domain = target_domain;
  out.cold_fraction = cold_fraction;
  out.seed = seed;

  const auto seqs = log.sequences(catalog);
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    const auto& seq = seqs[u];
    if (seq.size() < 2) continue;
    std::size_t last = seq.size();
    for (std::size_t i = seq.size(); i-- > 0;) {
      if (catalog.item(seq[i].item).domain == target_domain) {
        last = i;
        break;
      }
    }
    if (last == seq.size()) continue;
    TestCase tc;
    tc.user = u;
    tc.truth = seq[last].item;
    for (const Event& e : seq) {
      if (e.item != tc.truth) tc.history.push_back(e.item);
    }
    out.cases.push_back(std::move(tc));
  }
  if (out.cases.empty()) {
    throw ValidationError("no user is eligible for the leave-one-out split (need >= 1 event in domain " +
                          std::to_string(target_domain) + " and >= 2 events)");
  }

  std::vector<std::size_t> order(out.cases.size());
  std::iota(order.begin(), order.end(), 0);
  auto gen = make_stream(seed, Stream::kSplit);
  std::shuffle(order.begin(), order.end(), gen);
  const auto n_cold = static_cast<std::size_t>(
      std::llround(cold_fraction * static_cast<double>(out.cases.size())));
  for (std::size_t i = 0; i < n_cold; ++i) {
    TestCase& tc = out.cases[order[i]];
    tc.cold = true;
    std::erase_if(tc.history, [&](std::size_t item) {
      return catalog.item(item).domain == target_domain;
    });
  }

  std::unordered_set<std::size_t> truths;
  for (const TestCase& tc : out.cases) truths.insert(tc.truth);
  out.cold_items.assign(truths.begin(), truths.end());
  std::sort(out.cold_items.begin(), out.cold_items.end());

  out.train = log.with_same_users();
  for (const Event& e : log.events()) {
    if (!truths.count(e.item)) out.train.add(e.user, e.item, e.timestamp);
  }
  return out;
}

std::vector<std::size_t> candidate_pool(const ItemCatalog& catalog, std::size_t target_domain,
                                        const std::vector<std::size_t>& user_items,
                                        std::size_t truth) {
  const std::unordered_set<std::size_t> seen(user_items.begin(), user_items.end());
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog.item(i).domain != target_domain || i == truth || seen.count(i)) continue;
    pool.push_back(i);
  }
  return pool;
}

std::vector<double> popularity_distribution(const std::vector<std::size_t>& pool,
                                            const std::vector<std::size_t>& train_counts) {
  std::vector<double> p(pool.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    p[i] = static_cast<double>(train_counts.at(pool[i])) + 1.0;
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<std::size_t> sample_eval_negatives(const ItemCatalog& catalog,
                                               std::size_t target_domain,
                                               const std::vector<std::size_t>& user_items,
                                               std::size_t truth,
                                               const std::vector<std::size_t>& train_counts,
                                               std::size_t count_random, std::size_t count_popular,
                                               std::uint64_t seed) {
  std::vector<std::size_t> pool = candidate_pool(catalog, target_domain, user_items, truth);
  const std::size_t need = count_random + count_popular;
  if (pool.size() < need) throw PoolTooSmall(pool.size(), need);

  auto gen = make_stream(seed, Stream::kSampling);

  // Weighted sampling without replacement via exponential keys log(u) / w:
  // the k largest keys are a successive-draw sample proportional to w.
  const auto weights = popularity_distribution(pool, train_counts);
  std::vector<std::pair<double, std::size_t>> keyed(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    keyed[i] = {std::log(numerics::uniform_open(gen)) / weights[i], i};
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(count_popular),
                    keyed.end(), [](const auto& a, const auto& b) {
                      return a.first > b.first || (a.first == b.first && a.second < b.second);
                    });
  std::vector<std::size_t> out;
  out.reserve(need);
  std::vector<bool> taken(pool.size(), false);
  for (std::size_t k = 0; k < count_popular; ++k) {
    out.push_back(pool[keyed[k].second]);
    taken[keyed[k].second] = true;
  }

  std::vector<std::size_t> rest;
  rest.reserve(pool.size() - count_popular);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!taken[i]) rest.push_back(pool[i]);
  }
  for (std::size_t k = 0; k < count_random; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, rest.size() - 1);
    std::swap(rest[k], rest[pick(gen)]);
    out.push_back(rest[k]);
  }
  return out;
}

void attach_candidates(SplitResult& split, const InteractionLog& full_log,
                       const ItemCatalog& catalog, std::size_t count_random,
                       std::size_t count_popular) {
  std::vector<std::vector<std::size_t>> user_items(full_log.user_count());
  for (const Event& e : full_log.events()) user_items[e.user].push_back(e.item);
  const auto counts = split.train.item_counts(catalog.size());

  for (std::size_t i = 0; i < split.cases.size(); ++i) {
    TestCase& tc = split.cases[i];
    auto gen = make_stream(split.seed, Stream::kSampling, i + 1);
    const std::uint64_t case_seed = gen();
    tc.candidates.clear();
    tc.skipped = false;
    tc.skip_reason.clear();
    try {
      tc.candidates = sample_eval_negatives(catalog, split.target_domain, user_items[tc.user],
                                            tc.truth, counts, count_random, count_popular,
                                            case_seed);
    } catch (const PoolTooSmall& e) {
      tc.skipped = true;
      tc.skip_reason = e.what();
      continue;
    }
    tc.candidates.push_back(tc.truth);
    std::shuffle(tc.candidates.begin(), tc.candidates.end(), gen);
    tc.truth_index = static_cast<std::size_t>(
        std::find(tc.candidates.begin(), tc.candidates.end(), tc.truth) - tc.candidates.begin());
  }
}

}  // namespace couple::datakit
