#include "couple/evalkit/evaluate.hpp"

#include <algorithm>
#include <random>
#include <thread>

#include "couple/errors.hpp"
#include "couple/evalkit/metrics.hpp"
#include "couple/model/model.hpp"
#include "couple/numerics/rng.hpp"

namespace couple::evalkit {

namespace {

struct Sums {
  std::size_t cases = 0;
  std::map<std::size_t, double> hr, ndcg;
};

SliceMetrics finish(const Sums& s, const std::vector<std::size_t>& ks) {
  SliceMetrics m;
  m.cases = s.cases;
  for (auto k : ks) {
    m.hr[k] = s.cases ? s.hr.at(k) / static_cast<double>(s.cases) : 0.0;
    m.ndcg[k] = s.cases ? s.ndcg.at(k) / static_cast<double>(s.cases) : 0.0;
  }
  return m;
}

}  // namespace

EvalReport score_cases(const datakit::SplitResult& split, const std::vector<std::size_t>& ks,
                       const CaseScorer& scorer) {
  if (ks.empty()) throw ValidationError("evaluation needs at least one cutoff K");
  for (auto k : ks) {
    if (k == 0) throw ValidationError("evaluation cutoff K must be positive");
  }
  if (split.cases.empty()) throw ValidationError("split has no test cases");
  EvalReport r;
  r.ks = ks;
  r.test_cases = split.cases.size();
  r.seed = split.seed;
  Sums all, cold, warm;
  for (auto* s : {&all, &cold, &warm}) {
    for (auto k : ks) s->hr[k] = s->ndcg[k] = 0.0;
  }
  std::vector<double> scores;
  for (std::size_t i = 0; i < split.cases.size(); ++i) {
    const auto& tc = split.cases[i];
    if (tc.skipped) {
      ++r.skipped;
      continue;
    }
    if (tc.candidates.empty() || tc.truth_index >= tc.candidates.size() ||
        tc.candidates[tc.truth_index] != tc.truth ||
        std::count(tc.candidates.begin(), tc.candidates.end(), tc.truth) != 1) {
      throw ValidationError("test case " + std::to_string(i) + " has a malformed candidate list");
    }
    if (r.candidates == 0) r.candidates = tc.candidates.size();
    if (tc.candidates.size() != r.candidates) {
      throw ValidationError("test cases disagree on the candidate count");
    }
    scores.assign(tc.candidates.size(), 0.0);
    scorer(i, tc, scores);
    Sums& slice = tc.cold ? cold : warm;
    ++all.cases;
    ++slice.cases;
    for (auto k : ks) {
      const RankScore rs = rank_and_score(scores, tc.truth_index, k);
      all.hr[k] += rs.hr;
      all.ndcg[k] += rs.ndcg;
      slice.hr[k] += rs.hr;
      slice.ndcg[k] += rs.ndcg;
    }
  }
  r.overall = finish(all, ks);
  r.cold = finish(cold, ks);
  r.warm = finish(warm, ks);
  return r;
}

EvalReport evaluate(const model::CoupleParams& params, const datakit::SplitResult& split,
                    const datakit::ItemCatalog& catalog, const std::vector<std::size_t>& ks,
                    std::uint64_t seed, std::size_t workers) {
  if (params.tag_count() != catalog.tag_count()) {
    throw ValidationError("model was trained on " + std::to_string(params.tag_count()) +
                          " tags but the catalog has " + std::to_string(catalog.tag_count()));
  }
  const std::size_t d = params.config().dim;

  datakit::SplitResult cases = split;
  std::vector<std::vector<std::size_t>> histories;
  std::vector<std::size_t> row_of(cases.cases.size(), 0);
  for (std::size_t i = 0; i < cases.cases.size(); ++i) {
    auto& tc = cases.cases[i];
    if (tc.skipped) continue;
    if (tc.history.empty()) {
      tc.skipped = true;
      tc.skip_reason = "empty history";
      continue;
    }
    row_of[i] = histories.size();
    histories.push_back(tc.history);
  }

  numerics::Tensor users({std::max<std::size_t>(histories.size(), 1), d});
  if (!histories.empty()) {
    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (histories.size() + kChunk - 1) / kChunk;
    const auto work = [&](std::size_t c) {
      const std::size_t begin = c * kChunk, end = std::min(histories.size(), begin + kChunk);
      const std::vector<std::vector<std::size_t>> part(histories.begin() + static_cast<std::ptrdiff_t>(begin),
                                                       histories.begin() + static_cast<std::ptrdiff_t>(end));
      const numerics::Tensor u = model::infer_users(params, catalog, part, kChunk);
      std::copy(u.data().begin(), u.data().end(), users.data().begin() + static_cast<std::ptrdiff_t>(begin * d));
    };
    const std::size_t threads = std::clamp<std::size_t>(workers, 1, chunks);
    if (threads == 1) {
      for (std::size_t c = 0; c < chunks; ++c) work(c);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(threads);
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t c = t; c < chunks; c += threads) work(c);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
  }

  std::vector<std::size_t> all_items(catalog.size());
  for (std::size_t i = 0; i < all_items.size(); ++i) all_items[i] = i;
  const numerics::Tensor items = model::infer_items(params, catalog, all_items);

  EvalReport r = score_cases(cases, ks, [&](std::size_t i, const datakit::TestCase& tc, std::vector<double>& s) {
    const auto u = users.row(row_of[i]);
    for (std::size_t c = 0; c < tc.candidates.size(); ++c) {
      const auto v = items.row(tc.candidates[c]);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += u[j] * v[j];
      s[c] = acc;
    }
  });
  r.model = "couple";
  r.seed = seed;
  return r;
}

BaselineKind parse_baseline(const std::string& name) {
  if (name == "random") return BaselineKind::kRandom;
  if (name == "popularity") return BaselineKind::kPopularity;
  throw ValidationError("unknown baseline kind '" + name + "' (expected random or popularity)");
}

EvalReport baseline_scores(BaselineKind kind, const datakit::SplitResult& split,
                           const datakit::ItemCatalog& catalog, const std::vector<std::size_t>& ks,
                           std::uint64_t seed) {
  const auto counts = split.train.item_counts(catalog.size());
  EvalReport r = score_cases(split, ks, [&](std::size_t i, const datakit::TestCase& tc, std::vector<double>& s) {
    if (kind == BaselineKind::kRandom) {
      auto gen = numerics::make_stream(seed, numerics::Stream::kBaseline, i);
      for (double& x : s) x = numerics::uniform_open(gen);
    } else {
      for (std::size_t c = 0; c < tc.candidates.size(); ++c) s[c] = static_cast<double>(counts[tc.candidates[c]]);
    }
  });
  r.model = kind == BaselineKind::kRandom ? "random" : "popularity";
  r.seed = seed;
  return r;
}

}  // namespace couple::evalkit
