#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "couple/datakit/catalog.hpp"
#include "couple/datakit/manifest.hpp"
#include "couple/datakit/split.hpp"
#include "couple/datakit/synth.hpp"
#include "couple/errors.hpp"
#include "support/tempdir.hpp"

using namespace couple;
using namespace couple::datakit;
using testing::TempDir;
using testing::write_file;

namespace {

// Small catalog: domain 0 items s0..s9, domain 1 items t0..t149.
ItemCatalog toy_catalog(std::size_t target_items = 150) {
  ItemCatalog c;
  for (int i = 0; i < 10; ++i) c.add_item("s" + std::to_string(i), 0, {"x", "tag" + std::to_string(i % 3)});
  for (std::size_t i = 0; i < target_items; ++i) {
    c.add_item("t" + std::to_string(i), 1, {"y", "tag" + std::to_string(i % 5)});
  }
  return c;
}

SyntheticConfig small_synth() {
  SyntheticConfig s;
  s.users_per_group = 60;
  s.items_per_domain = 300;
  return s;
}

}  // namespace

TEST_CASE("two-line catalog interns tags in first-seen order") {
  TempDir dir;
  write_file(dir / "c.tsv", "# header comment\nA\t0\tx,y\nB\t1\ty,z\n");
  const auto c = load_catalog(dir / "c.tsv");
  CHECK(c.size() == 2);
  CHECK(c.tag_count() == 3);
  CHECK(c.domain_count() == 2);
  CHECK(c.tag_names() == std::vector<std::string>{"x", "y", "z"});
  CHECK(c.item(1).tags == std::vector<std::size_t>{1, 2});
}

TEST_CASE("catalog errors name the line") {
  TempDir dir;
  write_file(dir / "dup.tsv", "A\t0\tx\nB\t0\tx\nC\t0\tx\nD\t0\tx\nA\t1\ty\n");
  try {
    load_catalog(dir / "dup.tsv");
    FAIL("duplicate accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":5:") != std::string::npos);
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
  write_file(dir / "empty_tags.tsv", "A\t0\t , \n");
  CHECK_THROWS_AS(load_catalog(dir / "empty_tags.tsv"), ValidationError);
  write_file(dir / "bad_domain.tsv", "A\tzero\tx\n");
  CHECK_THROWS_AS(load_catalog(dir / "bad_domain.tsv"), ValidationError);
  CHECK_THROWS_AS(load_catalog(dir / "missing.tsv"), IoError);
}

TEST_CASE("generated catalog round-trips through TSV") {
  auto cfg = small_synth();
  cfg.items_per_domain = 500;
  const auto data = synth_generate(cfg);
  REQUIRE(data.catalog.size() == 1000);
  TempDir dir;
  write_catalog(data.catalog, dir / "c.tsv", {"seed=7"});
  const auto back = load_catalog(dir / "c.tsv");
  CHECK(back == data.catalog);
  write_interactions(data.log, data.catalog, dir / "i.tsv");
  const auto log = load_interactions(dir / "i.tsv", back);
  CHECK(log.events().size() == data.log.events().size());
  CHECK(log.sequences(back).size() == data.log.sequences(data.catalog).size());
}

TEST_CASE("interaction loading validates ids and timestamps") {
  TempDir dir;
  const auto c = toy_catalog();
  write_file(dir / "empty.tsv", "");
  CHECK(load_interactions(dir / "empty.tsv", c).empty());
  write_file(dir / "unknown.tsv", "u1\tnope\t3\n");
  try {
    load_interactions(dir / "unknown.tsv", c);
    FAIL("unknown item accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("nope") != std::string::npos);
  }
  write_file(dir / "ts.tsv", "u1\tt1\t-4\n");
  CHECK_THROWS_AS(load_interactions(dir / "ts.tsv", c), ValidationError);
  write_file(dir / "ts2.tsv", "u1\tt1\t4x\n");
  CHECK_THROWS_AS(load_interactions(dir / "ts2.tsv", c), ValidationError);
}

TEST_CASE("shuffled and sorted files give the same sequences") {
  const auto data = synth_generate(small_synth());
  auto events = data.log.events();
  std::mt19937_64 gen(3);
  std::shuffle(events.begin(), events.end(), gen);
  InteractionLog shuffled = data.log.with_same_users();
  for (const auto& e : events) shuffled.add(e.user, e.item, e.timestamp);
  const auto a = data.log.sequences(data.catalog);
  const auto b = shuffled.sequences(data.catalog);
  REQUIRE(a.size() == b.size());
  for (std::size_t u = 0; u < a.size(); ++u) {
    REQUIRE(a[u].size() == b[u].size());
    for (std::size_t i = 0; i < a[u].size(); ++i) {
      CHECK(a[u][i].item == b[u][i].item);
      if (i) CHECK(a[u][i - 1].timestamp <= a[u][i].timestamp);
    }
  }
}

TEST_CASE("timestamp ties break by item id") {
  ItemCatalog c;
  c.add_item("b", 0, {"x"});
  c.add_item("a", 1, {"x"});
  InteractionLog log;
  const auto u = log.intern_user("u");
  log.add(u, 0, 5);
  log.add(u, 1, 5);
  const auto seq = log.sequences(c)[0];
  CHECK(seq[0].item == 1);
  CHECK(seq[1].item == 0);
}

TEST_CASE("leave-one-out picks the last target item") {
  ItemCatalog c;
  c.add_item("a", 0, {"x"});
  c.add_item("b", 1, {"x"});
  c.add_item("c", 1, {"y"});
  InteractionLog log;
  const auto u = log.intern_user("u");
  log.add(u, 0, 1);
  log.add(u, 1, 2);
  log.add(u, 2, 3);

  const auto warm = leave_one_out_split(log, c, 1, 0.0, 1);
  REQUIRE(warm.cases.size() == 1);
  CHECK(warm.cases[0].truth == 2);
  CHECK(warm.cases[0].history == std::vector<std::size_t>{0, 1});
  CHECK_FALSE(warm.cases[0].cold);

  const auto cold = leave_one_out_split(log, c, 1, 1.0, 1);
  CHECK(cold.cases[0].cold);
  CHECK(cold.cases[0].history == std::vector<std::size_t>{0});
  for (const auto& e : cold.train.events()) CHECK(e.item != 2);
}

TEST_CASE("split with no eligible user is an error") {
  ItemCatalog c;
  c.add_item("a", 0, {"x"});
  InteractionLog log;
  log.add(log.intern_user("u"), 0, 1);
  CHECK_THROWS_AS(leave_one_out_split(log, c, 1, 0.5, 1), ValidationError);
  CHECK_THROWS_AS(leave_one_out_split(log, c, 0, 1.5, 1), ValidationError);
}

TEST_CASE("split hygiene on generated data") {
  const auto data = synth_generate(small_synth());
  const auto split = leave_one_out_split(data.log, data.catalog, 1, 0.5, 11);
  const std::unordered_set<std::size_t> cold_items(split.cold_items.begin(), split.cold_items.end());
  for (const auto& e : split.train.events()) REQUIRE_FALSE(cold_items.count(e.item));
  std::size_t flagged = 0;
  for (const auto& tc : split.cases) {
    CHECK(cold_items.count(tc.truth));
    CHECK(std::find(tc.history.begin(), tc.history.end(), tc.truth) == tc.history.end());
    const bool has_target = std::any_of(tc.history.begin(), tc.history.end(), [&](std::size_t i) {
      return data.catalog.item(i).domain == 1;
    });
    if (tc.cold) {
      ++flagged;
      CHECK_FALSE(has_target);
    }
  }
  CHECK(flagged == static_cast<std::size_t>(std::llround(0.5 * split.cases.size())));
}

TEST_CASE("cold flag count for 10000 eligible users") {
  ItemCatalog c;
  c.add_item("a", 0, {"x"});
  c.add_item("b", 1, {"x"});
  InteractionLog log;
  for (int u = 0; u < 10000; ++u) {
    const auto id = log.intern_user("u" + std::to_string(u));
    log.add(id, 0, 1);
    log.add(id, 1, 2);
  }
  const auto split = leave_one_out_split(log, c, 1, 0.5, 99);
  const auto flagged = std::count_if(split.cases.begin(), split.cases.end(),
                                     [](const TestCase& t) { return t.cold; });
  CHECK(flagged >= 4800);
  CHECK(flagged <= 5200);
}

TEST_CASE("negatives exhaust a pool of exactly 100") {
  const auto c = toy_catalog(101);
  std::vector<std::size_t> counts(c.size(), 1);
  const std::size_t truth = 10;  // t0
  const auto neg = sample_eval_negatives(c, 1, {}, truth, counts, 50, 50, 4);
  REQUIRE(neg.size() == 100);
  std::set<std::size_t> uniq(neg.begin(), neg.end());
  CHECK(uniq.size() == 100);
  CHECK_FALSE(uniq.count(truth));
}

TEST_CASE("negatives avoid history and truth and report small pools") {
  const auto c = toy_catalog();
  std::vector<std::size_t> counts(c.size(), 0);
  std::vector<std::size_t> seen{0, 11, 12, 13};
  const std::size_t truth = 20;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto neg = sample_eval_negatives(c, 1, seen, truth, counts, 20, 20, seed);
    CHECK(std::set<std::size_t>(neg.begin(), neg.end()).size() == 40);
    for (auto i : neg) {
      CHECK(c.item(i).domain == 1);
      CHECK(i != truth);
      CHECK(std::find(seen.begin(), seen.end(), i) == seen.end());
    }
  }
  try {
    sample_eval_negatives(c, 1, seen, truth, counts, 100, 100, 1);
    FAIL("small pool accepted");
  } catch (const PoolTooSmall& e) {
    CHECK(e.pool_size == 146);
  }
}

TEST_CASE("popularity distribution sums to one with +1 smoothing") {
  const std::vector<std::size_t> pool{0, 1, 2, 3};
  const std::vector<std::size_t> counts{0, 3, 10, 1};
  const auto p = popularity_distribution(pool, counts);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(1.0 / 18.0));
  CHECK(p[2] == doctest::Approx(11.0 / 18.0));
}

TEST_CASE("a dominant item almost always enters the popular half") {
  const auto c = toy_catalog();
  const std::size_t truth = 10;
  std::vector<std::size_t> counts(c.size(), 0);
  const std::size_t heavy = 50;
  // 90% of the smoothed mass over the 149-item pool.
  counts[heavy] = 9 * 148 - 1;
  double mass = 0.0;
  const auto pool = candidate_pool(c, 1, {}, truth);
  const auto p = popularity_distribution(pool, counts);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i] == heavy) mass = p[i];
  }
  REQUIRE(mass == doctest::Approx(0.9).epsilon(1e-9));
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto neg = sample_eval_negatives(c, 1, {}, truth, counts, 0, 5, seed);
    hits += std::find(neg.begin(), neg.end(), heavy) != neg.end();
  }
  CHECK(hits / 10000.0 >= 0.95);
}

TEST_CASE("attached candidates hold the truth at truth_index") {
  const auto data = synth_generate(small_synth());
  auto split = leave_one_out_split(data.log, data.catalog, 1, 0.5, 3);
  attach_candidates(split, data.log, data.catalog);
  std::set<std::size_t> slots;
  for (const auto& tc : split.cases) {
    REQUIRE_FALSE(tc.skipped);
    REQUIRE(tc.candidates.size() == 101);
    CHECK(tc.candidates[tc.truth_index] == tc.truth);
    CHECK(std::set<std::size_t>(tc.candidates.begin(), tc.candidates.end()).size() == 101);
    slots.insert(tc.truth_index);
  }
  CHECK(slots.size() > 50);
}

TEST_CASE("split directory round-trips") {
  const auto data = synth_generate(small_synth());
  auto split = leave_one_out_split(data.log, data.catalog, 1, 0.5, 3);
  attach_candidates(split, data.log, data.catalog);
  TempDir dir;
  write_split_dir(dir.path(), data.catalog, split, {{"seed", "3"}, {"cold_fraction", "0.5"}});
  const auto back = load_split_dir(dir.path());
  CHECK(back.catalog == data.catalog);
  CHECK(back.config.at("seed") == "3");
  CHECK(testing::slurp(dir / "train.tsv").rfind("# cold_fraction=0.5\n# seed=3\n", 0) == 0);
  REQUIRE(back.split.cases.size() == split.cases.size());
  CHECK(back.split.train.events().size() == split.train.events().size());
  for (std::size_t i = 0; i < split.cases.size(); ++i) {
    const auto& a = split.cases[i];
    const auto& b = back.split.cases[i];
    CHECK(back.split.train.user_name(b.user) == split.train.user_name(a.user));
    CHECK(a.history == b.history);
    CHECK(a.truth == b.truth);
    CHECK(a.cold == b.cold);
    CHECK(a.candidates == b.candidates);
    CHECK(a.truth_index == b.truth_index);
  }
  CHECK(back.split.cold_items == split.cold_items);
}

TEST_CASE("synthetic generator is deterministic") {
  const auto a = synth_generate(small_synth());
  const auto b = synth_generate(small_synth());
  CHECK(a.catalog == b.catalog);
  REQUIRE(a.log.events().size() == b.log.events().size());
  for (std::size_t i = 0; i < a.log.events().size(); ++i) {
    CHECK(a.log.events()[i].item == b.log.events()[i].item);
    CHECK(a.log.events()[i].timestamp == b.log.events()[i].timestamp);
  }
}

TEST_CASE("degenerate config puts every item on the group profile") {
  auto cfg = small_synth();
  cfg.noise = 0.0;
  cfg.shared_fraction = 1.0;
  cfg.groups = 1;
  const auto data = synth_generate(cfg);
  for (std::size_t d = 0; d < 2; ++d) {
    const auto profile = group_profile(cfg, 0, d);
    std::set<std::size_t> idx;
    for (const auto& name : profile) {
      const auto& names = data.catalog.tag_names();
      idx.insert(std::find(names.begin(), names.end(), name) - names.begin());
    }
    for (const auto& e : data.log.events()) {
      const auto& item = data.catalog.item(e.item);
      if (item.domain != d) continue;
      CHECK(std::any_of(item.tags.begin(), item.tags.end(), [&](auto t) { return idx.count(t); }));
    }
  }
}

TEST_CASE("most interactions match the user's own group profile") {
  SyntheticConfig cfg;  // G=4, noise 0.1
  const auto data = synth_generate(cfg);
  std::vector<std::vector<std::set<std::size_t>>> profiles(cfg.groups, std::vector<std::set<std::size_t>>(2));
  const auto& names = data.catalog.tag_names();
  for (std::size_t g = 0; g < cfg.groups; ++g) {
    for (std::size_t d = 0; d < 2; ++d) {
      for (const auto& n : group_profile(cfg, g, d)) {
        profiles[g][d].insert(std::find(names.begin(), names.end(), n) - names.begin());
      }
    }
  }
  std::size_t match = 0;
  for (const auto& e : data.log.events()) {
    const auto& item = data.catalog.item(e.item);
    const auto& prof = profiles[data.user_group[e.user]][item.domain];
    match += std::any_of(item.tags.begin(), item.tags.end(), [&](auto t) { return prof.count(t); });
  }
  CHECK(static_cast<double>(match) / data.log.events().size() >= 0.85);
}

TEST_CASE("source domain is at least three times denser") {
  const auto data = synth_generate(small_synth());
  std::size_t src = 0, tgt = 0;
  for (const auto& e : data.log.events()) (data.catalog.item(e.item).domain == 0 ? src : tgt)++;
  CHECK(src >= 3 * tgt);
}

TEST_CASE("infeasible synthetic configs are rejected") {
  auto cfg = small_synth();
  cfg.tag_vocab = 2;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
  cfg = small_synth();
  cfg.noise = 1.5;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
  cfg = small_synth();
  cfg.groups = 0;
  CHECK_THROWS_AS(synth_generate(cfg), ValidationError);
}
