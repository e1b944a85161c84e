#include <doctest.h>

#include <cmath>
#include <random>

#include "couple/datakit/catalog.hpp"
#include "couple/encoder/encoder.hpp"
#include "couple/errors.hpp"
#include "couple/numerics/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace couple;
using namespace couple::encoder;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;

namespace {

using Vec = std::vector<double>;

Tensor random_tensor(Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& x : t.data()) x = u(gen);
  return t;
}

// Catalog whose tag indices equal the numeric names: item "iK" has tags listed.
datakit::ItemCatalog catalog_with(std::size_t tags, const std::vector<std::vector<std::size_t>>& items,
                                  const std::vector<std::size_t>& domains) {
  datakit::ItemCatalog c;
  for (std::size_t t = 0; t < tags; ++t) c.intern_tag("t" + std::to_string(t));
  for (std::size_t i = 0; i < items.size(); ++i) {
    c.add_item_indexed("i" + std::to_string(i), domains[i], items[i]);
  }
  return c;
}

Vec row_times(const Vec& x, const Tensor& w) {  // x [d_in] times w [d_in, d_out]
  Vec out(w.dim(1), 0.0);
  for (std::size_t i = 0; i < w.dim(0); ++i) {
    for (std::size_t j = 0; j < w.dim(1); ++j) out[j] += x[i] * w.at(i, j);
  }
  return out;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct BlockWeights {
  std::vector<Tensor> q, k, v;
  Tensor gain, bias, w1, b1, w2, b2;
};

BlockWeights random_block(std::size_t heads, std::size_t d, std::mt19937_64& gen) {
  BlockWeights w;
  for (std::size_t h = 0; h < heads; ++h) {
    w.q.push_back(random_tensor({d, d}, gen, 0.5));
    w.k.push_back(random_tensor({d, d}, gen, 0.5));
    w.v.push_back(random_tensor({d, d}, gen, 0.5));
  }
  w.gain = random_tensor({d}, gen);
  w.bias = random_tensor({d}, gen);
  w.w1 = random_tensor({d, d}, gen, 0.5);
  w.b1 = random_tensor({d}, gen);
  w.w2 = random_tensor({d, d}, gen, 0.5);
  w.b2 = random_tensor({d}, gen);
  return w;
}

AttentionVars record_block(Tape& t, const BlockWeights& w) {
  AttentionVars a;
  for (std::size_t h = 0; h < w.q.size(); ++h) {
    a.query.push_back(t.leaf(w.q[h]));
    a.key.push_back(t.leaf(w.k[h]));
    a.value.push_back(t.leaf(w.v[h]));
  }
  a.ln_gain = t.leaf(w.gain);
  a.ln_bias = t.leaf(w.bias);
  a.ffn_w1 = t.leaf(w.w1);
  a.ffn_b1 = t.leaf(w.b1);
  a.ffn_w2 = t.leaf(w.w2);
  a.ffn_b2 = t.leaf(w.b2);
  return a;
}

// Full causal block on one sequence of `n` live rows, evaluated at every
// position; returns the per-head outputs at position n-1.
std::vector<Vec> block_oracle(const std::vector<Vec>& xs, const BlockWeights& w) {
  const std::size_t n = xs.size(), d = xs[0].size();
  std::vector<std::vector<Vec>> all(n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t h = 0; h < w.q.size(); ++h) {
      const Vec q = row_times(xs[p], w.q[h]);
      Vec s;
      for (std::size_t j = 0; j <= p; ++j) s.push_back(dot(q, row_times(xs[j], w.k[h])) / std::sqrt(double(d)));
      const Vec a = oracle::softmax(s);
      Vec o(d, 0.0);
      for (std::size_t j = 0; j <= p; ++j) {
        const Vec v = row_times(xs[j], w.v[h]);
        for (std::size_t c = 0; c < d; ++c) o[c] += a[j] * v[c];
      }
      for (std::size_t c = 0; c < d; ++c) o[c] += xs[p][c];
      double mean = 0.0, var = 0.0;
      for (double x : o) mean += x / d;
      for (double x : o) var += (x - mean) * (x - mean) / d;
      Vec z(d);
      for (std::size_t c = 0; c < d; ++c) z[c] = (o[c] - mean) / std::sqrt(var + 1e-6) * w.gain[c] + w.bias[c];
      Vec hid = row_times(z, w.w1);
      for (std::size_t c = 0; c < d; ++c) hid[c] = std::max(0.0, hid[c] + w.b1[c]);
      const Vec f = row_times(hid, w.w2);
      Vec out(d);
      for (std::size_t c = 0; c < d; ++c) out[c] = z[c] + f[c] + w.b2[c];
      all[p].push_back(out);
    }
  }
  return all[n - 1];
}

Tensor to_rows(const std::vector<Vec>& rows, std::size_t l) {
  const std::size_t d = rows[0].size();
  Tensor t({1, l, d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) t.at(i, c) = rows[i][c];
  }
  return t;
}

SequenceBatch live_rows(std::size_t live, std::size_t l) {
  SequenceBatch b;
  b.batch = 1;
  b.length = l;
  b.tags = 1;
  b.tag_ids.assign(l, 0);
  b.tag_mask.assign(l, 0);
  b.item_mask.assign(l, 0);
  b.domain_ids.assign(l, 0);
  for (std::size_t i = 0; i < live; ++i) b.tag_mask[i] = b.item_mask[i] = 1;
  return b;
}

}  // namespace

TEST_CASE("sequence batches keep the latest items and left-align") {
  const auto c = catalog_with(6, {{0, 1, 2}, {3}, {4, 5}, {1}}, {0, 0, 1, 1});
  const auto b = make_sequence_batch(c, {{0, 1, 2, 3}, {2}}, 3, 2);
  CHECK(b.batch == 2);
  CHECK(b.row_length(0) == 3);
  CHECK(b.row_length(1) == 1);
  // Row 0 keeps items 1, 2, 3; item 1 has one tag.
  CHECK(b.tag_ids[0] == 3);
  CHECK(b.tag_mask[1] == 0);
  CHECK(b.tag_ids[2] == 4);
  CHECK(b.tag_ids[3] == 5);
  CHECK(b.domain_ids[1] == 1);
  CHECK(b.item_mask[3 + 1] == 0);
  CHECK_THROWS_AS(make_sequence_batch(c, {{}}, 3, 2), ValidationError);
  auto bad = b;
  bad.item_mask[1] = 0;  // gap before a live item
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("item embedding is the tag mean and adds the domain row in training") {
  const auto c = catalog_with(3, {{0}, {0, 0}, {1, 2}}, {0, 1, 1});
  Tape t;
  const auto tags = t.leaf(Tensor::matrix(3, 2, {1, 0, 0, 1, 0.25, 0.75}));
  const auto doms = t.leaf(Tensor::matrix(2, 2, {10, 20, 30, 40}));
  const EmbeddingVars ev{tags, doms};
  const auto batch = make_item_batch(c, {0, 1, 2}, 4);
  const auto off = embed_items(ev, batch, false).value();
  CHECK(off.data()[0] == 1.0);
  CHECK(off.data()[1] == 0.0);
  CHECK(off.data()[2] == 1.0);  // identical tags
  CHECK(off.data()[3] == 0.0);
  CHECK(off.data()[4] == doctest::Approx(0.125));
  CHECK(off.data()[5] == doctest::Approx(0.875));

  const auto e = make_item_batch(catalog_with(2, {{0, 1}}, {0}), {0}, 2);
  Tape t2;
  const EmbeddingVars half{t2.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1})), t2.leaf(Tensor::matrix(1, 2, {0, 0}))};
  const auto mean = embed_items(half, e, false).value();
  CHECK(mean.data()[0] == 0.5);
  CHECK(mean.data()[1] == 0.5);

  const auto on = embed_items(ev, batch, true).value();
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t dom = c.item(i).domain;
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(on.data()[i * 2 + j] == off.data()[i * 2 + j] + doms.value().at(dom, j));
    }
  }
}

TEST_CASE("item embedding stays in the convex hull of its tags") {
  std::mt19937_64 gen(5);
  const auto c = catalog_with(8, {{0, 3, 5}, {1, 2, 4, 6, 7}}, {0, 0});
  Tape t;
  const auto table = random_tensor({8, 3}, gen);
  const EmbeddingVars ev{t.leaf(table), t.leaf(Tensor({1, 3}))};
  const auto out = embed_items(ev, make_item_batch(c, {0, 1}, 5), false).value();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double lo = 1e9, hi = -1e9;
      for (auto tag : c.item(i).tags) {
        lo = std::min(lo, table.at(tag, j));
        hi = std::max(hi, table.at(tag, j));
      }
      CHECK(out.data()[i * 3 + j] >= lo - 1e-15);
      CHECK(out.data()[i * 3 + j] <= hi + 1e-15);
    }
  }
}

TEST_CASE("history block matches a full causal block at the last position") {
  std::mt19937_64 gen(11);
  const std::size_t d = 6, l = 5, heads = 3;
  const auto w = random_block(heads, d, gen);
  for (std::size_t live : {1u, 3u, 5u}) {
    std::vector<Vec> xs(live, Vec(d));
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& r : xs) for (double& x : r) x = u(gen);
    Tape t;
    const auto attn = record_block(t, w);
    const auto out = encode_history(attn, t.constant(to_rows(xs, l)), live_rows(live, l)).value();
    const auto expect = block_oracle(xs, w);
    REQUIRE(out.shape() == Shape{1, heads, d});
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t c = 0; c < d; ++c) CHECK(out.at(h, c) == doctest::Approx(expect[h][c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("padding positions do not change history outputs") {
  std::mt19937_64 gen(12);
  const std::size_t d = 4, heads = 2;
  const auto w = random_block(heads, d, gen);
  std::vector<Vec> xs(3, Vec(d));
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& r : xs) for (double& x : r) x = u(gen);
  Tape t;
  const auto attn = record_block(t, w);
  const auto short_out = encode_history(attn, t.constant(to_rows(xs, 3)), live_rows(3, 3)).value();
  auto padded = to_rows(xs, 7);
  for (std::size_t i = 3; i < 7; ++i) for (std::size_t c = 0; c < d; ++c) padded.at(i, c) = 50.0 * u(gen);
  const auto long_out = encode_history(attn, t.constant(padded), live_rows(3, 7)).value();
  for (std::size_t i = 0; i < short_out.size(); ++i) CHECK(std::abs(short_out[i] - long_out[i]) <= 1e-10);
}

TEST_CASE("single-item rows with identical items give identical outputs") {
  std::mt19937_64 gen(13);
  const std::size_t d = 4;
  const auto w = random_block(2, d, gen);
  const auto c = catalog_with(3, {{0, 1}, {2}}, {0, 0});
  Tape t;
  const auto attn = record_block(t, w);
  const EmbeddingVars ev{t.leaf(random_tensor({3, d}, gen)), t.leaf(random_tensor({1, d}, gen))};
  const auto batch = make_sequence_batch(c, {{0}, {0}, {1}}, 1, 2);
  const auto out = encode_history(attn, embed_items(ev, batch, false), batch).value();
  for (std::size_t i = 0; i < 2 * d; ++i) CHECK(out.data()[i] == out.data()[2 * d + i]);
}

TEST_CASE("history block gradients pass central differences") {
  std::mt19937_64 gen(14);
  const std::size_t d = 8, heads = 2;
  const auto c = catalog_with(5, {{0, 1}, {2}, {3, 4}, {1, 3}}, {0, 1, 0, 1});
  const auto batch = make_sequence_batch(c, {{0, 1, 2}, {3, 1}}, 3, 2);
  const auto w = random_block(heads, d, gen);
  std::vector<Tensor> params{random_tensor({5, d}, gen), random_tensor({2, d}, gen)};
  for (std::size_t h = 0; h < heads; ++h) {
    params.push_back(w.q[h]);
    params.push_back(w.k[h]);
    params.push_back(w.v[h]);
  }
  for (const auto* x : {&w.gain, &w.bias, &w.w1, &w.b1, &w.w2, &w.b2}) params.push_back(*x);
  const Tensor probe = random_tensor({2, heads, d}, gen);
  const auto f = [&](Tape& t, std::span<const Var> p) {
    AttentionVars a;
    std::size_t i = 2;
    for (std::size_t h = 0; h < heads; ++h) {
      a.query.push_back(p[i++]);
      a.key.push_back(p[i++]);
      a.value.push_back(p[i++]);
    }
    a.ln_gain = p[i++];
    a.ln_bias = p[i++];
    a.ffn_w1 = p[i++];
    a.ffn_b1 = p[i++];
    a.ffn_w2 = p[i++];
    a.ffn_b2 = p[i++];
    const auto x = embed_items({p[0], p[1]}, batch, true);
    return numerics::dot(encode_history(a, x, batch), t.constant(probe));
  };
  CHECK(numerics::finite_diff_check(f, params, 1e-5) <= 1e-4);
}

TEST_CASE("weighted aggregation worked values") {
  Tape t;
  const auto eye = t.leaf(Tensor::identity(2));
  const auto in = t.constant(Tensor({1, 2, 2}, {1, 0, 0, 1}));
  const auto out = weighted_aggregate(in, eye).value();
  CHECK(out.data()[0] == doctest::Approx(0.5));
  CHECK(out.data()[1] == doctest::Approx(0.5));

  std::mt19937_64 gen(3);
  const auto single = random_tensor({2, 1, 4}, gen);
  const auto one = weighted_aggregate(t.constant(single), t.leaf(random_tensor({4, 4}, gen))).value();
  for (std::size_t i = 0; i < single.size(); ++i) CHECK(one.data()[i] == single[i]);

  const auto many = random_tensor({1, 5, 3}, gen);
  const auto mean = weighted_aggregate(t.constant(many), t.leaf(Tensor({3, 3}))).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (std::size_t k = 0; k < 5; ++k) m += many.at(k, c) / 5.0;
    CHECK(mean.data()[c] == doctest::Approx(m).epsilon(1e-14));
  }
}

TEST_CASE("weighted aggregation matches a scalar oracle and stays convex") {
  std::mt19937_64 gen(21);
  const std::size_t m = 4, d = 3;
  const auto vecs = random_tensor({2, m, d}, gen);
  const auto M = random_tensor({d, d}, gen);
  Tape t;
  const auto out = weighted_aggregate(t.constant(vecs), t.leaf(M)).value();
  for (std::size_t b = 0; b < 2; ++b) {
    Vec mean(d, 0.0);
    for (std::size_t k = 0; k < m; ++k) for (std::size_t c = 0; c < d; ++c) mean[c] += vecs.at(b * m + k, c) / m;
    Vec me(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) for (std::size_t c = 0; c < d; ++c) me[r] += M.at(r, c) * mean[c];
    Vec s;
    for (std::size_t k = 0; k < m; ++k) {
      Vec e(vecs.row(b * m + k).begin(), vecs.row(b * m + k).end());
      s.push_back(dot(e, me));
    }
    const Vec a = oracle::softmax(s);
    double total = 0.0;
    for (double x : a) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (std::size_t c = 0; c < d; ++c) {
      double expect = 0.0, lo = 1e9, hi = -1e9;
      for (std::size_t k = 0; k < m; ++k) {
        expect += a[k] * vecs.at(b * m + k, c);
        lo = std::min(lo, vecs.at(b * m + k, c));
        hi = std::max(hi, vecs.at(b * m + k, c));
      }
      CHECK(out.at(b, c) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(out.at(b, c) >= lo - 1e-12);
      CHECK(out.at(b, c) <= hi + 1e-12);
    }
  }
}

TEST_CASE("content encoder weights repeated tags by their count") {
  // Items {x}, {x}, {y}: three positions, W = 0 makes every logit equal.
  const auto c = catalog_with(2, {{0}, {0}, {1}}, {0, 0, 0});
  const auto batch = make_sequence_batch(c, {{0, 1, 2}}, 3, 1);
  Tape t;
  const auto table = Tensor::matrix(2, 2, {3, 0, 0, 6});
  const auto out = encode_content(t.leaf(table), t.leaf(Tensor({2, 2})), t.leaf(Tensor({2})), batch,
                                  t.constant(Tensor({1, 2}, {0.3, -0.2})))
                       .value();
  CHECK(out.data()[0] == doctest::Approx(2.0 / 3.0 * 3.0));
  CHECK(out.data()[1] == doctest::Approx(1.0 / 3.0 * 6.0));

  // Same tag everywhere: exactly that row, for any weights.
  std::mt19937_64 gen(4);
  const auto same = make_sequence_batch(catalog_with(2, {{1}, {1, 1}}, {0, 0}), {{0, 1}}, 2, 2);
  const auto tab = random_tensor({2, 3}, gen);
  const auto o2 = encode_content(t.leaf(tab), t.leaf(random_tensor({3, 3}, gen)), t.leaf(random_tensor({3}, gen)),
                                 same, t.constant(random_tensor({1, 3}, gen)))
                      .value();
  for (std::size_t j = 0; j < 3; ++j) CHECK(o2.data()[j] == doctest::Approx(tab.at(1, j)).epsilon(1e-15));
}

TEST_CASE("content coefficient of a k-times tag is k times a single occurrence") {
  std::mt19937_64 gen(8);
  const std::size_t d = 4;
  // Tag 0 three times, tag 1 once, tag 2 twice across items.
  const auto c = catalog_with(3, {{0, 1}, {0, 2}, {0, 2}}, {0, 0, 0});
  const auto batch = make_sequence_batch(c, {{0, 1, 2}}, 3, 2);
  const auto table = random_tensor({3, d}, gen);
  const auto W = random_tensor({d, d}, gen);
  const auto bvec = random_tensor({d}, gen);
  const auto hist = random_tensor({1, d}, gen);
  // Per-tag softmax weight from the scalar definition.
  Vec logit(3);
  for (std::size_t tag = 0; tag < 3; ++tag) {
    Vec h(d);
    for (std::size_t r = 0; r < d; ++r) {
      double s = bvec[r];
      for (std::size_t k = 0; k < d; ++k) s += W.at(r, k) * table.at(tag, k);
      h[r] = std::tanh(s);
    }
    Vec hv(hist.data().begin(), hist.data().end());
    logit[tag] = dot(hv, h);
  }
  const std::vector<int> counts{3, 1, 2};
  double z = 0.0;
  for (std::size_t tag = 0; tag < 3; ++tag) z += counts[tag] * std::exp(logit[tag]);
  Tape t;
  const auto out = encode_content(t.leaf(table), t.leaf(W), t.leaf(bvec), batch, t.constant(hist)).value();
  for (std::size_t j = 0; j < d; ++j) {
    double expect = 0.0;
    for (std::size_t tag = 0; tag < 3; ++tag) expect += counts[tag] * std::exp(logit[tag]) / z * table.at(tag, j);
    CHECK(out.data()[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("content encoder gradients pass central differences") {
  std::mt19937_64 gen(9);
  const std::size_t d = 8;
  const auto c = catalog_with(6, {{0, 1}, {2, 3}, {4, 5}, {1, 4}}, {0, 0, 1, 1});
  const auto batch = make_sequence_batch(c, {{0, 1, 2}, {3}}, 3, 2);
  std::vector<Tensor> params{random_tensor({6, d}, gen), random_tensor({d, d}, gen), random_tensor({d}, gen),
                             random_tensor({2, d}, gen)};
  const Tensor probe = random_tensor({2, d}, gen);
  const auto f = [&](Tape& t, std::span<const Var> p) {
    return numerics::dot(encode_content(p[0], p[1], p[2], batch, p[3]), t.constant(probe));
  };
  CHECK(numerics::finite_diff_check(f, params, 1e-5) <= 1e-4);
}
