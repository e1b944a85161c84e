#include <algorithm>
#include <cmath>
#include <string>

#include "couple/errors.hpp"
#include "couple/numerics/tape.hpp"

namespace couple::numerics {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMulElem: return "mul_elem";
    case OpKind::kScale: return "scale";
    case OpKind::kTanh: return "tanh";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSoftmaxLastdim: return "softmax_lastdim";
    case OpKind::kMeanLastdim: return "mean_lastdim";
    case OpKind::kSum: return "sum";
    case OpKind::kConcatLastdim: return "concat_lastdim";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kDot: return "dot";
    case OpKind::kMaskedFill: return "masked_fill";
    case OpKind::kReshape: return "reshape";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_fail(OpKind kind, const std::string& what) {
  throw ShapeError(std::string(op_name(kind)) + ": " + what);
}

void expect_arity(OpKind kind, std::span<const Tensor* const> in, std::size_t n) {
  if (in.size() != n) {
    shape_fail(kind, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
  }
}

// ---------------------------------------------------------------- gemm

// C[m,n] += op(A)[m,k] * op(B)[k,n]. A is stored [m,k] or, transposed, [k,m];
// B is stored [k,n] or [n,k].
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const double* A, const double* B, double* C) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double a = A[i * k + p];
        if (a == 0.0) continue;
        const double* b = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* a = A + i * k;
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* b = B + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
        c[j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* b = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double a = A[p * m + i];
        if (a == 0.0) continue;
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += A[p * m + i] * B[j * k + p];
        C[i * n + j] += s;
      }
    }
  }
}

struct MatmulGeometry {
  std::size_t batch = 1;
  bool a_batched = false;
  bool b_batched = false;
  std::size_t m = 0, k = 0, n = 0;
  Shape out_shape;
};

MatmulGeometry matmul_geometry(const Tensor& a, const Tensor& b, const OpAttrs& at) {
  const auto kind = OpKind::kMatmul;
  if (a.rank() < 2 || b.rank() < 2) {
    shape_fail(kind, "operands must have rank >= 2, got " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  MatmulGeometry g;
  const std::size_t ar = a.rank(), br = b.rank();
  const std::size_t a0 = a.dim(ar - 2), a1 = a.dim(ar - 1);
  const std::size_t b0 = b.dim(br - 2), b1 = b.dim(br - 1);
  g.m = at.transpose_a ? a1 : a0;
  const std::size_t ka = at.transpose_a ? a0 : a1;
  const std::size_t kb = at.transpose_b ? b1 : b0;
  g.n = at.transpose_b ? b0 : b1;
  if (ka != kb) {
    shape_fail(kind, "inner extents differ (" + std::to_string(ka) + " vs " + std::to_string(kb) +
                         ") for " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  g.k = ka;
  Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  g.a_batched = !lead_a.empty();
  g.b_batched = !lead_b.empty();
  Shape lead;
  if (g.a_batched && g.b_batched) {
    if (lead_a != lead_b) {
      shape_fail(kind, "batch extents differ for " + shape_string(a.shape()) + " x " +
                           shape_string(b.shape()));
    }
    lead = lead_a;
  } else if (g.a_batched) {
    lead = lead_a;
  } else {
    lead = lead_b;
  }
  g.batch = shape_size(lead);
  g.out_shape = lead;
  g.out_shape.push_back(g.m);
  g.out_shape.push_back(g.n);
  return g;
}

Tensor matmul_forward(const Tensor& a, const Tensor& b, const OpAttrs& at) {
  const auto g = matmul_geometry(a, b, at);
  Tensor out(g.out_shape);
  const std::size_t sa = g.a_batched ? g.m * g.k : 0;
  const std::size_t sb = g.b_batched ? g.k * g.n : 0;
  for (std::size_t t = 0; t < g.batch; ++t) {
    gemm(at.transpose_a, at.transpose_b, g.m, g.n, g.k, a.data().data() + t * sa,
         b.data().data() + t * sb, out.data().data() + t * g.m * g.n);
  }
  return out;
}

void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& gout, const OpAttrs& at,
                Tensor* ga, Tensor* gb) {
  const auto g = matmul_geometry(a, b, at);
  const std::size_t sa = g.a_batched ? g.m * g.k : 0;
  const std::size_t sb = g.b_batched ? g.k * g.n : 0;
  const bool ta = at.transpose_a, tb = at.transpose_b;
  for (std::size_t t = 0; t < g.batch; ++t) {
    const double* A = a.data().data() + t * sa;
    const double* B = b.data().data() + t * sb;
    const double* G = gout.data().data() + t * g.m * g.n;
    if (ga) {
      double* dA = ga->data().data() + t * sa;
      if (!ta) {
        // dA[m,k] = G[m,n] op(B)^T
        gemm(false, !tb, g.m, g.k, g.n, G, B, dA);
      } else {
        // dA[k,m] = op(B)[k,n] G^T
        gemm(tb, true, g.k, g.m, g.n, B, G, dA);
      }
    }
    if (gb) {
      double* dB = gb->data().data() + t * sb;
      if (!tb) {
        // dB[k,n] = op(A)^T G
        gemm(!ta, false, g.k, g.n, g.m, A, G, dB);
      } else {
        // dB[n,k] = G^T op(A)
        gemm(true, ta, g.n, g.k, g.m, G, A, dB);
      }
    }
  }
}

// ---------------------------------------------------------------- broadcasting

Shape broadcast_shape(OpKind kind, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::size_t eb = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      shape_fail(kind, "cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::size_t> strides(r, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t oi = i + r - in.size();
    strides[oi] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <class Fn>
void visit_broadcast(const Shape& out, const Shape& as, const Shape& bs, Fn&& fn) {
  const std::size_t total = shape_size(out);
  if (as == bs) {
    for (std::size_t o = 0; o < total; ++o) fn(o, o, o);
    return;
  }
  const std::size_t na = shape_size(as), nb = shape_size(bs);
  if (nb == 1) {
    for (std::size_t o = 0; o < total; ++o) fn(o, o % na, 0);
    return;
  }
  if (na == 1) {
    for (std::size_t o = 0; o < total; ++o) fn(o, 0, o % nb);
    return;
  }
  const auto sa = broadcast_strides(as, out);
  const auto sb = broadcast_strides(bs, out);
  const std::size_t r = out.size();
  const std::size_t inner = out[r - 1];
  const std::size_t ia_step = sa[r - 1], ib_step = sb[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t o = 0;
  while (o < total) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d + 1 < r; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    for (std::size_t j = 0; j < inner; ++j) fn(o++, ia + j * ia_step, ib + j * ib_step);
    for (std::size_t d = r - 1; d-- > 0;) {
      if (++idx[d] < out[d]) break;
      idx[d] = 0;
    }
  }
}

// ---------------------------------------------------------------- helpers

std::size_t segment_width(OpKind kind, const Tensor& x, const OpAttrs& at) {
  const std::size_t last = x.last_dim();
  const std::size_t seg = at.segment == 0 ? last : at.segment;
  if (last % seg != 0) {
    shape_fail(kind, "segment " + std::to_string(seg) + " does not divide last extent " +
                         std::to_string(last));
  }
  return seg;
}

void check_same_leading(OpKind kind, std::span<const Tensor* const> in) {
  const Shape& s0 = in[0]->shape();
  for (const Tensor* t : in) {
    const Shape& s = t->shape();
    if (s.size() != s0.size() || s.empty() ||
        !std::equal(s.begin(), s.end() - 1, s0.begin())) {
      shape_fail(kind, "leading extents differ: " + shape_string(s0) + " vs " + shape_string(s));
    }
  }
}

}  // namespace

Tensor apply_primitive(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& at) {
  switch (kind) {
    case OpKind::kMatmul:
      expect_arity(kind, in, 2);
      return matmul_forward(*in[0], *in[1], at);

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMulElem: {
      expect_arity(kind, in, 2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      Tensor out(broadcast_shape(kind, a.shape(), b.shape()));
      auto o = out.data();
      auto x = a.data();
      auto y = b.data();
      if (kind == OpKind::kAdd) {
        visit_broadcast(out.shape(), a.shape(), b.shape(),
                        [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = x[ia] + y[ib]; });
      } else if (kind == OpKind::kSub) {
        visit_broadcast(out.shape(), a.shape(), b.shape(),
                        [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = x[ia] - y[ib]; });
      } else {
        visit_broadcast(out.shape(), a.shape(), b.shape(),
                        [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = x[ia] * y[ib]; });
      }
      return out;
    }

    case OpKind::kScale: {
      expect_arity(kind, in, 1);
      Tensor out = *in[0];
      for (double& v : out.data()) v *= at.scalar;
      return out;
    }

    case OpKind::kTanh:
    case OpKind::kExp:
    case OpKind::kLog: {
      expect_arity(kind, in, 1);
      Tensor out = *in[0];
      for (double& v : out.data()) {
        if (kind == OpKind::kTanh) {
          v = std::tanh(v);
        } else if (kind == OpKind::kExp) {
          v = std::exp(v);
        } else {
          if (!(v > 0.0)) {
            throw DomainError("log: input must be strictly positive, got " + std::to_string(v));
          }
          v = std::log(v);
        }
      }
      return out;
    }

    case OpKind::kSoftmaxLastdim: {
      expect_arity(kind, in, 1);
      const std::size_t seg = segment_width(kind, *in[0], at);
      Tensor out = *in[0];
      auto d = out.data();
      for (std::size_t s = 0; s < d.size(); s += seg) {
        double mx = d[s];
        for (std::size_t j = 1; j < seg; ++j) mx = std::max(mx, d[s + j]);
        double total = 0.0;
        for (std::size_t j = 0; j < seg; ++j) {
          d[s + j] = std::exp(d[s + j] - mx);
          total += d[s + j];
        }
        for (std::size_t j = 0; j < seg; ++j) d[s + j] /= total;
      }
      return out;
    }

    case OpKind::kMeanLastdim: {
      expect_arity(kind, in, 1);
      const Tensor& x = *in[0];
      Shape s = x.shape();
      if (s.empty()) s.push_back(1);
      s.back() = 1;
      Tensor out(s);
      const std::size_t L = x.last_dim();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double acc = 0.0;
        for (double v : x.row(r)) acc += v;
        out[r] = acc / static_cast<double>(L);
      }
      return out;
    }

    case OpKind::kSum: {
      expect_arity(kind, in, 1);
      double acc = 0.0;
      for (double v : in[0]->data()) acc += v;
      return Tensor::scalar(acc);
    }

    case OpKind::kConcatLastdim: {
      if (in.empty()) shape_fail(kind, "needs at least one input");
      check_same_leading(kind, in);
      Shape s = in[0]->shape();
      std::size_t width = 0;
      for (const Tensor* t : in) width += t->last_dim();
      s.back() = width;
      Tensor out(s);
      const std::size_t rows = in[0]->rows();
      for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (const Tensor* t : in) {
          auto src = t->row(r);
          std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
          off += src.size();
        }
      }
      return out;
    }

    case OpKind::kGatherRows: {
      expect_arity(kind, in, 1);
      const Tensor& table = *in[0];
      if (table.rank() != 2) shape_fail(kind, "table must be rank 2, got " + shape_string(table.shape()));
      if (shape_size(at.shape) != at.indices.size()) {
        shape_fail(kind, "index shape " + shape_string(at.shape) + " does not hold " +
                             std::to_string(at.indices.size()) + " indices");
      }
      Shape s = at.shape;
      s.push_back(table.dim(1));
      Tensor out(s);
      for (std::size_t i = 0; i < at.indices.size(); ++i) {
        const std::size_t r = at.indices[i];
        if (r >= table.dim(0)) {
          shape_fail(kind, "row " + std::to_string(r) + " out of range for table " +
                               shape_string(table.shape()));
        }
        auto src = table.row(r);
        std::copy(src.begin(), src.end(), out.row(i).begin());
      }
      return out;
    }

    case OpKind::kDot: {
      expect_arity(kind, in, 2);
      if (in[0]->size() != in[1]->size()) {
        shape_fail(kind, "operand sizes differ: " + shape_string(in[0]->shape()) + " vs " +
                             shape_string(in[1]->shape()));
      }
      double acc = 0.0;
      auto x = in[0]->data();
      auto y = in[1]->data();
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
      return Tensor::scalar(acc);
    }

    case OpKind::kMaskedFill: {
      expect_arity(kind, in, 1);
      if (at.mask.size() != in[0]->size()) {
        shape_fail(kind, "mask length " + std::to_string(at.mask.size()) + " vs input " +
                             shape_string(in[0]->shape()));
      }
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (at.mask[i] > 1) throw ValidationError("masked_fill: mask entries must be 0 or 1");
        if (at.mask[i]) out[i] = at.scalar;
      }
      return out;
    }

    case OpKind::kReshape:
      expect_arity(kind, in, 1);
      if (shape_size(at.shape) != in[0]->size()) {
        shape_fail(kind, "cannot view " + shape_string(in[0]->shape()) + " as " + shape_string(at.shape));
      }
      return in[0]->reshaped(at.shape);
  }
  shape_fail(kind, "unknown op");
}

void primitive_vjp(OpKind kind, std::span<const Tensor* const> in, const Tensor& out,
                   const Tensor& gout, const OpAttrs& at, std::span<Tensor* const> gin) {
  switch (kind) {
    case OpKind::kMatmul:
      matmul_vjp(*in[0], *in[1], gout, at, gin[0], gin[1]);
      return;

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMulElem: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      auto g = gout.data();
      auto x = a.data();
      auto y = b.data();
      const double sign = kind == OpKind::kSub ? -1.0 : 1.0;
      double* ga = gin[0] ? gin[0]->data().data() : nullptr;
      double* gb = gin[1] ? gin[1]->data().data() : nullptr;
      visit_broadcast(out.shape(), a.shape(), b.shape(),
                      [&](std::size_t i, std::size_t ia, std::size_t ib) {
                        if (kind == OpKind::kMulElem) {
                          if (ga) ga[ia] += g[i] * y[ib];
                          if (gb) gb[ib] += g[i] * x[ia];
                        } else {
                          if (ga) ga[ia] += g[i];
                          if (gb) gb[ib] += sign * g[i];
                        }
                      });
      return;
    }

    case OpKind::kScale: {
      if (!gin[0]) return;
      auto ga = gin[0]->data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += at.scalar * gout[i];
      return;
    }

    case OpKind::kTanh: {
      if (!gin[0]) return;
      auto ga = gin[0]->data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * (1.0 - out[i] * out[i]);
      return;
    }

    case OpKind::kExp: {
      if (!gin[0]) return;
      auto ga = gin[0]->data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * out[i];
      return;
    }

    case OpKind::kLog: {
      if (!gin[0]) return;
      auto ga = gin[0]->data();
      const Tensor& x = *in[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] / x[i];
      return;
    }

    case OpKind::kSoftmaxLastdim: {
      if (!gin[0]) return;
      const std::size_t seg = segment_width(kind, *in[0], at);
      auto ga = gin[0]->data();
      for (std::size_t s = 0; s < ga.size(); s += seg) {
        double inner = 0.0;
        for (std::size_t j = 0; j < seg; ++j) inner += gout[s + j] * out[s + j];
        for (std::size_t j = 0; j < seg; ++j) ga[s + j] += out[s + j] * (gout[s + j] - inner);
      }
      return;
    }

    case OpKind::kMeanLastdim: {
      if (!gin[0]) return;
      const Tensor& x = *in[0];
      const std::size_t L = x.last_dim();
      const double inv = 1.0 / static_cast<double>(L);
      auto ga = gin[0]->data();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t j = 0; j < L; ++j) ga[r * L + j] += gout[r] * inv;
      }
      return;
    }

    case OpKind::kSum: {
      if (!gin[0]) return;
      const double g = gout[0];
      for (double& v : gin[0]->data()) v += g;
      return;
    }

    case OpKind::kConcatLastdim: {
      const std::size_t rows = out.rows();
      std::size_t off = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t w = in[k]->last_dim();
        if (gin[k]) {
          auto ga = gin[k]->data();
          for (std::size_t r = 0; r < rows; ++r) {
            auto src = gout.row(r);
            for (std::size_t j = 0; j < w; ++j) ga[r * w + j] += src[off + j];
          }
        }
        off += w;
      }
      return;
    }

    case OpKind::kGatherRows: {
      if (!gin[0]) return;
      const std::size_t C = in[0]->dim(1);
      auto ga = gin[0]->data();
      for (std::size_t i = 0; i < at.indices.size(); ++i) {
        double* dst = ga.data() + at.indices[i] * C;
        auto src = gout.row(i);
        for (std::size_t j = 0; j < C; ++j) dst[j] += src[j];
      }
      return;
    }

    case OpKind::kDot: {
      const double g = gout[0];
      for (int side = 0; side < 2; ++side) {
        if (!gin[side]) continue;
        auto ga = gin[side]->data();
        auto other = in[1 - side]->data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * other[i];
      }
      return;
    }

    case OpKind::kMaskedFill: {
      if (!gin[0]) return;
      auto ga = gin[0]->data();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (!at.mask[i]) ga[i] += gout[i];
      }
      return;
    }

    case OpKind::kReshape: {
      if (!gin[0]) return;
      auto ga = gin[0]->data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
      return;
    }
  }
}

}  // namespace couple::numerics
