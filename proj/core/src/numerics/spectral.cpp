#include "couple/numerics/spectral.hpp"

#include <cmath>
#include <random>
#include <string>

#include "couple/numerics/rng.hpp"

namespace couple::numerics {

namespace {

constexpr double kDegenerateNorm = 1e-300;

void matvec(const Tensor& a, const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    auto row = a.row(i);
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

double norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

PowerIterate power_iterate(const Tensor& a, int iters, std::uint64_t seed) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError("spectral_norm_estimate: matrix must be square, got " + shape_string(a.shape()));
  }
  if (iters < 1) throw ValidationError("spectral_norm_estimate: iters must be >= 1");
  const std::size_t n = a.dim(0);

  auto gen = make_stream(seed, Stream::kPower);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n), u(n);
  for (double& x : v) x = normal(gen);
  double nv = norm(v);
  for (double& x : v) x /= nv;

  double nu = 0.0;
  for (int it = 0; it < iters; ++it) {
    matvec(a, v, u);
    nu = norm(u);
    if (nu < kDegenerateNorm) {
      throw DegenerateIterate("spectral_norm_estimate: iterate annihilated (|u| = " +
                              std::to_string(nu) + ")");
    }
    matvec(a, u, v);
    nv = norm(v);
    if (it + 1 < iters) {
      // Rescaling keeps the iterate in range; the ratio is unaffected.
      if (nv < kDegenerateNorm) break;
      for (double& x : v) x /= nv;
    }
  }

  PowerIterate out;
  out.sigma = nv / nu;
  std::vector<double> dir(u);
  for (double& x : dir) x /= nu;
  out.direction = Tensor::vector(std::move(dir));
  return out;
}

double spectral_norm_estimate(const Tensor& a, int iters, std::uint64_t seed) {
  return power_iterate(a, iters, seed).sigma;
}

}  // namespace couple::numerics
