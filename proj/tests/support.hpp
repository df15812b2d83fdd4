#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fps/autograd.hpp"
#include "fps/ops.hpp"
#include "fps/tensor.hpp"

namespace fps::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(element_count(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, for ops with a kink at the origin.
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(element_count(shape));
  for (double& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all inputs,
// the numeric gradient taken by central differences with step h.
inline double gradcheck_error(const ScalarFn& f, const std::vector<Tensor>& at,
                              double h = 1e-5) {
  std::vector<Tensor> leaves;
  for (const Tensor& t : at) {
    leaves.push_back(Tensor::from_vector(t.shape(), t.to_vector(), true));
  }
  const Tensor loss = f(leaves);
  const GradientMap grads = backward(loss);

  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const std::vector<double> base = at[i].to_vector();
    const Tensor* g = grads.find(leaves[i]);
    for (std::size_t e = 0; e < base.size(); ++e) {
      auto eval = [&](double delta) {
        std::vector<Tensor> probe = at;
        std::vector<double> moved = base;
        moved[e] += delta;
        probe[i] = Tensor::from_vector(at[i].shape(), std::move(moved));
        return f(probe).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double analytic = g ? g->data()[e] : 0.0;
      diff += (analytic - numeric) * (analytic - numeric);
      norm_a += analytic * analytic;
      norm_n += numeric * numeric;
    }
  }
  const double denom = std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
  return std::sqrt(diff) / denom;
}

// Reduces a tensor output to a scalar through a fixed random projection so
// that every output element contributes a distinct weight.
inline Tensor project(const Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Tensor r = random_tensor(out.shape(), rng, 0.5, 1.5);
  return mean(mul(out, r));
}

inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b,
                                        std::size_t m, std::size_t n,
                                        std::size_t p) {
  std::vector<double> c(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a[i * n + k] * b[k * p + j];
      c[i * p + j] = s;
    }
  }
  return c;
}

}  // namespace fps::testing
