#include "fps/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"

namespace fps {
namespace {

using Grads = std::vector<Tensor>;

void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

// c[m x p] += a[m x n] * b[n x p]
void gemm_accumulate(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    const double* arow = a + i * n;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = arow[k];
      const double* brow = b + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

// Number of times `b` repeats inside `a` when b's shape is a suffix of a's.
// Returns 0 when the shapes are incompatible.
std::size_t broadcast_repeats(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (a[a.size() - b.size() + i] != b[i]) return 0;
  }
  return element_count(a) / element_count(b);
}

std::size_t checked_repeats(const Tensor& a, const Tensor& b, const char* op) {
  const std::size_t reps = broadcast_repeats(a.shape(), b.shape());
  require(reps != 0, std::string(op) + ": cannot broadcast " +
                         to_string(b.shape()) + " onto " +
                         to_string(a.shape()));
  return reps;
}

// Sums a tensor shaped like `a` down to the trailing shape `target`.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  const std::size_t inner = element_count(target);
  std::vector<double> out(inner, 0.0);
  auto d = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) out[i % inner] += d[i];
  return make_op_output(target, std::move(out), "reduce");
}

std::size_t last_extent(const Tensor& a, const char* op) {
  require(a.dim() >= 1, std::string(op) + " needs at least one axis");
  return a.shape().back();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.dim() == 3;
  require((a.dim() == 2 && b.dim() == 2) || (batched && b.dim() == 3),
          "matmul expects 2-D or batched 3-D operands, got " +
              to_string(a.shape()) + " and " + to_string(b.shape()));
  const std::size_t batch = batched ? a.extent(0) : 1;
  const std::size_t m = a.extent(a.dim() - 2), n = a.extent(a.dim() - 1);
  const std::size_t n2 = b.extent(b.dim() - 2), p = b.extent(b.dim() - 1);
  require(n == n2 && (!batched || b.extent(0) == batch),
          "matmul inner dimensions disagree: " + to_string(a.shape()) +
              " x " + to_string(b.shape()));

  std::vector<double> out(batch * m * p, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_accumulate(ad + s * m * n, bd + s * n * p, out.data() + s * m * p, m,
                    n, p);
  }
  Shape shape = batched ? Shape{batch, m, p} : Shape{m, p};
  Tensor result = make_op_output(std::move(shape), std::move(out), "matmul");
  GradTape::current().record(
      result, {a, b}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        Grads grads(2);
        if (in[0].requires_grad()) grads[0] = matmul(g, transpose(in[1]));
        if (in[1].requires_grad()) grads[1] = matmul(transpose(in[0]), g);
        return grads;
      });
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t reps = checked_repeats(a, b, "add");
  const std::size_t inner = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < inner; ++i) {
      out[r * inner + i] = ad[r * inner + i] + bd[i];
    }
  }
  Tensor result = make_op_output(a.shape(), std::move(out), "add");
  GradTape::current().record(
      result, {a, b}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        Grads grads(2);
        if (in[0].requires_grad()) grads[0] = g;
        if (in[1].requires_grad()) grads[1] = reduce_to(g, in[1].shape());
        return grads;
      });
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t reps = checked_repeats(a, b, "mul");
  const std::size_t inner = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < inner; ++i) {
      out[r * inner + i] = ad[r * inner + i] * bd[i];
    }
  }
  Tensor result = make_op_output(a.shape(), std::move(out), "mul");
  GradTape::current().record(
      result, {a, b}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        Grads grads(2);
        if (in[0].requires_grad()) grads[0] = mul(g, in[1]);
        if (in[1].requires_grad()) {
          grads[1] = reduce_to(mul(g, in[0]), in[1].shape());
        }
        return grads;
      });
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out = a.to_vector();
  for (double& v : out) v *= factor;
  Tensor result = make_op_output(a.shape(), std::move(out), "scale");
  GradTape::current().record(
      result, {a}, {},
      [factor](const Tensor& g, std::span<const Tensor>,
               std::span<const Tensor>) { return Grads{scale(g, factor)}; });
  return result;
}

Tensor relu(const Tensor& a) {
  std::vector<double> out = a.to_vector();
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Tensor result = make_op_output(a.shape(), std::move(out), "relu");
  GradTape::current().record(
      result, {a}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        std::vector<double> gx = g.to_vector();
        auto x = in[0].data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          if (!(x[i] > 0.0)) gx[i] = 0.0;
        }
        return Grads{make_op_output(g.shape(), std::move(gx), "relu_backward")};
      });
  return result;
}

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

Tensor gelu(const Tensor& a) {
  std::vector<double> out = a.to_vector();
  for (double& x : out) {
    const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
    x = 0.5 * x * (1.0 + t);
  }
  Tensor result = make_op_output(a.shape(), std::move(out), "gelu");
  GradTape::current().record(
      result, {a}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        std::vector<double> gx = g.to_vector();
        auto xs = in[0].data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const double x = xs[i];
          const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
          const double t = std::tanh(u);
          const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
          gx[i] *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        }
        return Grads{make_op_output(g.shape(), std::move(gx), "gelu_backward")};
      });
  return result;
}

Tensor softmax(const Tensor& a) {
  const std::size_t width = last_extent(a, "softmax");
  std::vector<double> out = a.to_vector();
  for (std::size_t row = 0; row < out.size(); row += width) {
    double* v = out.data() + row;
    double hi = v[0];
    for (std::size_t i = 1; i < width; ++i) hi = std::max(hi, v[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      v[i] = std::exp(v[i] - hi);
      total += v[i];
    }
    for (std::size_t i = 0; i < width; ++i) v[i] /= total;
  }
  Tensor result = make_op_output(a.shape(), std::move(out), "softmax");
  GradTape::current().record(
      result, {a}, {result.share_storage(result.shape())},
      [width](const Tensor& g, std::span<const Tensor>,
              std::span<const Tensor> saved) {
        auto y = saved[0].data();
        auto gd = g.data();
        std::vector<double> gx(gd.size());
        for (std::size_t row = 0; row < gd.size(); row += width) {
          double dot = 0.0;
          for (std::size_t i = 0; i < width; ++i) dot += gd[row + i] * y[row + i];
          for (std::size_t i = 0; i < width; ++i) {
            gx[row + i] = y[row + i] * (gd[row + i] - dot);
          }
        }
        return Grads{make_op_output(g.shape(), std::move(gx), "softmax_backward")};
      });
  return result;
}

Tensor layer_norm(const Tensor& a, double eps) {
  const std::size_t width = last_extent(a, "layer_norm");
  const std::size_t rows = a.numel() / width;
  std::vector<double> out = a.to_vector();
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* v = out.data() + r * width;
    double mu = 0.0;
    for (std::size_t i = 0; i < width; ++i) mu += v[i];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < width; ++i) v[i] = (v[i] - mu) * inv_std[r];
  }
  Tensor result = make_op_output(a.shape(), std::move(out), "layer_norm");
  Tensor saved_inv = make_op_output({rows}, std::move(inv_std), "layer_norm");
  GradTape::current().record(
      result, {a}, {result.share_storage(result.shape()), saved_inv},
      [width](const Tensor& g, std::span<const Tensor>,
              std::span<const Tensor> saved) {
        auto y = saved[0].data();
        auto inv = saved[1].data();
        auto gd = g.data();
        std::vector<double> gx(gd.size());
        const double n = static_cast<double>(width);
        for (std::size_t r = 0; r * width < gd.size(); ++r) {
          const std::size_t off = r * width;
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t i = 0; i < width; ++i) {
            g_mean += gd[off + i];
            gy_mean += gd[off + i] * y[off + i];
          }
          g_mean /= n;
          gy_mean /= n;
          for (std::size_t i = 0; i < width; ++i) {
            gx[off + i] = inv[r] * (gd[off + i] - g_mean - y[off + i] * gy_mean);
          }
        }
        return Grads{
            make_op_output(g.shape(), std::move(gx), "layer_norm_backward")};
      });
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.dim() == 2, "cross_entropy expects [n, c] logits, got " +
                                 to_string(logits.shape()));
  const std::size_t n = logits.extent(0), c = logits.extent(1);
  require(labels.size() == n, "cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for " + std::to_string(n) + " rows");
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw DataError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(c) + ")");
    }
  }
  auto x = logits.data();
  std::vector<double> probs(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double* v = probs.data() + r * c;
    double hi = v[0];
    for (std::size_t i = 1; i < c; ++i) hi = std::max(hi, v[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < c; ++i) z += std::exp(v[i] - hi);
    const double log_z = hi + std::log(z);
    total += log_z - v[labels[r]];
    for (std::size_t i = 0; i < c; ++i) v[i] = std::exp(v[i] - log_z);
  }
  Tensor result = make_op_output({}, {total / static_cast<double>(n)},
                                 "cross_entropy");
  Tensor saved_probs =
      make_op_output(logits.shape(), std::move(probs), "cross_entropy");
  std::vector<int> label_copy(labels.begin(), labels.end());
  GradTape::current().record(
      result, {logits}, {saved_probs},
      [label_copy = std::move(label_copy), c](const Tensor& g,
                                              std::span<const Tensor>,
                                              std::span<const Tensor> saved) {
        std::vector<double> gx = saved[0].to_vector();
        const double factor =
            g.item() / static_cast<double>(label_copy.size());
        for (std::size_t r = 0; r < label_copy.size(); ++r) {
          gx[r * c + static_cast<std::size_t>(label_copy[r])] -= 1.0;
        }
        for (double& v : gx) v *= factor;
        return Grads{make_op_output(saved[0].shape(), std::move(gx),
                                    "cross_entropy_backward")};
      });
  return result;
}

Tensor mean(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor result = make_op_output(
      {}, {total / static_cast<double>(a.numel())}, "mean");
  GradTape::current().record(
      result, {a}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        const double v = g.item() / static_cast<double>(in[0].numel());
        return Grads{Tensor::full(in[0].shape(), v)};
      });
  return result;
}

Tensor mean_pool(const Tensor& a) {
  require(a.dim() == 3, "mean_pool expects [b, s, d], got " +
                            to_string(a.shape()));
  const std::size_t b = a.extent(0), s = a.extent(1), d = a.extent(2);
  auto x = a.data();
  std::vector<double> out(b * d, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < s; ++t) {
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += x[(i * s + t) * d + k];
    }
  }
  for (double& v : out) v /= static_cast<double>(s);
  Tensor result = make_op_output({b, d}, std::move(out), "mean_pool");
  GradTape::current().record(
      result, {a}, {},
      [b, s, d](const Tensor& g, std::span<const Tensor>,
                std::span<const Tensor>) {
        auto gd = g.data();
        std::vector<double> gx(b * s * d);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t t = 0; t < s; ++t) {
            for (std::size_t k = 0; k < d; ++k) {
              gx[(i * s + t) * d + k] = gd[i * d + k] / static_cast<double>(s);
            }
          }
        }
        return Grads{make_op_output({b, s, d}, std::move(gx), "mean_pool_backward")};
      });
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(element_count(shape) == a.numel(),
          "reshape " + to_string(a.shape()) + " to " + to_string(shape));
  Tensor result = a.share_storage(std::move(shape));
  GradTape::current().record(
      result, {a}, {},
      [](const Tensor& g, std::span<const Tensor> in, std::span<const Tensor>) {
        return Grads{reshape(g, in[0].shape())};
      });
  return result;
}

Tensor transpose(const Tensor& a) {
  require(a.dim() >= 2, "transpose needs at least two axes, got " +
                            to_string(a.shape()));
  Shape shape = a.shape();
  const std::size_t rows = shape[shape.size() - 2];
  const std::size_t cols = shape[shape.size() - 1];
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  const std::size_t batch = a.numel() / (rows * cols);
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t off = s * rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        out[off + j * rows + i] = x[off + i * cols + j];
      }
    }
  }
  Tensor result = make_op_output(std::move(shape), std::move(out), "transpose");
  GradTape::current().record(
      result, {a}, {},
      [](const Tensor& g, std::span<const Tensor>, std::span<const Tensor>) {
        return Grads{transpose(g)};
      });
  return result;
}

}  // namespace fps
