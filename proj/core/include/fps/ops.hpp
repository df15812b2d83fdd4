#pragma once

#include <span>

#include "fps/tensor.hpp"

namespace fps {

// Primitive ops. Each records a backward rule on the current GradTape when
// grad mode is on and an operand requires grad. Every op throws NumericError
// if its result contains NaN or Inf.

// [m, n] x [n, p] -> [m, p], or batched [b, m, n] x [b, n, p] -> [b, m, p].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise sum. `b` may also match the trailing dims of `a`, in which case
// it is broadcast over the leading dims (e.g. a bias row added to a batch).
Tensor add(const Tensor& a, const Tensor& b);

// Elementwise product with the same broadcasting rule as add().
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);

// tanh approximation of GeLU.
Tensor gelu(const Tensor& a);

// Softmax over the last axis.
Tensor softmax(const Tensor& a);

// Normalizes over the last axis to zero mean and unit variance (no affine).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

// Mean negative log-likelihood of `labels` under softmax(logits), logits [n, c].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Mean of all elements, as a scalar.
Tensor mean(const Tensor& a);

// [b, s, d] -> [b, d], averaging over s.
Tensor mean_pool(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

// Swaps the last two axes.
Tensor transpose(const Tensor& a);

}  // namespace fps
