#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maskroute/tensor.hpp"

namespace maskroute {

// Differentiable operations. Shapes must match exactly; the only broadcast
// is add_bias over the rows of a matrix.

/// [M x K] . [K x N] -> [M x N]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Batched product [G x M x K] . [G x K x N] -> [G x M x N]
Tensor bmm(const Tensor& a, const Tensor& b);

/// Swaps the last two axes of a rank-3 tensor.
Tensor transpose_last2(const Tensor& x);

/// [A x B x C x D] -> [A x C x B x D]
Tensor swap_axes12(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x [M x N] + bias [N], added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);

/// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& x);

/// [B x L x D] -> [B x D], mean over the middle axis.
Tensor mean_axis1(const Tensor& x);

/// Numerically stable softmax along `axis` (negative values count from the end).
Tensor softmax(const Tensor& x, int axis);

/// Normalizes each row over the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row gather: table [V x D], ids (n) -> [n x D].
Tensor embedding(const Tensor& table, std::span<const int> ids);

}  // namespace maskroute
