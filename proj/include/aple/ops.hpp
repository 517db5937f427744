// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "aple/tensor.hpp"

// Differentiable tensor operations.
//
// Every op takes the graph to record onto as its first argument. Passing
// nullptr (or passing only unattached inputs) computes the result without
// recording anything, which is how inference paths run.
//
// All reductions run in a fixed sequential order so forward and backward
// results are bitwise reproducible.
namespace aple::ops {

/// [r x k] * [k x c] -> [r x c]
Tensor matmul(Graph* g, const Tensor& a, const Tensor& b);

/// x * w + b with x [n x k], w [k x c], b [c].
Tensor linear(Graph* g, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(Graph* g, const Tensor& a, const Tensor& b);
Tensor sub(Graph* g, const Tensor& a, const Tensor& b);
Tensor mul(Graph* g, const Tensor& a, const Tensor& b);
Tensor scale(Graph* g, const Tensor& x, float s);

/// GELU, tanh approximation:
///   0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x^3)))
Tensor gelu(Graph* g, const Tensor& x);
Tensor exp(Graph* g, const Tensor& x);
/// Natural log; non-positive inputs raise NumericError.
Tensor log(Graph* g, const Tensor& x);

/// Row-wise normalization of x [n x d] followed by the affine gain/bias [d].
Tensor layernorm(Graph* g, const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);

/// Softmax along `axis`, max-subtracted. Non-finite input raises NumericError.
Tensor softmax(Graph* g, const Tensor& x, std::size_t axis);
Tensor log_softmax(Graph* g, const Tensor& x, std::size_t axis);

Tensor concat(Graph* g, std::span<const Tensor> parts, std::size_t axis);
Tensor slice(Graph* g, const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor transpose(Graph* g, const Tensor& x);
Tensor reshape(Graph* g, const Tensor& x, Shape shape);

Tensor sum(Graph* g, const Tensor& x);
Tensor mean(Graph* g, const Tensor& x);

/// Scales each row of x [n x d] to unit L2 norm. A zero row raises
/// NumericError naming the row index.
Tensor normalize_rows(Graph* g, const Tensor& x);

}  // namespace aple::ops
