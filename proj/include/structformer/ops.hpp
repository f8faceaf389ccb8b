#pragma once

#include <vector>

#include "structformer/tensor.hpp"

namespace structformer {

// Differentiable tensor operations. Each op computes its forward value and,
// when gradients are enabled and any input requires them, records a backward
// step on the active tape. Backward steps accumulate (+=) into input grads.

// a [p x q] * b [q x r] -> [p x r]
Tensor matmul(const Tensor& a, const Tensor& b);

// a [p x q] * b^T, b [r x q] -> [p x r]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Elementwise sum of identically shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);

// m [p x q] + v [q] broadcast over rows (bias add).
Tensor add_row_broadcast(const Tensor& m, const Tensor& v);

Tensor scale(const Tensor& a, real c);

Tensor gelu(const Tensor& a);

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

// Per-row standardization followed by affine gain/bias, both [q].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = real(1e-5));

// Row `index` of table [V x c] as a [c] vector; backward scatters into that row.
Tensor embedding_lookup(const Tensor& table, int index);

// Column means of x [n x d] -> [d]. Column values are summed in ascending
// value order, so the result is bitwise invariant under row permutation.
Tensor mean_pool_rows(const Tensor& x);

Tensor take_row(const Tensor& x, int row);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);

// Vertical / horizontal concatenation; 1-D parts are treated as single rows.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// 1-D concatenation of 1-D parts.
Tensor concat_vec(const std::vector<Tensor>& parts);

// Stack n [d] vectors into [n x d].
Tensor stack_rows(const std::vector<Tensor>& rows);

// Mean over the batch of -log softmax(logits)[label], fused log-sum-exp.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean squared error of pred [B] against a constant target.
Tensor mse(const Tensor& pred, const std::vector<real>& target);

// sum(x * w) against a constant weight vector; scalar result.
Tensor weighted_sum(const Tensor& x, const std::vector<real>& w);

// View a [d] vector as a [1 x d] matrix.
Tensor as_row_matrix(const Tensor& v);

// Row-major flattening to a 1-D vector.
Tensor flatten(const Tensor& x);

// Inverted dropout: keeps elements with probability 1-p and rescales.
Tensor dropout(const Tensor& x, double p, Rng& rng);

}  // namespace structformer
