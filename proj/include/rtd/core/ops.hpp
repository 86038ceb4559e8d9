#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtd/core/rng.hpp"
#include "rtd/core/tensor.hpp"

namespace rtd {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[N,D] + bias[D] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// alpha * x + beta
Tensor affine(const Tensor& x, double alpha, double beta = 0.0);
// x * w elementwise with a constant (non-differentiable) weight vector.
Tensor mul_const(const Tensor& x, std::span<const double> w);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// [M,K] x [N,K]^T -> [M,N]; used for tied output projections.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor gelu(const Tensor& x);  // erf form
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // x > 0 required
Tensor square(const Tensor& x);
// Values outside [lo, hi] are pinned; gradient is zero there.
Tensor clamp(const Tensor& x, double lo, double hi);
// x^e elementwise with per-element constant exponents (x >= 0).
Tensor pow_const(const Tensor& x, std::span<const double> exponents);

// Row-wise over the last axis of a rank-2 tensor.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);

// table[V,D] rows selected by ids -> [N,D]. Gradient scatter-adds into table.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);
// x[N,D] rows selected -> [R,D].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// x[N,V], one column per row -> [N].
Tensor pick(const Tensor& x, std::span<const TokenId> cols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_i w_i x_i with constant weights -> scalar.
Tensor weighted_sum(const Tensor& x, std::span<const double> w);

Tensor reshape(const Tensor& x, Shape shape);
// Same values, cut from the tape.
Tensor detach(const Tensor& x);
// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

struct AttentionSpec {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  // Relative-position bucket of (query i, key j), length seq_len^2.
  std::span<const std::int32_t> buckets;
  // Per token (batch * seq_len): keys with 0 here are excluded.
  std::span<const std::uint8_t> key_valid;
};

// Multi-head scaled dot-product attention with an additive learned bias
// rel_table[heads, buckets] indexed by relative-position bucket.
// q, k, v: [batch*seq_len, heads*head_dim].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& rel_table,
                 const AttentionSpec& spec);

}  // namespace rtd
