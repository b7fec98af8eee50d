#pragma once

#include <span>
#include <vector>

#include "nmt/autodiff.hpp"

// Differentiable ops on Graph variables. Shapes never broadcast implicitly; the only
// broadcasting forms are the explicitly named ones (add_bias, mul_prefix,
// add_time_broadcast, masked_fill with a prefix mask).
namespace nmt::ops {

// [N,K]x[K,M] -> [N,M]; [B,S,K]x[K,M] -> [B,S,M]; [B,N,K]x[B,K,M] -> [B,N,M] (loop over
// the leading axis); [...,K]x[K] -> [...]. With transpose_b the rhs is given as [M,K].
Var matmul(Var a, Var b, bool transpose_b = false);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// alpha * x + beta
Var affine(Var x, double alpha, double beta = 0.0);
inline Var scale(Var x, double s) { return affine(x, s, 0.0); }
inline Var one_minus(Var x) { return affine(x, -1.0, 1.0); }

Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);

// Along the last axis.
Var softmax(Var x);
Var log_softmax(Var x);
Var concat(const std::vector<Var>& parts);
Var slice(Var x, std::size_t begin, std::size_t end);

// Full reductions to shape [1].
Var sum(Var x);
Var mean(Var x);

// x[..., N] + b[N]
Var add_bias(Var x, Var b);
// Positions where mask == 0 take `fill`; mask has the shape of x or a leading prefix of it.
Var masked_fill(Var x, const Tensor& mask, double fill);
// out[i..., j...] = x[i..., j...] * w[i...] where w.shape is a leading prefix of x.shape.
Var mul_prefix(Var x, Var w);
// [B,S,D] -> [B,D] and [B,S] -> [B].
Var sum_axis1(Var x);
// Row lookup: E[V,D], ids -> [n,D].
Var embedding(Var table, std::span<const int> ids);
// [B,S,D] -> [B,D] at time t.
Var select_time(Var x, std::size_t t);
// T tensors of [B,D] -> [B,T,D].
Var stack_time(const std::vector<Var>& steps);
// [...,V] with one id per row -> [...]
Var pick(Var x, std::span<const int> ids);
// Per-row standardization over the last axis followed by gain/bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var reshape(Var x, Shape shape);
// [B,S,A] + [B,A] broadcast over S.
Var add_time_broadcast(Var x, Var y);

}  // namespace nmt::ops
