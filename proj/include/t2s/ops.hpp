#pragma once

#include <cstdint>
#include <vector>

#include "t2s/tensor.hpp"

namespace t2s::ops {

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// matmul(a, b):  [m,k]x[k,n] -> [m,n]
//                [B,m,k]x[k,n] -> [B,m,n]   (shared right operand)
//                [B,m,k]x[B,k,n] -> [B,m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// matmul_nt(a, b) = a . b^T with b stored row-major [n,k]:
//                [m,k]x[n,k] -> [m,n]
//                [B,m,k]x[n,k] -> [B,m,n]
//                [B,m,k]x[B,n,k] -> [B,m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Softmax along the last dimension, max-subtracted per row.
Tensor softmax_rows(const Tensor& x);

// x / sqrt(mean(x^2) + eps) along the last dimension. No learnable gain.
Tensor rms_normalize(const Tensor& x, double eps = 1e-8);

// Concatenate along the last dimension; leading dims must match.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len);

// Select rows of a 2-D tensor. Gradient scatter-adds into the source rows.
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& rows);

// [B,T,d] -> [B,d], picking token index t.
Tensor take_token(const Tensor& x, std::int64_t t);

// Scalar reductions.
Tensor sum(const Tensor& x);
Tensor mse(const Tensor& pred, const Tensor& target);

Tensor detach(const Tensor& x);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into the
// grad buffers of every reachable tracked tensor; leaves reachable only
// through detach edges receive exactly zero.
void backward(const Tensor& loss);

void zero_grad(Tensor& t);

}  // namespace t2s::ops
