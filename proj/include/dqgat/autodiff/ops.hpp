#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dqgat/autodiff/tensor.hpp"

namespace dqgat::ad {

// Linear algebra
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// x[m,k] * W[n,k]^T + bias[n]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);
/// Batched matmul a[B,n,k] * b[B,k,m] -> [B,n,m].
template <typename T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Elementwise. Binary ops accept equal shapes or a single-element operand.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T c);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T c);
template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& a, T slope);
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a);
/// Throws DomainError on non-positive input.
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a);

// Reductions
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);
/// a[m,n] -> [m]
template <typename T>
BasicTensor<T> row_mean(const BasicTensor<T>& a);

// Shape manipulation
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
/// Columns [begin, end) of a[m,n].
template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t begin, std::size_t end);
/// Gathers leading-axis slices; indices may repeat.
template <typename T>
BasicTensor<T> select_rows(const BasicTensor<T>& a, std::span<const std::size_t> rows);
/// a[m] (or [m,1]) -> [m,n] by repeating each entry along columns.
template <typename T>
BasicTensor<T> expand_cols(const BasicTensor<T>& a, std::size_t n);
/// a[m,n], one column per row -> [m]
template <typename T>
BasicTensor<T> gather_cols(const BasicTensor<T>& a, std::span<const std::size_t> cols);
/// u[B,N], v[B,N] -> out[B,N,N] with out[b,k,j] = u[b,k] + v[b,j]
template <typename T>
BasicTensor<T> outer_sum(const BasicTensor<T>& u, const BasicTensor<T>& v);

/// Row-wise softmax over the entries whose mask byte is nonzero; masked
/// entries are exactly 0. Throws InvalidMaskError on a fully masked row.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x, std::span<const std::uint8_t> mask);

// Convolution
struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of x[C,H,W] or x[B,C,H,W] with w[O,C,kh,kw]; bias may be
/// an empty tensor.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dSpec spec);
/// x[B,C,H,W] -> [B,C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// Dense GEMM on row-major buffers: C = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace dqgat::ad
