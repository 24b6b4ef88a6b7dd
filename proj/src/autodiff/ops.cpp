#include "dqgat/autodiff/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dqgat::ad {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const BasicTensor<T>*> inputs) {
  auto* tape = Tape<T>::current();
  if (tape == nullptr) return nullptr;
  for (const auto* in : inputs) {
    if (in->requires_grad()) return tape;
  }
  return nullptr;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
  require(t.rank() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

template <typename T>
std::span<T> grad_of(const ImplPtr<T>& impl) {
  impl->ensure_grad();
  return impl->grad;
}

template <typename T, typename Fwd, typename Bwd>
BasicTensor<T> unary(const BasicTensor<T>& a, Fwd fwd, Bwd bwd) {
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi, bwd] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += bwd(ai->data[i], oi->data[i], g[i]);
    });
  }
  return out;
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryKind kind, const char* name) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.size() == 1 && !same;
  const bool b_scalar = b.size() == 1 && !same;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const Shape& shape = a_scalar ? b.shape() : a.shape();
  BasicTensor<T> out(shape);
  auto x = a.data();
  auto z = b.data();
  auto y = out.data();
  const std::size_t n = y.size();
  auto xa = [&](std::size_t i) { return a_scalar ? x[0] : x[i]; };
  auto xb = [&](std::size_t i) { return b_scalar ? z[0] : z[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case BinaryKind::kAdd: y[i] = xa(i) + xb(i); break;
      case BinaryKind::kSub: y[i] = xa(i) - xb(i); break;
      case BinaryKind::kMul: y[i] = xa(i) * xb(i); break;
    }
  }
  if (auto* tape = recording_tape({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record({ai, bi}, oi, [ai, bi, oi, kind, a_scalar, b_scalar] {
      const auto& g = oi->grad;
      const std::size_t n = g.size();
      if (ai->requires_grad) {
        auto ga = grad_of(ai);
        for (std::size_t i = 0; i < n; ++i) {
          T d = g[i];
          if (kind == BinaryKind::kMul) d *= b_scalar ? bi->data[0] : bi->data[i];
          ga[a_scalar ? 0 : i] += d;
        }
      }
      if (bi->requires_grad) {
        auto gb = grad_of(bi);
        for (std::size_t i = 0; i < n; ++i) {
          T d = g[i];
          if (kind == BinaryKind::kSub) d = -d;
          if (kind == BinaryKind::kMul) d *= a_scalar ? ai->data[0] : ai->data[i];
          gb[b_scalar ? 0 : i] += d;
        }
      }
    });
  }
  return out;
}

}  // namespace

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                 std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
                  std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  BasicTensor<T> out({m, n});
  gemm<T>(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), out.data().data(), n);
  if (auto* tape = recording_tape({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record({ai, bi}, oi, [ai, bi, oi, m, n, k] {
      const T* g = oi->grad.data();
      if (ai->requires_grad) {
        gemm<T>(false, true, m, k, n, T(1), g, n, bi->data.data(), n, T(1), grad_of(ai).data(), k);
      }
      if (bi->requires_grad) {
        gemm<T>(true, false, k, n, m, T(1), ai->data.data(), k, g, n, T(1), grad_of(bi).data(), n);
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require(x.rank() == 1 || x.rank() == 2, "linear: input must be rank 1 or 2, got " + shape_str(x.shape()));
  require_rank(weight, 2, "linear");
  const bool vec = x.rank() == 1;
  const std::size_t m = vec ? 1 : x.dim(0);
  const std::size_t k = vec ? x.dim(0) : x.dim(1);
  const std::size_t n = weight.dim(0);
  require(weight.dim(1) == k,
          "linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  require(bias.size() == n, "linear: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(n));
  BasicTensor<T> out(vec ? Shape{n} : Shape{m, n});
  auto y = out.data();
  gemm<T>(false, true, m, n, k, T(1), x.data().data(), k, weight.data().data(), k, T(0), y.data(), n);
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += bv[j];
  }
  if (auto* tape = recording_tape({&x, &weight, &bias})) {
    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi = bias.impl();
    auto oi = out.impl();
    tape->record({xi, wi, bi}, oi, [xi, wi, bi, oi, m, n, k] {
      const T* g = oi->grad.data();
      if (xi->requires_grad) {
        gemm<T>(false, false, m, k, n, T(1), g, n, wi->data.data(), k, T(1), grad_of(xi).data(), k);
      }
      if (wi->requires_grad) {
        gemm<T>(true, false, n, k, m, T(1), g, n, xi->data.data(), k, T(1), grad_of(wi).data(), k);
      }
      if (bi->requires_grad) {
        auto gb = grad_of(bi);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  BasicTensor<T> out({n, m});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  }
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi, m, n] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
  require(b.dim(0) == batch && b.dim(1) == k,
          "bmm: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  BasicTensor<T> out({batch, n, m});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm<T>(false, false, n, m, k, T(1), a.data().data() + i * n * k, k, b.data().data() + i * k * m, m, T(0),
            out.data().data() + i * n * m, m);
  }
  if (auto* tape = recording_tape({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record({ai, bi}, oi, [ai, bi, oi, batch, n, k, m] {
      const T* g = oi->grad.data();
      for (std::size_t i = 0; i < batch; ++i) {
        if (ai->requires_grad) {
          gemm<T>(false, true, n, k, m, T(1), g + i * n * m, m, bi->data.data() + i * k * m, m, T(1),
                  grad_of(ai).data() + i * n * k, k);
        }
        if (bi->requires_grad) {
          gemm<T>(true, false, k, m, n, T(1), ai->data.data() + i * n * k, k, g + i * n * m, m, T(1),
                  grad_of(bi).data() + i * k * m, m);
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, BinaryKind::kAdd, "add");
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, BinaryKind::kSub, "sub");
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, BinaryKind::kMul, "mul");
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T c) {
  return unary(a, [c](T x) { return x + c; }, [](T, T, T g) { return g; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T c) {
  return unary(a, [c](T x) { return x * c; }, [c](T, T, T g) { return g * c; });
}

template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& a) {
  return unary(a, [](T x) { return -x; }, [](T, T, T g) { return -g; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T, T g) { return x > T(0) ? g : T(0); });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& a, T slope) {
  return unary(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T, T g) { return x > T(0) ? g : slope * g; });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y, T g) { return g * y; });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a) {
  for (T x : a.data()) {
    if (!(x > T(0))) throw DomainError("log of non-positive value " + std::to_string(x));
  }
  return unary(a, [](T x) { return std::log(x); }, [](T x, T, T g) { return g / x; });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T total = T(0);
  for (T x : a.data()) total += x;
  auto out = BasicTensor<T>::scalar(total);
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi] {
      auto ga = grad_of(ai);
      const T g = oi->grad[0];
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
BasicTensor<T> row_mean(const BasicTensor<T>& a) {
  require_rank(a, 2, "row_mean");
  const std::size_t m = a.dim(0), n = a.dim(1);
  BasicTensor<T> out({m});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j];
    y[i] = s / static_cast<T>(n);
  }
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi, m, n] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < m; ++i) {
        const T d = g[i] / static_cast<T>(n);
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += d;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<T> values(a.data().begin(), a.data().end());
  BasicTensor<T> out(std::move(shape), std::move(values));
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  require(axis < first.size(), "concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    require(ok, "concat: dimension mismatch " + shape_str(first) + " vs " + shape_str(s) + " on axis " +
                    std::to_string(axis));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Shape out_shape = first;
  out_shape[axis] = total;
  BasicTensor<T> out(out_shape);
  auto y = out.data();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t ext = p.shape()[axis];
    auto x = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.begin() + o * ext * inner, ext * inner, y.begin() + (o * total + offset) * inner);
    }
    offset += ext;
  }
  Tape<T>* tape = Tape<T>::current();
  bool tracked = false;
  for (const auto& p : parts) tracked = tracked || p.requires_grad();
  if (tape != nullptr && tracked) {
    std::vector<ImplPtr<T>> inputs;
    for (const auto& p : parts) inputs.push_back(p.impl());
    auto oi = out.impl();
    tape->record(inputs, oi, [inputs, oi, offsets, outer, inner, total, axis] {
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& in = inputs[i];
        if (!in->requires_grad) continue;
        auto gi = grad_of(in);
        const std::size_t ext = in->shape[axis];
        for (std::size_t o = 0; o < outer; ++o) {
          const std::size_t src = (o * total + offsets[i]) * inner;
          const std::size_t dst = o * ext * inner;
          for (std::size_t t = 0; t < ext * inner; ++t) gi[dst + t] += g[src + t];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(begin < end && end <= n, "slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                                       ") for " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  BasicTensor<T> out({m, w});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(x.begin() + i * n + begin, w, y.begin() + i * w);
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi, m, n, w, begin] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> select_rows(const BasicTensor<T>& a, std::span<const std::size_t> rows) {
  require(a.rank() >= 1 && !rows.empty(), "select_rows: bad input " + shape_str(a.shape()));
  const std::size_t m = a.dim(0);
  const std::size_t row = a.size() / m;
  Shape shape = a.shape();
  shape[0] = rows.size();
  BasicTensor<T> out(shape);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < m, "select_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(x.begin() + rows[i] * row, row, y.begin() + i * row);
  }
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape->record({ai}, oi, [ai, oi, idx = std::move(idx), row] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t t = 0; t < row; ++t) ga[idx[i] * row + t] += g[i * row + t];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> expand_cols(const BasicTensor<T>& a, std::size_t n) {
  require(a.rank() == 1 || (a.rank() == 2 && a.dim(1) == 1), "expand_cols: expected [m] or [m,1], got " +
                                                                   shape_str(a.shape()));
  require(n > 0, "expand_cols: zero width");
  const std::size_t m = a.dim(0);
  BasicTensor<T> out({m, n});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) std::fill_n(y.begin() + i * n, n, x[i]);
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record({ai}, oi, [ai, oi, m, n] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < m; ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
        ga[i] += s;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> gather_cols(const BasicTensor<T>& a, std::span<const std::size_t> cols) {
  require_rank(a, 2, "gather_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(cols.size() == m, "gather_cols: need one column per row");
  BasicTensor<T> out({m});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    require(cols[i] < n, "gather_cols: column " + std::to_string(cols[i]) + " out of range");
    y[i] = x[i * n + cols[i]];
  }
  if (auto* tape = recording_tape({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    tape->record({ai}, oi, [ai, oi, idx = std::move(idx), n] {
      auto ga = grad_of(ai);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += g[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> outer_sum(const BasicTensor<T>& u, const BasicTensor<T>& v) {
  require_rank(u, 2, "outer_sum");
  require(u.shape() == v.shape(), "outer_sum: shape mismatch " + shape_str(u.shape()) + " vs " +
                                      shape_str(v.shape()));
  const std::size_t batch = u.dim(0), n = u.dim(1);
  BasicTensor<T> out({batch, n, n});
  auto x = u.data();
  auto z = v.data();
  auto y = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) y[(b * n + k) * n + j] = x[b * n + k] + z[b * n + j];
    }
  }
  if (auto* tape = recording_tape({&u, &v})) {
    auto ui = u.impl();
    auto vi = v.impl();
    auto oi = out.impl();
    tape->record({ui, vi}, oi, [ui, vi, oi, batch, n] {
      const auto& g = oi->grad;
      if (ui->requires_grad) {
        auto gu = grad_of(ui);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t k = 0; k < n; ++k) {
            T s = T(0);
            for (std::size_t j = 0; j < n; ++j) s += g[(b * n + k) * n + j];
            gu[b * n + k] += s;
          }
        }
      }
      if (vi->requires_grad) {
        auto gv = grad_of(vi);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t j = 0; j < n; ++j) gv[b * n + j] += g[(b * n + k) * n + j];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x, std::span<const std::uint8_t> mask) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  require(mask.size() == n * m, "softmax_rows: mask has " + std::to_string(mask.size()) + " entries, expected " +
                                    std::to_string(n * m));
  BasicTensor<T> out({n, m});
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    T hi = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask[i * m + j]) {
        hi = std::max(hi, xv[i * m + j]);
        any = true;
      }
    }
    if (!any) throw InvalidMaskError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    T total = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t t = i * m + j;
      y[t] = mask[t] ? std::exp(xv[t] - hi) : T(0);
      total += y[t];
    }
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] /= total;
  }
  if (auto* tape = recording_tape({&x})) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record({xi}, oi, [xi, oi, n, m] {
      auto gx = grad_of(xi);
      const auto& g = oi->grad;
      const auto& yv = oi->data;
      for (std::size_t i = 0; i < n; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < m; ++j) dot += yv[i * m + j] * g[i * m + j];
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t t = i * m + j;
          gx[t] += yv[t] * (g[t] - dot);  // masked entries have y == 0
        }
      }
    });
  }
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t out_h, out_w;
  std::size_t stride, pad;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t total = g.batch * g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * total;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const T* plane = x + (b * g.channels + c) * g.height * g.width;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            T* dst = row + b * g.pixels() + oy * g.out_w;
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.height)) {
              std::fill_n(dst, g.out_w, T(0));
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
              dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0) : src[ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  const std::size_t total = g.batch * g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * total;
        for (std::size_t b = 0; b < g.batch; ++b) {
          T* plane = x + (b * g.channels + c) * g.height * g.width;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            const T* src = row + b * g.pixels() + oy * g.out_w;
            T* dst = plane + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
              if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dSpec spec) {
  require(x.rank() == 3 || x.rank() == 4, "conv2d: input must be [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
  require_rank(weight, 4, "conv2d");
  require(spec.stride > 0, "conv2d: stride must be positive");
  const bool batched = x.rank() == 4;
  ConvGeometry g{};
  g.batch = batched ? x.dim(0) : 1;
  g.channels = x.dim(batched ? 1 : 0);
  g.height = x.dim(batched ? 2 : 1);
  g.width = x.dim(batched ? 3 : 2);
  g.out_channels = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = spec.stride;
  g.pad = spec.padding;
  require(weight.dim(1) == g.channels,
          "conv2d: kernel " + shape_str(weight.shape()) + " does not match input " + shape_str(x.shape()));
  if (g.kh > g.height + 2 * g.pad || g.kw > g.width + 2 * g.pad) {
    throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  const bool has_bias = bias.size() == g.out_channels && bias.rank() == 1;
  require(has_bias || bias.rank() == 0, "conv2d: bias " + shape_str(bias.shape()) + " does not match kernels");
  g.out_h = (g.height + 2 * g.pad - g.kh) / g.stride + 1;
  g.out_w = (g.width + 2 * g.pad - g.kw) / g.stride + 1;

  const std::size_t total = g.batch * g.pixels();
  auto cols = std::make_shared<std::vector<T>>(g.patch() * total);
  im2col(g, x.data().data(), cols->data());
  std::vector<T> tmp(g.out_channels * total);
  gemm<T>(false, false, g.out_channels, total, g.patch(), T(1), weight.data().data(), g.patch(), cols->data(), total,
          T(0), tmp.data(), total);

  BasicTensor<T> out(batched ? Shape{g.batch, g.out_channels, g.out_h, g.out_w}
                             : Shape{g.out_channels, g.out_h, g.out_w});
  auto y = out.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T bo = has_bias ? bias.data()[o] : T(0);
      const T* src = tmp.data() + o * total + b * g.pixels();
      T* dst = y.data() + (b * g.out_channels + o) * g.pixels();
      for (std::size_t p = 0; p < g.pixels(); ++p) dst[p] = src[p] + bo;
    }
  }

  Tape<T>* tape = Tape<T>::current();
  const bool tracked = x.requires_grad() || weight.requires_grad() || (has_bias && bias.requires_grad());
  if (tape != nullptr && tracked) {
    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi = bias.impl();
    auto oi = out.impl();
    tape->record({xi, wi, bi}, oi, [xi, wi, bi, oi, g, cols, has_bias] {
      const std::size_t total = g.batch * g.pixels();
      std::vector<T> gtmp(g.out_channels * total);
      const auto& gy = oi->grad;
      for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t o = 0; o < g.out_channels; ++o) {
          std::copy_n(gy.begin() + (b * g.out_channels + o) * g.pixels(), g.pixels(),
                      gtmp.begin() + o * total + b * g.pixels());
        }
      }
      if (wi->requires_grad) {
        gemm<T>(false, true, g.out_channels, g.patch(), total, T(1), gtmp.data(), total, cols->data(), total, T(1),
                grad_of(wi).data(), g.patch());
      }
      if (has_bias && bi->requires_grad) {
        auto gb = grad_of(bi);
        for (std::size_t o = 0; o < g.out_channels; ++o) {
          T s = T(0);
          for (std::size_t t = 0; t < total; ++t) s += gtmp[o * total + t];
          gb[o] += s;
        }
      }
      if (xi->requires_grad) {
        std::vector<T> gcols(g.patch() * total);
        gemm<T>(true, false, g.patch(), total, g.out_channels, T(1), wi->data.data(), g.patch(), gtmp.data(), total,
                T(0), gcols.data(), total);
        col2im(g, gcols.data(), grad_of(xi).data());
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t batch = x.dim(0), channels = x.dim(1), pixels = x.dim(2) * x.dim(3);
  BasicTensor<T> out({batch, channels});
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < batch * channels; ++i) {
    T s = T(0);
    for (std::size_t p = 0; p < pixels; ++p) s += xv[i * pixels + p];
    y[i] = s / static_cast<T>(pixels);
  }
  if (auto* tape = recording_tape({&x})) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record({xi}, oi, [xi, oi, batch, channels, pixels] {
      auto gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < batch * channels; ++i) {
        const T d = g[i] / static_cast<T>(pixels);
        for (std::size_t p = 0; p < pixels; ++p) gx[i * pixels + p] += d;
      }
    });
  }
  return out;
}

#define DQGAT_INSTANTIATE_OPS(T)                                                                          \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                               \
  template BasicTensor<T> bmm(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                           \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                \
  template BasicTensor<T> neg(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                           \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> log(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> row_mean(const BasicTensor<T>&);                                                \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                          \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                        \
  template BasicTensor<T> slice_cols(const BasicTensor<T>&, std::size_t, std::size_t);                    \
  template BasicTensor<T> select_rows(const BasicTensor<T>&, std::span<const std::size_t>);               \
  template BasicTensor<T> expand_cols(const BasicTensor<T>&, std::size_t);                                \
  template BasicTensor<T> gather_cols(const BasicTensor<T>&, std::span<const std::size_t>);               \
  template BasicTensor<T> outer_sum(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&, std::span<const std::uint8_t>);             \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                 Conv2dSpec);                                                             \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);

DQGAT_INSTANTIATE_OPS(float)
DQGAT_INSTANTIATE_OPS(double)

#undef DQGAT_INSTANTIATE_OPS

}  // namespace dqgat::ad
