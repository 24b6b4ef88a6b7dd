#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqgat::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidMaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
class Tape;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until gradient flows into this node
  bool requires_grad = false;
  Tape<T>* tape = nullptr;  // set for tape-produced (non-leaf) tensors
  std::int64_t node = -1;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

/// Dense row-major tensor handle. Copies share storage; use `detach()` for a
/// value copy that is cut off from the tape.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor();
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor scalar(T value);
  /// Leaf tensor that accumulates gradient.
  static BasicTensor parameter(Shape shape, std::vector<T> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> data() { return impl_->data; }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> grad() { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }

  T item() const;
  T at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  bool is_leaf() const { return impl_->tape == nullptr; }
  void set_requires_grad(bool on);
  void zero_grad();
  std::optional<std::int64_t> tape_node() const;

  /// Deep value copy, never tracked.
  BasicTensor detach() const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
  static BasicTensor from_impl(std::shared_ptr<TensorImpl<T>> impl) {
    BasicTensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of differentiable operations. Only one tape is active per
/// thread; operations record onto it when any input requires gradient.
template <typename T>
class Tape {
 public:
  using ImplPtr = std::shared_ptr<TensorImpl<T>>;

  struct Entry {
    std::vector<ImplPtr> inputs;
    ImplPtr output;
    std::function<void()> backward;
  };

  /// RAII activation of a tape on the calling thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  void record(std::vector<ImplPtr> inputs, const ImplPtr& output, std::function<void()> backward);
  void backward(const BasicTensor<T>& loss);
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// Backpropagates from a scalar loss through the tape that produced it.
template <typename T>
void backward(const BasicTensor<T>& loss);

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dqgat::ad
