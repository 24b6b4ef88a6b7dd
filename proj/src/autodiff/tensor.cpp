#include "dqgat/autodiff/tensor.hpp"

#include <sstream>

namespace dqgat::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

template <typename T>
Tape<T>*& current_tape_slot() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor() : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->data.assign(1, T(0));
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
  check_shape(shape);
  impl_->data.assign(shape_size(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
  check_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{}, std::vector<T>{value});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::parameter(Shape shape, std::vector<T> values) {
  BasicTensor t(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t i) const {
  if (i >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[i];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (impl_->data.size() != 1) throw DimensionError("item() on non-scalar " + shape_str(impl_->shape));
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
std::optional<std::int64_t> BasicTensor<T>::tape_node() const {
  if (impl_->node < 0) return std::nullopt;
  return impl_->node;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return from_impl(std::move(impl));
}

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(current_tape_slot<T>()) {
  current_tape_slot<T>() = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  current_tape_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::current() {
  return current_tape_slot<T>();
}

template <typename T>
void Tape<T>::record(std::vector<ImplPtr> inputs, const ImplPtr& output, std::function<void()> backward) {
  output->requires_grad = true;
  output->tape = this;
  output->node = static_cast<std::int64_t>(entries_.size());
  entries_.push_back(Entry{std::move(inputs), output, std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (loss.size() != 1) throw DimensionError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  const auto& root = loss.impl();
  if (!root->requires_grad) return;  // constant loss: nothing to propagate
  if (root->tape != this) throw std::logic_error("loss was not recorded on this tape");
  for (auto& e : entries_) e.output->grad.clear();
  root->ensure_grad();
  root->grad[0] = T(1);
  for (std::size_t i = static_cast<std::size_t>(root->node) + 1; i-- > 0;) {
    auto& e = entries_[i];
    if (e.output->grad.empty()) continue;
    e.backward();
  }
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (loss.size() != 1) throw DimensionError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  auto* tape = loss.impl()->tape;
  if (tape == nullptr) return;
  tape->backward(loss);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace dqgat::ad
