#include "guidedepth/tensor.hpp"

#include <cmath>
#include <sstream>

namespace guidedepth {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

namespace {
void validate_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError("negative tensor dimension " + s.str());
  }
}
}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(shape, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  validate_shape(shape);
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = shape;
  t.s_->data.assign(shape.numel(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values) {
  validate_shape(shape);
  if (values.size() != shape.numel()) {
    throw ShapeError("data length " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = shape;
  t.s_->data = std::move(values);
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  static const Shape empty{};
  return defined() ? s_->shape : empty;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  if (!defined()) return {};
  return {s_->data.data(), s_->data.size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!defined()) return {};
  return {s_->data.data(), s_->data.size()};
}

template <typename T>
std::size_t Tensor<T>::offset(int n, int c, int h, int w) const {
  const Shape& s = s_->shape;
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 ||
      w >= s.w) {
    throw std::out_of_range("tensor index out of range for shape " + s.str());
  }
  return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  return s_->data[offset(n, c, h, w)];
}

template <typename T>
T& Tensor<T>::at(int n, int c, int h, int w) {
  return s_->data[offset(n, c, h, w)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape().str());
  }
  return s_->data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!defined()) throw AutodiffError("set_requires_grad on undefined tensor");
  s_->requires_grad = on;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) return {};
  return {s_->grad.data(), s_->grad.size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() const {
  if (!defined()) throw AutodiffError("grad access on undefined tensor");
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return {s_->grad.data(), s_->grad.size()};
}

template <typename T>
void Tensor<T>::clear_grad() {
  if (defined()) {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!defined()) return {};
  return from_vector(s_->shape, s_->data);
}

template <typename T>
void check_finite(const char* op, const Tensor<T>& t) {
  for (const T v : t.data()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(op) + " produced a non-finite value in tensor " +
                           t.shape().str());
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite(const char*, const Tensor<float>&);
template void check_finite(const char*, const Tensor<double>&);

}  // namespace guidedepth
