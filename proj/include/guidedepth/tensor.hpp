#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace guidedepth {

/// NCHW extent of a rank-4 tensor. A zero channel count is allowed so that
/// concatenating with an empty tensor is well defined.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Dense NCHW tensor handle. Copies share storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from_vector(Shape shape, std::vector<T> values);
  static Tensor scalar(T value) { return full({1, 1, 1, 1}, value); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const;
  std::size_t numel() const { return defined() ? s_->data.size() : 0; }

  std::span<const T> data() const;
  std::span<T> mutable_data();

  T at(int n, int c, int h, int w) const;
  T& at(int n, int c, int h, int w);
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return defined() && s_->requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const { return defined() && !s_->grad.empty(); }
  std::span<const T> grad() const;
  /// Grad buffer, allocated as zeros on first access.
  // Const because gradients accumulate into shared storage from backward rules
  // that hold const handles.
  std::span<T> mutable_grad() const;
  void clear_grad();

  /// Deep copy of the data only; the copy is a fresh leaf.
  Tensor clone() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    const auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>::from_vector(shape(), std::move(out));
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  std::size_t offset(int n, int c, int h, int w) const;

  std::shared_ptr<Storage> s_;
};

/// Throws NonFiniteError naming `op` if any element is NaN or infinite.
template <typename T>
void check_finite(const char* op, const Tensor<T>& t);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace guidedepth
