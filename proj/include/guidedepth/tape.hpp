#pragma once

#include <functional>
#include <vector>

#include "guidedepth/tensor.hpp"

namespace guidedepth {

/// Records backward rules of ops executed eagerly, in execution order.
///
/// A disabled tape records nothing and is what inference paths pass. After
/// backward() the tape is consumed: a further backward() without recording a
/// new forward pass throws AutodiffError.
template <typename T>
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const { return enabled_; }
  std::size_t size() const { return nodes_.size(); }

  template <typename... Ts>
  bool tracks(const Ts&... inputs) const {
    return enabled_ && (inputs.requires_grad() || ...);
  }

  void record(std::function<void()> backward_rule) {
    nodes_.push_back(std::move(backward_rule));
    consumed_ = false;
  }

  void backward(Tensor<T> loss) {
    if (consumed_) {
      throw AutodiffError("backward called twice without a new forward pass");
    }
    if (!loss.defined() || loss.shape() != Shape{1, 1, 1, 1}) {
      throw AutodiffError("backward requires a scalar (1,1,1,1) loss, got " +
                          loss.shape().str());
    }
    if (nodes_.empty() || !loss.requires_grad()) {
      throw AutodiffError("backward on a tape with no recorded operations");
    }
    loss.mutable_grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
    consumed_ = true;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool enabled_;
  bool consumed_ = false;
};

}  // namespace guidedepth
