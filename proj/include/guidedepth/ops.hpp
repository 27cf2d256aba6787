#pragma once

#include <cstdint>

#include "guidedepth/tape.hpp"
#include "guidedepth/tensor.hpp"

namespace guidedepth {

// Differentiable tensor operations. Every op runs eagerly; when the tape is
// enabled and an input requires grad, the op records its backward rule and
// the output requires grad as well.

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding);

enum class NormMode { kTrain, kEval };

/// Running statistics of one batch-norm layer, stored as (c,1,1,1) tensors.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;
  bool initialized = false;

  static BatchNormStats fresh(int channels);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Train mode normalises with batch statistics over (n,h,w) and updates the
/// running stats (unbiased variance, exponential moving average). Eval mode
/// uses the running stats and throws if they were never updated.
template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormStats<T>& stats, NormMode mode,
                     double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> bilinear_resize(Tape<T>& tape, const Tensor<T>& x, int out_h, int out_w);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T s);
template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, T s);

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x);
/// x: (n, c_in, 1, 1); weight: (c_out, c_in, 1, 1); bias: (c_out, 1, 1, 1).
template <typename T>
Tensor<T> dense(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// out[n,c,h,w] = x[n,c,h,w] * gate[n,c,0,0]
template <typename T>
Tensor<T> channel_mul(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gate);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x);

/// Per-plane Gaussian smoothing with a truncated window renormalised at the
/// borders, so constant planes stay constant. Window size must be odd.
template <typename T>
Tensor<T> gaussian_blur(Tape<T>& tape, const Tensor<T>& x, int window, double sigma);

/// Forward differences along width (w shrinks by one) and height.
template <typename T>
Tensor<T> diff_x(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> diff_y(Tape<T>& tape, const Tensor<T>& x);

/// While alive, conv2d and dense on this thread run their serial reference
/// kernels and count every multiply-accumulate they execute.
class MacCountingScope {
 public:
  MacCountingScope();
  ~MacCountingScope();
  MacCountingScope(const MacCountingScope&) = delete;
  MacCountingScope& operator=(const MacCountingScope&) = delete;

  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* previous_ = nullptr;
};

}  // namespace guidedepth
