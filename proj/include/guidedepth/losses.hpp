#pragma once

#include "guidedepth/ops.hpp"

namespace guidedepth {

enum class GradNorm { kL1, kL2 };

struct LossConfig {
  double lambda_l1 = 0.1;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double dynamic_range = 1.0;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  GradNorm grad_norm = GradNorm::kL1;

  /// Canonical SSIM stabilisers C1 = (0.01 L)^2, C2 = (0.03 L)^2.
  static LossConfig for_dynamic_range(double range);

  void validate() const;
};

/// Mean SSIM index over all pixels using a Gaussian window that is
/// truncated and renormalised at image borders.
template <typename T>
Tensor<T> ssim(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, const LossConfig& cfg);

/// (1 - SSIM) / 2
template <typename T>
Tensor<T> dssim_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat,
                     const LossConfig& cfg);

/// mean|dx(y) - dx(yhat)| + mean|dy(y) - dy(yhat)| with forward differences
/// (squared differences under GradNorm::kL2).
template <typename T>
Tensor<T> grad_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat,
                    GradNorm norm = GradNorm::kL1);

template <typename T>
Tensor<T> l1_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat);

template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> dssim;
  Tensor<T> grad;
  Tensor<T> l1;
};

/// L = L_dssim + L_grad + lambda * L_1
template <typename T>
LossTerms<T> combined_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat,
                           const LossConfig& cfg);

}  // namespace guidedepth
