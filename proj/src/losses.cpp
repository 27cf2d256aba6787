#include "guidedepth/losses.hpp"

#include <stdexcept>

namespace guidedepth {

LossConfig LossConfig::for_dynamic_range(double range) {
  LossConfig c;
  c.dynamic_range = range;
  c.c1 = (0.01 * range) * (0.01 * range);
  c.c2 = (0.03 * range) * (0.03 * range);
  return c;
}

void LossConfig::validate() const {
  if (!(lambda_l1 > 0.0)) throw std::invalid_argument("lambda_l1 must be > 0");
  if (ssim_window < 1 || ssim_window % 2 == 0) {
    throw std::invalid_argument("ssim_window must be a positive odd integer");
  }
  if (!(ssim_sigma > 0.0)) throw std::invalid_argument("ssim_sigma must be > 0");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw std::invalid_argument("c1 and c2 must be > 0");
  if (!(dynamic_range > 0.0)) throw std::invalid_argument("dynamic_range must be > 0");
}

namespace {
template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}
}  // namespace

template <typename T>
Tensor<T> ssim(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, const LossConfig& cfg) {
  require_same("ssim", a, b);
  const int win = cfg.ssim_window;
  const double sigma = cfg.ssim_sigma;
  const T c1 = static_cast<T>(cfg.c1), c2 = static_cast<T>(cfg.c2);

  auto mu_a = gaussian_blur(tape, a, win, sigma);
  auto mu_b = gaussian_blur(tape, b, win, sigma);
  auto mu_ab = mul(tape, mu_a, mu_b);
  auto mu_aa = square(tape, mu_a);
  auto mu_bb = square(tape, mu_b);
  auto var_a = sub(tape, gaussian_blur(tape, square(tape, a), win, sigma), mu_aa);
  auto var_b = sub(tape, gaussian_blur(tape, square(tape, b), win, sigma), mu_bb);
  auto cov = sub(tape, gaussian_blur(tape, mul(tape, a, b), win, sigma), mu_ab);

  auto lum_num = add_scalar(tape, scale(tape, mu_ab, T(2)), c1);
  auto lum_den = add_scalar(tape, add(tape, mu_aa, mu_bb), c1);
  auto cs_num = add_scalar(tape, scale(tape, cov, T(2)), c2);
  auto cs_den = add_scalar(tape, add(tape, var_a, var_b), c2);
  auto map = div(tape, mul(tape, lum_num, cs_num), mul(tape, lum_den, cs_den));
  return mean(tape, map);
}

template <typename T>
Tensor<T> dssim_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat,
                     const LossConfig& cfg) {
  auto s = ssim(tape, y, yhat, cfg);
  return scale(tape, add_scalar(tape, scale(tape, s, T(-1)), T(1)), T(0.5));
}

template <typename T>
Tensor<T> grad_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat, GradNorm norm) {
  require_same("grad_loss", y, yhat);
  auto dx = sub(tape, diff_x(tape, y), diff_x(tape, yhat));
  auto dy = sub(tape, diff_y(tape, y), diff_y(tape, yhat));
  if (norm == GradNorm::kL1) {
    return add(tape, mean(tape, abs(tape, dx)), mean(tape, abs(tape, dy)));
  }
  return add(tape, mean(tape, square(tape, dx)), mean(tape, square(tape, dy)));
}

template <typename T>
Tensor<T> l1_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat) {
  require_same("l1_loss", y, yhat);
  return mean(tape, abs(tape, sub(tape, yhat, y)));
}

template <typename T>
LossTerms<T> combined_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& yhat,
                           const LossConfig& cfg) {
  cfg.validate();
  LossTerms<T> t;
  t.dssim = dssim_loss(tape, y, yhat, cfg);
  t.grad = grad_loss(tape, y, yhat, cfg.grad_norm);
  t.l1 = l1_loss(tape, y, yhat);
  t.total = add(tape, add(tape, t.dssim, t.grad), scale(tape, t.l1, static_cast<T>(cfg.lambda_l1)));
  return t;
}

#define GUIDEDEPTH_INSTANTIATE_LOSSES(T)                                                     \
  template Tensor<T> ssim(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const LossConfig&);  \
  template Tensor<T> dssim_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                const LossConfig&);                                          \
  template Tensor<T> grad_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&, GradNorm);      \
  template Tensor<T> l1_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template LossTerms<T> combined_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                      const LossConfig&);

GUIDEDEPTH_INSTANTIATE_LOSSES(float)
GUIDEDEPTH_INSTANTIATE_LOSSES(double)

}  // namespace guidedepth
