#include "guidedepth/ops.hpp"

#include <algorithm>
#include <cmath>

#include "guidedepth/kernels.hpp"

namespace guidedepth {

namespace {

thread_local std::uint64_t* active_mac_counter = nullptr;

template <typename T>
Tensor<T> checked(const char* op, Tensor<T> out) {
  check_finite(op, out);
  return out;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

template <typename T>
void require_vector(const char* op, const Tensor<T>& t, int len) {
  if (t.shape() != Shape{len, 1, 1, 1}) {
    throw ShapeError(std::string(op) + ": expected a (" + std::to_string(len) +
                     ",1,1,1) parameter, got " + t.shape().str());
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, Tape<T>& tape, const Tensor<T>& x, F f, D df) {
  auto out = Tensor<T>::zeros(x.shape());
  {
    const auto xv = x.data();
    auto yv = out.mutable_data();
    for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = f(xv[i]);
  }
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, df]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      const auto xv = x.data();
      const auto yv = out.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * df(xv[i], yv[i]);
    });
  }
  return checked(op, out);
}

// Separable, border-renormalised 1-D Gaussian pass along rows (horizontal)
// or columns (vertical) of every plane; `transpose` applies the adjoint.
template <typename T>
void blur_pass(Shape s, std::span<const T> in, std::span<T> out, const std::vector<double>& g,
               bool horizontal, bool transpose) {
  const int r = static_cast<int>(g.size() / 2);
  const int len = horizontal ? s.w : s.h;
  std::vector<double> norm(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    double acc = 0.0;
    for (int k = -r; k <= r; ++k) {
      if (i + k >= 0 && i + k < len) acc += g[k + r];
    }
    norm[i] = acc;
  }
  const long planes = static_cast<long>(s.n) * s.c;
  const int lines = horizontal ? s.h : s.w;
  const int step = horizontal ? 1 : s.w;
  const int line_stride = horizontal ? s.w : 1;

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const T* ip = in.data() + plane * s.h * s.w;
    T* op = out.data() + plane * s.h * s.w;
    for (int line = 0; line < lines; ++line) {
      const T* il = ip + line * line_stride;
      T* ol = op + line * line_stride;
      for (int i = 0; i < len; ++i) {
        const int lo = std::max(-r, -i), hi = std::min(r, len - 1 - i);
        if (!transpose) {
          T acc = T(0);
          for (int k = lo; k <= hi; ++k) acc += static_cast<T>(g[k + r] / norm[i]) * il[(i + k) * step];
          ol[i * step] = acc;
        } else {
          const T d = il[i * step];
          for (int k = lo; k <= hi; ++k) ol[(i + k) * step] += static_cast<T>(g[k + r] / norm[i]) * d;
        }
      }
    }
  }
}

}  // namespace

MacCountingScope::MacCountingScope() : previous_(active_mac_counter) {
  active_mac_counter = &count_;
}

MacCountingScope::~MacCountingScope() { active_mac_counter = previous_; }

template <typename T>
BatchNormStats<T> BatchNormStats<T>::fresh(int channels) {
  return {Tensor<T>::zeros({channels, 1, 1, 1}), Tensor<T>::full({channels, 1, 1, 1}, T(1)),
          false};
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  const Shape& ws = weight.shape();
  if (x.shape().c != ws.c) {
    throw ShapeError("conv2d: input has " + std::to_string(x.shape().c) +
                     " channels but weight expects " + std::to_string(ws.c));
  }
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  }
  if (bias.defined()) require_vector("conv2d", bias, ws.n);
  kernels::ConvGeometry g{x.shape(), ws.n, ws.h, ws.w, stride, padding};
  if (x.shape().h + 2 * padding < ws.h || x.shape().w + 2 * padding < ws.w || g.out_h() < 1 ||
      g.out_w() < 1) {
    throw ShapeError("conv2d: non-positive output size for input " + x.shape().str() +
                     " and kernel " + ws.str());
  }
  auto out = Tensor<T>::zeros(g.output());
  if (active_mac_counter != nullptr) {
    kernels::conv2d_forward_reference<T>(g, x.data(), weight.data(), bias.data(),
                                         out.mutable_data(), active_mac_counter);
  } else {
    kernels::conv2d_forward<T>(g, x.data(), weight.data(), bias.data(), out.mutable_data());
  }
  if (tape.tracks(x, weight, bias)) {
    out.set_requires_grad(true);
    tape.record([x, weight, bias, out, g]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      if (x.requires_grad()) {
        kernels::conv2d_backward_input<T>(g, dy, weight.data(), x.mutable_grad());
      }
      if (weight.requires_grad() || bias.requires_grad()) {
        std::vector<T> scratch_w;
        std::span<T> dw;
        if (weight.requires_grad()) {
          dw = weight.mutable_grad();
        } else {
          scratch_w.assign(weight.numel(), T(0));
          dw = scratch_w;
        }
        std::span<T> db = bias.requires_grad() ? bias.mutable_grad() : std::span<T>{};
        kernels::conv2d_backward_weight<T>(g, dy, x.data(), dw, db);
      }
    });
  }
  return checked("conv2d", out);
}

template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormStats<T>& stats, NormMode mode, double eps,
                     double momentum) {
  const Shape s = x.shape();
  require_vector("batch_norm", gamma, s.c);
  require_vector("batch_norm", beta, s.c);
  require_vector("batch_norm", stats.mean, s.c);
  require_vector("batch_norm", stats.var, s.c);
  if (mode == NormMode::kEval && !stats.initialized) {
    throw std::logic_error(
        "batch_norm: eval mode requested but running statistics were never updated");
  }
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  auto out = Tensor<T>::zeros(s);
  std::vector<T> xhat(s.numel());
  std::vector<T> inv_std(static_cast<std::size_t>(s.c));
  const auto xv = x.data();
  auto yv = out.mutable_data();
  auto rm = stats.mean.mutable_data();
  auto rv = stats.var.mutable_data();

  for (int c = 0; c < s.c; ++c) {
    double mu = 0.0, var = 0.0;
    if (mode == NormMode::kTrain) {
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) mu += xv[base + i];
      }
      mu /= static_cast<double>(count);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = xv[base + i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
    } else {
      mu = rm[c];
      var = rv[c];
    }
    const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
    const T m = static_cast<T>(mu);
    inv_std[c] = istd;
    const T gm = gamma.data()[c], bt = beta.data()[c];
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (xv[base + i] - m) * istd;
        xhat[base + i] = xh;
        yv[base + i] = gm * xh + bt;
      }
    }
  }
  if (mode == NormMode::kTrain) stats.initialized = true;

  if (tape.tracks(x, gamma, beta)) {
    out.set_requires_grad(true);
    tape.record([x, gamma, beta, out, mode, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)]() mutable {
      if (!out.has_grad()) return;
      const Shape s = x.shape();
      const std::size_t plane = s.plane();
      const double count = static_cast<double>(s.n) * static_cast<double>(plane);
      const auto dy = out.grad();
      for (int c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < s.n; ++n) {
          const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += dy[base + i];
            sum_dy_xhat += static_cast<double>(dy[base + i]) * xhat[base + i];
          }
        }
        if (gamma.requires_grad()) gamma.mutable_grad()[c] += static_cast<T>(sum_dy_xhat);
        if (beta.requires_grad()) beta.mutable_grad()[c] += static_cast<T>(sum_dy);
        if (!x.requires_grad()) continue;
        auto dx = x.mutable_grad();
        const T gm = gamma.data()[c];
        const T k = gm * inv_std[c];
        const T mean_dy = static_cast<T>(sum_dy / count);
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
        for (int n = 0; n < s.n; ++n) {
          const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            if (mode == NormMode::kTrain) {
              dx[base + i] += k * (dy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
            } else {
              dx[base + i] += k * dy[base + i];
            }
          }
        }
      }
    });
  }
  return checked("batch_norm", out);
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      "relu", tape, x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", tape, x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      "abs", tape, x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      "square", tape, x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T s) {
  return unary<T>(
      "scale", tape, a, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, T s) {
  return unary<T>(
      "add_scalar", tape, a, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> bilinear_resize(Tape<T>& tape, const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: target size must be positive");
  }
  const Shape s = x.shape();
  auto out = Tensor<T>::zeros({s.n, s.c, out_h, out_w});
  kernels::bilinear_forward<T>(s, out_h, out_w, x.data(), out.mutable_data());
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, out_h, out_w]() mutable {
      if (!out.has_grad()) return;
      kernels::bilinear_backward<T>(x.shape(), out_h, out_w, out.grad(), x.mutable_grad());
    });
  }
  return checked("bilinear_resize", out);
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: spatial/batch mismatch " + sa.str() + " vs " + sb.str());
  }
  auto out = Tensor<T>::zeros({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.plane();
  {
    auto y = out.mutable_data();
    for (int n = 0; n < sa.n; ++n) {
      std::copy_n(a.data().begin() + n * pa, pa, y.begin() + n * (pa + pb));
      std::copy_n(b.data().begin() + n * pb, pb, y.begin() + n * (pa + pb) + pa);
    }
  }
  if (tape.tracks(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out, pa, pb]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      const int batch = a.shape().n;
      for (int n = 0; n < batch; ++n) {
        if (a.requires_grad()) {
          auto da = a.mutable_grad();
          for (std::size_t i = 0; i < pa; ++i) da[n * pa + i] += dy[n * (pa + pb) + i];
        }
        if (b.requires_grad()) {
          auto db = b.mutable_grad();
          for (std::size_t i = 0; i < pb; ++i) db[n * pb + i] += dy[n * (pa + pb) + pa + i];
        }
      }
    });
  }
  return out;
}

namespace {

enum class Binary { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(const char* op, Binary kind, Tape<T>& tape, const Tensor<T>& a,
                 const Tensor<T>& b) {
  require_same_shape(op, a, b);
  auto out = Tensor<T>::zeros(a.shape());
  {
    const auto av = a.data(), bv = b.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) {
      switch (kind) {
        case Binary::kAdd: y[i] = av[i] + bv[i]; break;
        case Binary::kSub: y[i] = av[i] - bv[i]; break;
        case Binary::kMul: y[i] = av[i] * bv[i]; break;
        case Binary::kDiv: y[i] = av[i] / bv[i]; break;
      }
    }
  }
  if (tape.tracks(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out, kind]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      const auto av = a.data(), bv = b.data();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < da.size(); ++i) {
          switch (kind) {
            case Binary::kAdd:
            case Binary::kSub: da[i] += dy[i]; break;
            case Binary::kMul: da[i] += dy[i] * bv[i]; break;
            case Binary::kDiv: da[i] += dy[i] / bv[i]; break;
          }
        }
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < db.size(); ++i) {
          switch (kind) {
            case Binary::kAdd: db[i] += dy[i]; break;
            case Binary::kSub: db[i] -= dy[i]; break;
            case Binary::kMul: db[i] += dy[i] * av[i]; break;
            case Binary::kDiv: db[i] -= dy[i] * av[i] / (bv[i] * bv[i]); break;
          }
        }
      }
    });
  }
  return checked(op, out);
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary("add", Binary::kAdd, tape, a, b);
}
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary("sub", Binary::kSub, tape, a, b);
}
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary("mul", Binary::kMul, tape, a, b);
}
template <typename T>
Tensor<T> div(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary("div", Binary::kDiv, tape, a, b);
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.plane() == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  auto out = Tensor<T>::zeros({s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  {
    const auto xv = x.data();
    auto y = out.mutable_data();
    for (std::size_t p = 0; p < y.size(); ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += xv[p * plane + i];
      y[p] = static_cast<T>(acc / static_cast<double>(plane));
    }
  }
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, plane]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      auto dx = x.mutable_grad();
      const T inv = T(1) / static_cast<T>(plane);
      for (std::size_t p = 0; p < dy.size(); ++p) {
        for (std::size_t i = 0; i < plane; ++i) dx[p * plane + i] += dy[p] * inv;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dense(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape s = x.shape(), ws = weight.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("dense: input must be (n,c,1,1), got " + s.str());
  if (ws.h != 1 || ws.w != 1 || ws.c != s.c) {
    throw ShapeError("dense: weight " + ws.str() + " incompatible with input " + s.str());
  }
  require_vector("dense", bias, ws.n);
  const int ci = s.c, co = ws.n;
  auto out = Tensor<T>::zeros({s.n, co, 1, 1});
  {
    const auto xv = x.data(), wv = weight.data(), bv = bias.data();
    auto y = out.mutable_data();
    std::uint64_t macs = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int o = 0; o < co; ++o) {
        T acc = bv[o];
        for (int i = 0; i < ci; ++i) {
          acc += wv[static_cast<std::size_t>(o) * ci + i] * xv[static_cast<std::size_t>(n) * ci + i];
          ++macs;
        }
        y[static_cast<std::size_t>(n) * co + o] = acc;
      }
    }
    if (active_mac_counter != nullptr) *active_mac_counter += macs;
  }
  if (tape.tracks(x, weight, bias)) {
    out.set_requires_grad(true);
    tape.record([x, weight, bias, out, ci, co]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      const auto xv = x.data(), wv = weight.data();
      const int batch = x.shape().n;
      for (int n = 0; n < batch; ++n) {
        for (int o = 0; o < co; ++o) {
          const T d = dy[static_cast<std::size_t>(n) * co + o];
          if (bias.requires_grad()) bias.mutable_grad()[o] += d;
          for (int i = 0; i < ci; ++i) {
            if (weight.requires_grad()) {
              weight.mutable_grad()[static_cast<std::size_t>(o) * ci + i] +=
                  d * xv[static_cast<std::size_t>(n) * ci + i];
            }
            if (x.requires_grad()) {
              x.mutable_grad()[static_cast<std::size_t>(n) * ci + i] +=
                  d * wv[static_cast<std::size_t>(o) * ci + i];
            }
          }
        }
      }
    });
  }
  return checked("dense", out);
}

template <typename T>
Tensor<T> channel_mul(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gate) {
  const Shape s = x.shape();
  if (gate.shape() != Shape{s.n, s.c, 1, 1}) {
    throw ShapeError("channel_mul: gate " + gate.shape().str() + " incompatible with " + s.str());
  }
  const std::size_t plane = s.plane();
  auto out = Tensor<T>::zeros(s);
  {
    const auto xv = x.data(), gv = gate.data();
    auto y = out.mutable_data();
    for (std::size_t p = 0; p < gv.size(); ++p) {
      for (std::size_t i = 0; i < plane; ++i) y[p * plane + i] = xv[p * plane + i] * gv[p];
    }
  }
  if (tape.tracks(x, gate)) {
    out.set_requires_grad(true);
    tape.record([x, gate, out, plane]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      const auto xv = x.data(), gv = gate.data();
      for (std::size_t p = 0; p < gv.size(); ++p) {
        if (x.requires_grad()) {
          auto dx = x.mutable_grad();
          for (std::size_t i = 0; i < plane; ++i) dx[p * plane + i] += dy[p * plane + i] * gv[p];
        }
        if (gate.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            acc += static_cast<double>(dy[p * plane + i]) * xv[p * plane + i];
          }
          gate.mutable_grad()[p] += static_cast<T>(acc);
        }
      }
    });
  }
  return checked("channel_mul", out);
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  double acc = 0.0;
  for (const T v : x.data()) acc += v;
  auto out = Tensor<T>::scalar(static_cast<T>(acc));
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T d = out.grad()[0];
      for (T& g : x.mutable_grad()) g += d;
    });
  }
  return checked("sum", out);
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (const T v : x.data()) acc += v;
  const double count = static_cast<double>(x.numel());
  auto out = Tensor<T>::scalar(static_cast<T>(acc / count));
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, count]() mutable {
      if (!out.has_grad()) return;
      const T d = static_cast<T>(out.grad()[0] / count);
      for (T& g : x.mutable_grad()) g += d;
    });
  }
  return checked("mean", out);
}

template <typename T>
Tensor<T> gaussian_blur(Tape<T>& tape, const Tensor<T>& x, int window, double sigma) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("gaussian_blur: window must be odd");
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  std::vector<double> g(static_cast<std::size_t>(window));
  const int r = window / 2;
  for (int k = -r; k <= r; ++k) g[k + r] = std::exp(-(k * k) / (2.0 * sigma * sigma));

  const Shape s = x.shape();
  std::vector<T> tmp(s.numel());
  auto out = Tensor<T>::zeros(s);
  blur_pass<T>(s, x.data(), tmp, g, /*horizontal=*/true, false);
  blur_pass<T>(s, tmp, out.mutable_data(), g, /*horizontal=*/false, false);
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, g]() mutable {
      if (!out.has_grad()) return;
      const Shape s = x.shape();
      std::vector<T> tmp(s.numel(), T(0));
      blur_pass<T>(s, out.grad(), tmp, g, /*horizontal=*/false, true);
      blur_pass<T>(s, tmp, x.mutable_grad(), g, /*horizontal=*/true, true);
    });
  }
  return checked("gaussian_blur", out);
}

namespace {

template <typename T>
Tensor<T> forward_difference(Tape<T>& tape, const Tensor<T>& x, bool along_w) {
  const Shape s = x.shape();
  if ((along_w ? s.w : s.h) < 2) throw ShapeError("forward difference needs an extent >= 2");
  const Shape os = along_w ? Shape{s.n, s.c, s.h, s.w - 1} : Shape{s.n, s.c, s.h - 1, s.w};
  const std::size_t step = along_w ? 1 : static_cast<std::size_t>(s.w);
  auto out = Tensor<T>::zeros(os);
  // Maps output flat index to the lower source element.
  auto source = [s, os](std::size_t o) {
    const std::size_t ow = o % os.w;
    const std::size_t rest = o / os.w;
    const std::size_t oh = rest % os.h;
    const std::size_t p = rest / os.h;
    return (p * s.h + oh) * s.w + ow;
  };
  {
    const auto xv = x.data();
    auto y = out.mutable_data();
    for (std::size_t o = 0; o < y.size(); ++o) {
      const std::size_t i = source(o);
      y[o] = xv[i + step] - xv[i];
    }
  }
  if (tape.tracks(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, step, source]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      auto dx = x.mutable_grad();
      for (std::size_t o = 0; o < dy.size(); ++o) {
        const std::size_t i = source(o);
        dx[i + step] += dy[o];
        dx[i] -= dy[o];
      }
    });
  }
  return checked(along_w ? "diff_x" : "diff_y", out);
}

}  // namespace

template <typename T>
Tensor<T> diff_x(Tape<T>& tape, const Tensor<T>& x) {
  return forward_difference(tape, x, true);
}
template <typename T>
Tensor<T> diff_y(Tape<T>& tape, const Tensor<T>& x) {
  return forward_difference(tape, x, false);
}

#define GUIDEDEPTH_INSTANTIATE_OPS(T)                                                           \
  template struct BatchNormStats<T>;                                                            \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                            int);                                                               \
  template Tensor<T> batch_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                BatchNormStats<T>&, NormMode, double, double);                  \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> abs(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> square(Tape<T>&, const Tensor<T>&);                                        \
  template Tensor<T> bilinear_resize(Tape<T>&, const Tensor<T>&, int, int);                     \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> div(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                      \
  template Tensor<T> add_scalar(Tape<T>&, const Tensor<T>&, T);                                 \
  template Tensor<T> global_avg_pool(Tape<T>&, const Tensor<T>&);                               \
  template Tensor<T> dense(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> channel_mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> gaussian_blur(Tape<T>&, const Tensor<T>&, int, double);                    \
  template Tensor<T> diff_x(Tape<T>&, const Tensor<T>&);                                        \
  template Tensor<T> diff_y(Tape<T>&, const Tensor<T>&);

GUIDEDEPTH_INSTANTIATE_OPS(float)
GUIDEDEPTH_INSTANTIATE_OPS(double)

}  // namespace guidedepth
