#include "guidedepth/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace guidedepth::kernels {

std::uint64_t ConvGeometry::macs() const {
  return static_cast<std::uint64_t>(input.n) * out_channels * out_h() * out_w() * input.c *
         kernel_h * kernel_w;
}

namespace {

// Output columns ow whose input column ow*stride - padding + kw lies in [0, w).
struct ColumnRange {
  int lo;
  int hi;  // exclusive
};

ColumnRange valid_columns(const ConvGeometry& g, int kw, int out_w) {
  const int s = g.stride;
  const int first = g.padding - kw;  // need ow*s >= first
  int lo = first <= 0 ? 0 : (first + s - 1) / s;
  const int last = g.input.w - 1 + g.padding - kw;  // need ow*s <= last
  int hi = last < 0 ? 0 : last / s + 1;
  lo = std::min(lo, out_w);
  hi = std::clamp(hi, lo, out_w);
  return {lo, hi};
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y) {
  const int ci_n = g.input.c, h = g.input.h, w = g.input.w;
  const int co_n = g.out_channels, kh_n = g.kernel_h, kw_n = g.kernel_w;
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const int s = g.stride, p = g.padding;
  const long planes = static_cast<long>(g.input.n) * co_n;

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const int n = static_cast<int>(plane / co_n);
    const int o = static_cast<int>(plane % co_n);
    T* yp = y.data() + plane * oh_n * ow_n;
    std::fill(yp, yp + oh_n * ow_n, bias.empty() ? T(0) : bias[o]);
    for (int ci = 0; ci < ci_n; ++ci) {
      const T* xp = x.data() + (static_cast<long>(n) * ci_n + ci) * h * w;
      const T* wp = weight.data() + (static_cast<long>(o) * ci_n + ci) * kh_n * kw_n;
      for (int kh = 0; kh < kh_n; ++kh) {
        for (int kw = 0; kw < kw_n; ++kw) {
          const T wv = wp[kh * kw_n + kw];
          const ColumnRange cols = valid_columns(g, kw, ow_n);
          for (int oh = 0; oh < oh_n; ++oh) {
            const int ih = oh * s - p + kh;
            if (ih < 0 || ih >= h) continue;
            const T* xr = xp + ih * w;
            T* yr = yp + oh * ow_n;
            if (s == 1) {
              const T* xs = xr - p + kw;
              for (int ow = cols.lo; ow < cols.hi; ++ow) yr[ow] += wv * xs[ow];
            } else {
              for (int ow = cols.lo; ow < cols.hi; ++ow) yr[ow] += wv * xr[ow * s - p + kw];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward_reference(const ConvGeometry& g, std::span<const T> x,
                              std::span<const T> weight, std::span<const T> bias,
                              std::span<T> y, std::uint64_t* mac_count) {
  const int ci_n = g.input.c, h = g.input.h, w = g.input.w;
  const int co_n = g.out_channels, kh_n = g.kernel_h, kw_n = g.kernel_w;
  const int oh_n = g.out_h(), ow_n = g.out_w();
  std::uint64_t macs = 0;
  std::size_t out = 0;
  for (int n = 0; n < g.input.n; ++n) {
    for (int o = 0; o < co_n; ++o) {
      for (int oh = 0; oh < oh_n; ++oh) {
        for (int ow = 0; ow < ow_n; ++ow) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (int ci = 0; ci < ci_n; ++ci) {
            for (int kh = 0; kh < kh_n; ++kh) {
              for (int kw = 0; kw < kw_n; ++kw) {
                const int ih = oh * g.stride - g.padding + kh;
                const int iw = ow * g.stride - g.padding + kw;
                const bool inside = ih >= 0 && ih < h && iw >= 0 && iw < w;
                const T xv = inside ? x[((static_cast<std::size_t>(n) * ci_n + ci) * h + ih) * w + iw]
                                    : T(0);
                acc += weight[((static_cast<std::size_t>(o) * ci_n + ci) * kh_n + kh) * kw_n + kw] *
                       xv;
                ++macs;
              }
            }
          }
          y[out++] = acc;
        }
      }
    }
  }
  if (mac_count != nullptr) *mac_count += macs;
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy,
                           std::span<const T> weight, std::span<T> dx) {
  const int ci_n = g.input.c, h = g.input.h, w = g.input.w;
  const int co_n = g.out_channels, kh_n = g.kernel_h, kw_n = g.kernel_w;
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const int s = g.stride, p = g.padding;
  const long planes = static_cast<long>(g.input.n) * ci_n;

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const int n = static_cast<int>(plane / ci_n);
    const int ci = static_cast<int>(plane % ci_n);
    T* dxp = dx.data() + plane * h * w;
    for (int o = 0; o < co_n; ++o) {
      const T* dyp = dy.data() + (static_cast<long>(n) * co_n + o) * oh_n * ow_n;
      const T* wp = weight.data() + (static_cast<long>(o) * ci_n + ci) * kh_n * kw_n;
      for (int kh = 0; kh < kh_n; ++kh) {
        for (int kw = 0; kw < kw_n; ++kw) {
          const T wv = wp[kh * kw_n + kw];
          const ColumnRange cols = valid_columns(g, kw, ow_n);
          for (int oh = 0; oh < oh_n; ++oh) {
            const int ih = oh * s - p + kh;
            if (ih < 0 || ih >= h) continue;
            T* dxr = dxp + ih * w;
            const T* dyr = dyp + oh * ow_n;
            for (int ow = cols.lo; ow < cols.hi; ++ow) dxr[ow * s - p + kw] += wv * dyr[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input_reference(const ConvGeometry& g, std::span<const T> dy,
                                     std::span<const T> weight, std::span<T> dx) {
  const int ci_n = g.input.c, h = g.input.h, w = g.input.w;
  const int co_n = g.out_channels, kh_n = g.kernel_h, kw_n = g.kernel_w;
  const int oh_n = g.out_h(), ow_n = g.out_w();
  std::size_t idx = 0;
  for (int n = 0; n < g.input.n; ++n) {
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int ih = 0; ih < h; ++ih) {
        for (int iw = 0; iw < w; ++iw) {
          T acc = T(0);
          for (int o = 0; o < co_n; ++o) {
            for (int kh = 0; kh < kh_n; ++kh) {
              for (int kw = 0; kw < kw_n; ++kw) {
                const int th = ih + g.padding - kh;
                const int tw = iw + g.padding - kw;
                if (th < 0 || tw < 0 || th % g.stride != 0 || tw % g.stride != 0) continue;
                const int oh = th / g.stride, ow = tw / g.stride;
                if (oh >= oh_n || ow >= ow_n) continue;
                acc += weight[((static_cast<std::size_t>(o) * ci_n + ci) * kh_n + kh) * kw_n + kw] *
                       dy[((static_cast<std::size_t>(n) * co_n + o) * oh_n + oh) * ow_n + ow];
              }
            }
          }
          dx[idx++] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> dy, std::span<const T> x,
                            std::span<T> dweight, std::span<T> dbias) {
  const int ci_n = g.input.c, h = g.input.h, w = g.input.w;
  const int co_n = g.out_channels, kh_n = g.kernel_h, kw_n = g.kernel_w;
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const int s = g.stride, p = g.padding, batch = g.input.n;

#pragma omp parallel for schedule(static)
  for (int o = 0; o < co_n; ++o) {
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int kh = 0; kh < kh_n; ++kh) {
        for (int kw = 0; kw < kw_n; ++kw) {
          const ColumnRange cols = valid_columns(g, kw, ow_n);
          T acc = T(0);
          for (int n = 0; n < batch; ++n) {
            const T* xp = x.data() + (static_cast<long>(n) * ci_n + ci) * h * w;
            const T* dyp = dy.data() + (static_cast<long>(n) * co_n + o) * oh_n * ow_n;
            for (int oh = 0; oh < oh_n; ++oh) {
              const int ih = oh * s - p + kh;
              if (ih < 0 || ih >= h) continue;
              const T* xr = xp + ih * w;
              const T* dyr = dyp + oh * ow_n;
              for (int ow = cols.lo; ow < cols.hi; ++ow) acc += dyr[ow] * xr[ow * s - p + kw];
            }
          }
          dweight[((static_cast<long>(o) * ci_n + ci) * kh_n + kh) * kw_n + kw] += acc;
        }
      }
    }
    if (!dbias.empty()) {
      T acc = T(0);
      for (int n = 0; n < batch; ++n) {
        const T* dyp = dy.data() + (static_cast<long>(n) * co_n + o) * oh_n * ow_n;
        for (int i = 0; i < oh_n * ow_n; ++i) acc += dyp[i];
      }
      dbias[o] += acc;
    }
  }
}

template <typename T>
void conv2d_backward_weight_reference(const ConvGeometry& g, std::span<const T> dy,
                                      std::span<const T> x, std::span<T> dweight,
                                      std::span<T> dbias) {
  const int ci_n = g.input.c, h = g.input.h, w = g.input.w;
  const int co_n = g.out_channels, kh_n = g.kernel_h, kw_n = g.kernel_w;
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.input.n; ++n) {
    for (int o = 0; o < co_n; ++o) {
      for (int oh = 0; oh < oh_n; ++oh) {
        for (int ow = 0; ow < ow_n; ++ow) {
          const T d = dy[((static_cast<std::size_t>(n) * co_n + o) * oh_n + oh) * ow_n + ow];
          if (!dbias.empty()) dbias[o] += d;
          for (int ci = 0; ci < ci_n; ++ci) {
            for (int kh = 0; kh < kh_n; ++kh) {
              for (int kw = 0; kw < kw_n; ++kw) {
                const int ih = oh * g.stride - g.padding + kh;
                const int iw = ow * g.stride - g.padding + kw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                dweight[((static_cast<std::size_t>(o) * ci_n + ci) * kh_n + kh) * kw_n + kw] +=
                    d * x[((static_cast<std::size_t>(n) * ci_n + ci) * h + ih) * w + iw];
              }
            }
          }
        }
      }
    }
  }
}

std::vector<BilinearTap> bilinear_taps(int in, int out) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, src - i0};
  }
  return taps;
}

template <typename T>
void bilinear_forward(Shape in, int out_h, int out_w, std::span<const T> x, std::span<T> y) {
  const auto ty = bilinear_taps(in.h, out_h);
  const auto tx = bilinear_taps(in.w, out_w);
  const long planes = static_cast<long>(in.n) * in.c;

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const T* xp = x.data() + plane * in.h * in.w;
    T* yp = y.data() + plane * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T(1) - wy1;
      const T* r0 = xp + ty[oy].i0 * in.w;
      const T* r1 = xp + ty[oy].i1 * in.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T(1) - wx1;
        const int c0 = tx[ox].i0, c1 = tx[ox].i1;
        yp[oy * out_w + ox] = wy0 * (wx0 * r0[c0] + wx1 * r0[c1]) + wy1 * (wx0 * r1[c0] + wx1 * r1[c1]);
      }
    }
  }
}

template <typename T>
void bilinear_backward(Shape in, int out_h, int out_w, std::span<const T> dy, std::span<T> dx) {
  const auto ty = bilinear_taps(in.h, out_h);
  const auto tx = bilinear_taps(in.w, out_w);
  const long planes = static_cast<long>(in.n) * in.c;

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    T* dxp = dx.data() + plane * in.h * in.w;
    const T* dyp = dy.data() + plane * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T(1) - wy1;
      T* r0 = dxp + ty[oy].i0 * in.w;
      T* r1 = dxp + ty[oy].i1 * in.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T(1) - wx1;
        const int c0 = tx[ox].i0, c1 = tx[ox].i1;
        const T d = dyp[oy * out_w + ox];
        r0[c0] += wy0 * wx0 * d;
        r0[c1] += wy0 * wx1 * d;
        r1[c0] += wy1 * wx0 * d;
        r1[c1] += wy1 * wx1 * d;
      }
    }
  }
}

#define GUIDEDEPTH_INSTANTIATE_KERNELS(T)                                                       \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                  std::span<const T>, std::span<T>);                           \
  template void conv2d_forward_reference<T>(const ConvGeometry&, std::span<const T>,           \
                                            std::span<const T>, std::span<const T>,            \
                                            std::span<T>, std::uint64_t*);                     \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,              \
                                         std::span<const T>, std::span<T>);                    \
  template void conv2d_backward_input_reference<T>(const ConvGeometry&, std::span<const T>,    \
                                                   std::span<const T>, std::span<T>);          \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,             \
                                          std::span<const T>, std::span<T>, std::span<T>);     \
  template void conv2d_backward_weight_reference<T>(                                           \
      const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>, std::span<T>); \
  template void bilinear_forward<T>(Shape, int, int, std::span<const T>, std::span<T>);        \
  template void bilinear_backward<T>(Shape, int, int, std::span<const T>, std::span<T>);

GUIDEDEPTH_INSTANTIATE_KERNELS(float)
GUIDEDEPTH_INSTANTIATE_KERNELS(double)

}  // namespace guidedepth::kernels
