#pragma once

#include <cstdint>
#include <span>

#include "guidedepth/tensor.hpp"

// Raw compute kernels behind the differentiable ops.
//
// Each hot kernel exists twice: an OpenMP version used by the ops, and a
// plain serial reference that loops over every multiply-accumulate
// (including zero-padding taps) and is kept for testing, MAC instrumentation
// and benchmarking. The OpenMP kernels split work over independent output
// planes only, so their results do not depend on the thread count.
namespace guidedepth::kernels {

struct ConvGeometry {
  Shape input;  // (n, ci, h, w)
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;

  int out_h() const { return (input.h + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (input.w + 2 * padding - kernel_w) / stride + 1; }
  Shape output() const { return {input.n, out_channels, out_h(), out_w()}; }
  Shape weight() const { return {out_channels, input.c, kernel_h, kernel_w}; }
  std::uint64_t macs() const;
};

/// y = conv(x, w) + b. `bias` may be empty.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y);
template <typename T>
void conv2d_forward_reference(const ConvGeometry& g, std::span<const T> x,
                              std::span<const T> weight, std::span<const T> bias,
                              std::span<T> y, std::uint64_t* mac_count = nullptr);

/// dx += conv_transpose(dy, w)
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy,
                           std::span<const T> weight, std::span<T> dx);
template <typename T>
void conv2d_backward_input_reference(const ConvGeometry& g, std::span<const T> dy,
                                     std::span<const T> weight, std::span<T> dx);

/// dw += correlate(dy, x); db += sum(dy). `dbias` may be empty.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> dy, std::span<const T> x,
                            std::span<T> dweight, std::span<T> dbias);
template <typename T>
void conv2d_backward_weight_reference(const ConvGeometry& g, std::span<const T> dy,
                                      std::span<const T> x, std::span<T> dweight,
                                      std::span<T> dbias);

/// Half-pixel-centre bilinear sampling tap along one axis.
struct BilinearTap {
  int i0 = 0;
  int i1 = 0;
  double w1 = 0.0;  // weight of i1; i0 gets 1 - w1
};

/// Source taps for resizing an axis of length `in` to length `out`.
std::vector<BilinearTap> bilinear_taps(int in, int out);

template <typename T>
void bilinear_forward(Shape in, int out_h, int out_w, std::span<const T> x, std::span<T> y);
template <typename T>
void bilinear_backward(Shape in, int out_h, int out_w, std::span<const T> dy, std::span<T> dx);

}  // namespace guidedepth::kernels
