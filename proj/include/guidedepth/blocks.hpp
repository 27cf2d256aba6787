#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "guidedepth/model_config.hpp"
#include "guidedepth/ops.hpp"

namespace guidedepth {

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // (co, ci, k, k)
  Tensor<T> bias;    // (co, 1, 1, 1)
  int stride = 1;
  int padding = 0;
};

template <typename T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormStats<T> stats;
};

template <typename T>
struct DenseParams {
  Tensor<T> weight;  // (out, in, 1, 1)
  Tensor<T> bias;    // (out, 1, 1, 1)
};

/// conv3x3 -> BN -> ReLU -> conv1x1 -> BN -> ReLU.
template <typename T>
struct StackedConvParams {
  ConvParams<T> conv3;
  NormParams<T> bn3;
  ConvParams<T> conv1;
  NormParams<T> bn1;

  int in_channels() const { return conv3.weight.shape().c; }
  int out_channels() const { return conv1.weight.shape().n; }
};

template <typename T>
struct SEGateParams {
  DenseParams<T> squeeze;
  DenseParams<T> excite;
};

/// One decoder stage. `guide` is only present for the GUB branch with a
/// guidance image; Direct concatenates the raw 3-channel guidance and None
/// uses no guidance at all.
template <typename T>
struct GUBParams {
  GuidanceType type = GuidanceType::kImage;
  GuidanceBranch branch = GuidanceBranch::kGub;
  std::optional<StackedConvParams<T>> guide;
  StackedConvParams<T> target;
  SEGateParams<T> se;
  StackedConvParams<T> residual;
  ConvParams<T> reduce;

  int channels() const { return target.in_channels(); }
  int out_channels() const { return reduce.weight.shape().n; }
};

template <typename T>
struct EncoderParams {
  std::array<StackedConvParams<T>, 3> stages;
};

template <typename T>
struct Model {
  ModelConfig config;
  EncoderParams<T> encoder;
  std::array<GUBParams<T>, 3> decoder;
  ConvParams<T> head;
};

/// Kaiming-normal (fan-in) weights, zero biases and betas, unit gammas.
/// Fully determined by `seed`.
template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed);

template <typename T>
Tensor<T> stacked_conv(Tape<T>& tape, StackedConvParams<T>& params, const Tensor<T>& x,
                       NormMode mode);

template <typename T>
Tensor<T> se_gate(Tape<T>& tape, const SEGateParams<T>& params, const Tensor<T>& x);

/// Guided upsampling block for the GUB branch (and the unguided variant):
///   h_up = Up2(z); h_t = S_target(h_up); h_g = S_guide(guide)
///   h_res = S_res(SE([h_t, h_g])); out = reduce1x1(h_up + h_res)
/// `guide` must have exactly twice z's spatial size; it is ignored (and may
/// be undefined) when the block has no guidance.
template <typename T>
Tensor<T> gub_forward(Tape<T>& tape, GUBParams<T>& params, const Tensor<T>& z,
                      const Tensor<T>& guide, NormMode mode);

/// As gub_forward but the raw guidance channels are concatenated in place of
/// S_guide features.
template <typename T>
Tensor<T> direct_guidance_forward(Tape<T>& tape, GUBParams<T>& params, const Tensor<T>& z,
                                  const Tensor<T>& guide, NormMode mode);

/// Dispatches on the block's branch.
template <typename T>
Tensor<T> decoder_stage_forward(Tape<T>& tape, GUBParams<T>& params, const Tensor<T>& z,
                                const Tensor<T>& guide, NormMode mode);

/// Laplacian guidance at scale 1/2^k, with L_k = Up_k(Down_{k+1}(x)).
/// Band-pass mode returns x_k - L_k, low-pass mode returns L_k.
template <typename T>
Tensor<T> laplacian_guidance(const Tensor<T>& x, int k, LaplacianMode mode);

/// Guidance images for the three decoder stages (1/4, 1/2 and full scale).
/// Entries are undefined for GuidanceType::kNone.
template <typename T>
std::array<Tensor<T>, 3> guidance_pyramid(const ModelConfig& config, const Tensor<T>& x);

template <typename T>
Tensor<T> encoder_forward(Tape<T>& tape, EncoderParams<T>& params, const Tensor<T>& x,
                          NormMode mode);

/// (n,3,H,W) -> (n,1,H,W) in inverse-depth-normalised units.
template <typename T>
Tensor<T> model_forward(Tape<T>& tape, Model<T>& model, const Tensor<T>& x, NormMode mode);

/// Learnable tensors in a fixed, stable order.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> parameter_list(Model<T>& model);

/// Batch-norm running statistics, named "<layer>.running_mean|running_var".
template <typename T>
std::vector<std::pair<std::string, BatchNormStats<T>*>> norm_stats_list(Model<T>& model);

template <typename T>
std::size_t parameter_count(Model<T>& model);

template <typename T>
void zero_grad(Model<T>& model);

/// Same architecture and values in another precision (64-bit shadow copies).
template <typename U, typename T>
Model<U> cast_model(Model<T>& model) {
  Model<U> out = init_model<U>(model.config, 0);
  auto src = parameter_list(model);
  auto dst = parameter_list(out);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto v = src[i].second->template cast<U>();
    v.set_requires_grad(true);
    *dst[i].second = v;
  }
  auto src_stats = norm_stats_list(model);
  auto dst_stats = norm_stats_list(out);
  for (std::size_t i = 0; i < src_stats.size(); ++i) {
    dst_stats[i].second->mean = src_stats[i].second->mean.template cast<U>();
    dst_stats[i].second->var = src_stats[i].second->var.template cast<U>();
    dst_stats[i].second->initialized = src_stats[i].second->initialized;
  }
  return out;
}

}  // namespace guidedepth
