#include "guidedepth/blocks.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace guidedepth {

namespace {

template <typename T>
Tensor<T> leaf(Tensor<T> t) {
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> kaiming(std::mt19937_64& rng, Shape shape) {
  const int fan_in = shape.c * shape.h * shape.w;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  std::vector<T> v(shape.numel());
  for (T& x : v) x = static_cast<T>(dist(rng));
  return leaf(Tensor<T>::from_vector(shape, std::move(v)));
}

template <typename T>
ConvParams<T> make_conv(std::mt19937_64& rng, int in, int out, int k, int stride) {
  ConvParams<T> p;
  p.weight = kaiming<T>(rng, {out, in, k, k});
  p.bias = leaf(Tensor<T>::zeros({out, 1, 1, 1}));
  p.stride = stride;
  p.padding = k / 2;
  return p;
}

template <typename T>
NormParams<T> make_norm(int channels) {
  return {leaf(Tensor<T>::full({channels, 1, 1, 1}, T(1))),
          leaf(Tensor<T>::zeros({channels, 1, 1, 1})), BatchNormStats<T>::fresh(channels)};
}

template <typename T>
StackedConvParams<T> make_stacked(std::mt19937_64& rng, int in, int out, int stride = 1) {
  StackedConvParams<T> p;
  p.conv3 = make_conv<T>(rng, in, out, 3, stride);
  p.bn3 = make_norm<T>(out);
  p.conv1 = make_conv<T>(rng, out, out, 1, 1);
  p.bn1 = make_norm<T>(out);
  return p;
}

template <typename T>
DenseParams<T> make_dense(std::mt19937_64& rng, int in, int out) {
  return {kaiming<T>(rng, {out, in, 1, 1}), leaf(Tensor<T>::zeros({out, 1, 1, 1}))};
}

int concat_width(const ModelConfig& c, int channels) {
  if (c.guidance_type == GuidanceType::kNone) return channels;
  return channels + (c.guidance_branch == GuidanceBranch::kGub ? channels : 3);
}

template <typename T>
GUBParams<T> make_gub(std::mt19937_64& rng, const ModelConfig& c, int channels, int out) {
  GUBParams<T> p;
  p.type = c.guidance_type;
  p.branch = c.guidance_branch;
  if (p.type != GuidanceType::kNone && p.branch == GuidanceBranch::kGub) {
    p.guide = make_stacked<T>(rng, 3, channels);
  }
  p.target = make_stacked<T>(rng, channels, channels);
  const int cat = concat_width(c, channels);
  const int hidden = cat / c.se_reduction;
  p.se = {make_dense<T>(rng, cat, hidden), make_dense<T>(rng, hidden, cat)};
  p.residual = make_stacked<T>(rng, cat, channels);
  p.reduce = make_conv<T>(rng, channels, out, 1, 1);
  return p;
}

template <typename T>
void append_conv(std::vector<std::pair<std::string, Tensor<T>*>>& out, const std::string& name,
                 ConvParams<T>& c) {
  out.emplace_back(name + ".weight", &c.weight);
  out.emplace_back(name + ".bias", &c.bias);
}

template <typename T>
void append_norm(std::vector<std::pair<std::string, Tensor<T>*>>& out, const std::string& name,
                 NormParams<T>& n) {
  out.emplace_back(name + ".gamma", &n.gamma);
  out.emplace_back(name + ".beta", &n.beta);
}

template <typename T>
void append_stacked(std::vector<std::pair<std::string, Tensor<T>*>>& out, const std::string& name,
                    StackedConvParams<T>& s) {
  append_conv(out, name + ".conv3", s.conv3);
  append_norm(out, name + ".bn3", s.bn3);
  append_conv(out, name + ".conv1", s.conv1);
  append_norm(out, name + ".bn1", s.bn1);
}

template <typename T>
void append_stacked_stats(std::vector<std::pair<std::string, BatchNormStats<T>*>>& out,
                          const std::string& name, StackedConvParams<T>& s) {
  out.emplace_back(name + ".bn3", &s.bn3.stats);
  out.emplace_back(name + ".bn1", &s.bn1.stats);
}

template <typename T>
void require_divisible_by_8(const char* op, const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h < 8 || s.w < 8 || s.h % 8 != 0 || s.w % 8 != 0) {
    throw ShapeError(std::string(op) + ": input height and width must be divisible by 8, got " +
                     s.str());
  }
}

template <typename T>
void require_guide(const char* op, const Tensor<T>& z, const Tensor<T>& guide) {
  const Shape zs = z.shape(), gs = guide.shape();
  if (!guide.defined() || gs.n != zs.n || gs.c != 3 || gs.h != 2 * zs.h || gs.w != 2 * zs.w) {
    throw ShapeError(std::string(op) + ": guide " + gs.str() +
                     " must be (n,3,2h,2w) for features " + zs.str());
  }
}

// Shared tail of every decoder-stage variant. `guidance` is the tensor
// concatenated after h_t (undefined for the unguided variant).
template <typename T>
Tensor<T> upsample_and_correct(Tape<T>& tape, GUBParams<T>& p, const Tensor<T>& z,
                               const Tensor<T>& guidance, NormMode mode) {
  if (z.shape().c != p.channels()) {
    throw ShapeError("decoder stage expects " + std::to_string(p.channels()) +
                     " feature channels, got " + z.shape().str());
  }
  const Shape zs = z.shape();
  auto h_up = bilinear_resize(tape, z, 2 * zs.h, 2 * zs.w);
  auto h_t = stacked_conv(tape, p.target, h_up, mode);
  auto joint = guidance.defined() ? concat_channels(tape, h_t, guidance) : h_t;
  auto h_res = stacked_conv(tape, p.residual, se_gate(tape, p.se, joint), mode);
  auto corrected = add(tape, h_up, h_res);
  return conv2d(tape, corrected, p.reduce.weight, p.reduce.bias, 1, 0);
}

}  // namespace

template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model<T> m;
  m.config = config;
  const int w = config.encoder_width;
  m.encoder.stages[0] = make_stacked<T>(rng, 3, w, 2);
  m.encoder.stages[1] = make_stacked<T>(rng, w, 2 * w, 2);
  m.encoder.stages[2] = make_stacked<T>(rng, 2 * w, config.encoder_out_channels, 2);
  int in = config.encoder_out_channels;
  for (int s = 0; s < 3; ++s) {
    m.decoder[s] = make_gub<T>(rng, config, in, config.decoder_channels[s]);
    in = config.decoder_channels[s];
  }
  m.head = make_conv<T>(rng, in, config.output_channels, 1, 1);
  return m;
}

template <typename T>
Tensor<T> stacked_conv(Tape<T>& tape, StackedConvParams<T>& p, const Tensor<T>& x, NormMode mode) {
  auto y = conv2d(tape, x, p.conv3.weight, p.conv3.bias, p.conv3.stride, p.conv3.padding);
  y = relu(tape, batch_norm(tape, y, p.bn3.gamma, p.bn3.beta, p.bn3.stats, mode));
  y = conv2d(tape, y, p.conv1.weight, p.conv1.bias, 1, 0);
  return relu(tape, batch_norm(tape, y, p.bn1.gamma, p.bn1.beta, p.bn1.stats, mode));
}

template <typename T>
Tensor<T> se_gate(Tape<T>& tape, const SEGateParams<T>& p, const Tensor<T>& x) {
  if (p.squeeze.weight.shape().c != x.shape().c) {
    throw ShapeError("se_gate: gate built for " + std::to_string(p.squeeze.weight.shape().c) +
                     " channels, input " + x.shape().str());
  }
  auto s = global_avg_pool(tape, x);
  s = relu(tape, dense(tape, s, p.squeeze.weight, p.squeeze.bias));
  auto gate = sigmoid(tape, dense(tape, s, p.excite.weight, p.excite.bias));
  return channel_mul(tape, x, gate);
}

template <typename T>
Tensor<T> gub_forward(Tape<T>& tape, GUBParams<T>& p, const Tensor<T>& z, const Tensor<T>& guide,
                      NormMode mode) {
  if (p.type == GuidanceType::kNone) return upsample_and_correct(tape, p, z, Tensor<T>{}, mode);
  if (p.branch != GuidanceBranch::kGub || !p.guide) {
    throw std::logic_error("gub_forward called on a Direct-branch block");
  }
  require_guide("gub_forward", z, guide);
  auto h_g = stacked_conv(tape, *p.guide, guide, mode);
  return upsample_and_correct(tape, p, z, h_g, mode);
}

template <typename T>
Tensor<T> direct_guidance_forward(Tape<T>& tape, GUBParams<T>& p, const Tensor<T>& z,
                                  const Tensor<T>& guide, NormMode mode) {
  if (p.type == GuidanceType::kNone || p.branch != GuidanceBranch::kDirect) {
    throw std::logic_error("direct_guidance_forward called on a non-Direct block");
  }
  require_guide("direct_guidance_forward", z, guide);
  return upsample_and_correct(tape, p, z, guide, mode);
}

template <typename T>
Tensor<T> decoder_stage_forward(Tape<T>& tape, GUBParams<T>& p, const Tensor<T>& z,
                                const Tensor<T>& guide, NormMode mode) {
  if (p.type != GuidanceType::kNone && p.branch == GuidanceBranch::kDirect) {
    return direct_guidance_forward(tape, p, z, guide, mode);
  }
  return gub_forward(tape, p, z, guide, mode);
}

template <typename T>
Tensor<T> laplacian_guidance(const Tensor<T>& x, int k, LaplacianMode mode) {
  if (k < 0 || k > 2) throw std::invalid_argument("laplacian_guidance: k must be in {0,1,2}");
  const Shape s = x.shape();
  const int f = 1 << (k + 1);
  if (s.h % f != 0 || s.w % f != 0) {
    throw ShapeError("laplacian_guidance: dims " + s.str() + " not divisible by " +
                     std::to_string(f));
  }
  Tape<T> none(false);
  const int h = s.h >> k, w = s.w >> k;
  auto down = bilinear_resize(none, x, s.h >> (k + 1), s.w >> (k + 1));
  auto low = bilinear_resize(none, down, h, w);
  if (mode == LaplacianMode::kLowPass) return low;
  auto xk = k == 0 ? x : bilinear_resize(none, x, h, w);
  return sub(none, xk, low);
}

template <typename T>
std::array<Tensor<T>, 3> guidance_pyramid(const ModelConfig& config, const Tensor<T>& x) {
  std::array<Tensor<T>, 3> out;
  if (config.guidance_type == GuidanceType::kNone) return out;
  Tape<T> none(false);
  const Shape s = x.shape();
  for (int stage = 0; stage < 3; ++stage) {
    const int k = 2 - stage;
    if (config.guidance_type == GuidanceType::kLaplacian) {
      out[stage] = laplacian_guidance(x, k, config.laplacian_mode);
    } else {
      out[stage] = k == 0 ? x : bilinear_resize(none, x, s.h >> k, s.w >> k);
    }
  }
  return out;
}

template <typename T>
Tensor<T> encoder_forward(Tape<T>& tape, EncoderParams<T>& p, const Tensor<T>& x, NormMode mode) {
  require_divisible_by_8("encoder_forward", x);
  auto y = x;
  for (auto& stage : p.stages) y = stacked_conv(tape, stage, y, mode);
  return y;
}

template <typename T>
Tensor<T> model_forward(Tape<T>& tape, Model<T>& m, const Tensor<T>& x, NormMode mode) {
  require_divisible_by_8("model_forward", x);
  if (x.shape().c != 3) throw ShapeError("model_forward: expected a 3-channel image");
  const auto guides = guidance_pyramid(m.config, x);
  auto z = encoder_forward(tape, m.encoder, x, mode);
  for (int s = 0; s < 3; ++s) z = decoder_stage_forward(tape, m.decoder[s], z, guides[s], mode);
  return conv2d(tape, z, m.head.weight, m.head.bias, 1, 0);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> parameter_list(Model<T>& m) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (int i = 0; i < 3; ++i) {
    append_stacked(out, "encoder.stage" + std::to_string(i), m.encoder.stages[i]);
  }
  for (int i = 0; i < 3; ++i) {
    const std::string name = "decoder.gub" + std::to_string(i + 1);
    auto& g = m.decoder[i];
    if (g.guide) append_stacked(out, name + ".guide", *g.guide);
    append_stacked(out, name + ".target", g.target);
    out.emplace_back(name + ".se.squeeze.weight", &g.se.squeeze.weight);
    out.emplace_back(name + ".se.squeeze.bias", &g.se.squeeze.bias);
    out.emplace_back(name + ".se.excite.weight", &g.se.excite.weight);
    out.emplace_back(name + ".se.excite.bias", &g.se.excite.bias);
    append_stacked(out, name + ".residual", g.residual);
    append_conv(out, name + ".reduce", g.reduce);
  }
  append_conv(out, "head", m.head);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, BatchNormStats<T>*>> norm_stats_list(Model<T>& m) {
  std::vector<std::pair<std::string, BatchNormStats<T>*>> out;
  for (int i = 0; i < 3; ++i) {
    append_stacked_stats(out, "encoder.stage" + std::to_string(i), m.encoder.stages[i]);
  }
  for (int i = 0; i < 3; ++i) {
    const std::string name = "decoder.gub" + std::to_string(i + 1);
    auto& g = m.decoder[i];
    if (g.guide) append_stacked_stats(out, name + ".guide", *g.guide);
    append_stacked_stats(out, name + ".target", g.target);
    append_stacked_stats(out, name + ".residual", g.residual);
  }
  return out;
}

template <typename T>
std::size_t parameter_count(Model<T>& m) {
  std::size_t n = 0;
  for (const auto& [name, t] : parameter_list(m)) n += t->numel();
  return n;
}

template <typename T>
void zero_grad(Model<T>& m) {
  for (auto& [name, t] : parameter_list(m)) t->clear_grad();
}

#define GUIDEDEPTH_INSTANTIATE_BLOCKS(T)                                                          \
  template Model<T> init_model<T>(const ModelConfig&, std::uint64_t);                             \
  template Tensor<T> stacked_conv(Tape<T>&, StackedConvParams<T>&, const Tensor<T>&, NormMode);   \
  template Tensor<T> se_gate(Tape<T>&, const SEGateParams<T>&, const Tensor<T>&);                 \
  template Tensor<T> gub_forward(Tape<T>&, GUBParams<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                 NormMode);                                                       \
  template Tensor<T> direct_guidance_forward(Tape<T>&, GUBParams<T>&, const Tensor<T>&,           \
                                             const Tensor<T>&, NormMode);                         \
  template Tensor<T> decoder_stage_forward(Tape<T>&, GUBParams<T>&, const Tensor<T>&,             \
                                           const Tensor<T>&, NormMode);                           \
  template Tensor<T> laplacian_guidance(const Tensor<T>&, int, LaplacianMode);                    \
  template std::array<Tensor<T>, 3> guidance_pyramid(const ModelConfig&, const Tensor<T>&);       \
  template Tensor<T> encoder_forward(Tape<T>&, EncoderParams<T>&, const Tensor<T>&, NormMode);    \
  template Tensor<T> model_forward(Tape<T>&, Model<T>&, const Tensor<T>&, NormMode);              \
  template std::vector<std::pair<std::string, Tensor<T>*>> parameter_list(Model<T>&);             \
  template std::vector<std::pair<std::string, BatchNormStats<T>*>> norm_stats_list(Model<T>&);    \
  template std::size_t parameter_count(Model<T>&);                                                \
  template void zero_grad(Model<T>&);

GUIDEDEPTH_INSTANTIATE_BLOCKS(float)
GUIDEDEPTH_INSTANTIATE_BLOCKS(double)

}  // namespace guidedepth
