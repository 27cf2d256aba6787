#include "guidedepth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace guidedepth {

namespace {

Tensor<float> reciprocal_scaled(const Tensor<float>& t, float d_max, const char* what) {
  if (!(d_max > 0.0f)) throw std::domain_error(std::string(what) + ": d_max must be positive");
  auto out = Tensor<float>::zeros(t.shape());
  const auto in = t.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!(in[i] > 0.0f) || !std::isfinite(in[i])) {
      throw std::domain_error(std::string(what) + ": value " + std::to_string(in[i]) +
                              " at index " + std::to_string(i) + " is not a positive depth");
    }
    o[i] = d_max / std::max(in[i], kDepthEps);
  }
  return out;
}

Tensor<float> resize(const Tensor<float>& t, int h, int w) {
  if (t.shape().h == h && t.shape().w == w) return t;
  Tape<float> none(false);
  return bilinear_resize(none, t, h, w);
}

}  // namespace

Tensor<float> inverse_depth_transform(const Tensor<float>& depth, float d_max) {
  return reciprocal_scaled(depth, d_max, "inverse_depth_transform");
}

Tensor<float> inverse_depth_untransform(const Tensor<float>& normalized, float d_max) {
  return reciprocal_scaled(normalized, d_max, "inverse_depth_untransform");
}

void Crop::check_within(int h, int w) const {
  if (!(0 <= top && top < bottom && bottom <= h && 0 <= left && left < right && right <= w)) {
    throw std::out_of_range("crop " + str() + " does not fit a " + std::to_string(h) + "x" +
                            std::to_string(w) + " depth map");
  }
}

std::string Crop::str() const {
  return std::to_string(top) + ":" + std::to_string(bottom) + "/" + std::to_string(left) + ":" +
         std::to_string(right);
}

Crop nyu_crop() { return {20, 460, 24, 616}; }

Crop kitti_crop(int h, int w) {
  if (h < 1 || w < 1) throw std::out_of_range("kitti_crop: image dims must be positive");
  // Products computed in double; floor rounding throughout.
  const auto fl = [](double v) { return static_cast<int>(std::floor(v)); };
  Crop c{fl(0.332 * h), fl(0.914 * h), fl(0.036 * w), fl(0.964 * w)};
  c.check_within(h, w);
  return c;
}

std::string to_string(CropKind k) {
  switch (k) {
    case CropKind::kNone: return "none";
    case CropKind::kNyu: return "nyu";
    case CropKind::kKitti: return "kitti";
  }
  return "?";
}

CropKind parse_crop_kind(const std::string& s) {
  if (s == "none") return CropKind::kNone;
  if (s == "nyu") return CropKind::kNyu;
  if (s == "kitti") return CropKind::kKitti;
  throw std::invalid_argument("unknown crop '" + s + "' (expected none, nyu or kitti)");
}

Crop crop_for(CropKind kind, int h, int w) {
  Crop c{0, h, 0, w};
  if (kind == CropKind::kNyu) c = nyu_crop();
  if (kind == CropKind::kKitti) c = kitti_crop(h, w);
  c.check_within(h, w);
  return c;
}

std::string to_string(FlipAxis a) {
  return a == FlipAxis::kHorizontal ? "horizontal" : "vertical";
}

FlipAxis parse_flip_axis(const std::string& s) {
  if (s == "horizontal") return FlipAxis::kHorizontal;
  if (s == "vertical") return FlipAxis::kVertical;
  throw std::invalid_argument("unknown flip axis '" + s + "' (expected horizontal or vertical)");
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(9);
  os << "rmse = " << rmse << "\nrel = " << rel << "\nlog10 = " << log10
     << "\ndelta1 = " << delta1 << "\ndelta2 = " << delta2 << "\ndelta3 = " << delta3
     << "\nn_images = " << n_images << "\nflip_averaged = " << (flip_averaged ? "true" : "false")
     << "\ncrop = " << to_string(crop_kind) << "\ncrop_rect = " << crop.str() << '\n';
  return os.str();
}

std::string EvalReport::csv_header() { return "rmse,rel,log10,d1,d2,d3,n,flip,crop"; }

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os.precision(9);
  os << rmse << ',' << rel << ',' << log10 << ',' << delta1 << ',' << delta2 << ',' << delta3
     << ',' << n_images << ',' << (flip_averaged ? 1 : 0) << ',' << to_string(crop_kind) << '@'
     << crop.str();
  return os.str();
}

EvalReport compute_metrics(const Tensor<float>& y, const Tensor<float>& yhat,
                           std::span<const std::uint8_t> mask) {
  if (y.shape() != yhat.shape()) {
    throw ShapeError("compute_metrics: " + y.shape().str() + " vs " + yhat.shape().str());
  }
  if (!mask.empty() && mask.size() != y.numel()) {
    throw ShapeError("compute_metrics: mask size does not match depth maps");
  }
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  const auto a = y.data(), b = yhat.data();
  double se = 0, rel = 0, lg = 0;
  std::size_t n = 0, d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double yi = a[i], pi = b[i];
    if (!(yi > 0) || !(pi > 0)) {
      throw std::domain_error("compute_metrics: depths must be positive under the mask");
    }
    const double diff = yi - pi;
    se += diff * diff;
    rel += std::abs(diff) / yi;
    lg += std::abs(std::log10(yi) - std::log10(pi));
    const double ratio = std::max(yi / pi, pi / yi);
    d1 += ratio < t1;
    d2 += ratio < t2;
    d3 += ratio < t3;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("compute_metrics: mask selects no pixels");
  const double dn = static_cast<double>(n);
  EvalReport r;
  r.rmse = std::sqrt(se / dn);
  r.rel = rel / dn;
  r.log10 = lg / dn;
  r.delta1 = static_cast<double>(d1) / dn;
  r.delta2 = static_cast<double>(d2) / dn;
  r.delta3 = static_cast<double>(d3) / dn;
  r.n_images = 1;
  r.crop = Crop{0, y.shape().h, 0, y.shape().w};
  return r;
}

EvalReport compute_metrics(const Tensor<float>& y, const Tensor<float>& yhat, const Crop& crop) {
  const Shape s = y.shape();
  crop.check_within(s.h, s.w);
  std::vector<std::uint8_t> mask(y.numel(), 0);
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    for (int r = crop.top; r < crop.bottom; ++r) {
      for (int c = crop.left; c < crop.right; ++c) mask[(p * s.h + r) * s.w + c] = 1;
    }
  }
  EvalReport out = compute_metrics(y, yhat, mask);
  out.crop = crop;
  return out;
}

void MetricAccumulator::add(const EvalReport& r) {
  rmse_ += r.rmse;
  rel_ += r.rel;
  log10_ += r.log10;
  d1_ += r.delta1;
  d2_ += r.delta2;
  d3_ += r.delta3;
  ++n_;
}

void MetricAccumulator::merge(const MetricAccumulator& o) {
  rmse_ += o.rmse_;
  rel_ += o.rel_;
  log10_ += o.log10_;
  d1_ += o.d1_;
  d2_ += o.d2_;
  d3_ += o.d3_;
  n_ += o.n_;
}

EvalReport MetricAccumulator::report() const {
  if (n_ == 0) throw std::logic_error("MetricAccumulator::report with no images");
  const double n = static_cast<double>(n_);
  EvalReport r;
  r.rmse = rmse_ / n;
  r.rel = rel_ / n;
  r.log10 = log10_ / n;
  r.delta1 = d1_ / n;
  r.delta2 = d2_ / n;
  r.delta3 = d3_ / n;
  r.n_images = n_;
  return r;
}

Tensor<float> flip(const Tensor<float>& t, FlipAxis axis) {
  return axis == FlipAxis::kHorizontal ? flip_horizontal(t) : flip_vertical(t);
}

namespace {

// Metric-depth prediction at ground-truth resolution for one (possibly
// flipped) pass.
Tensor<float> predict_metric(const Predictor& predictor, const DepthSample& sample,
                             std::size_t index, bool flipped, const EvalOptions& opt) {
  const Tensor<float> input = flipped ? flip(sample.image, opt.flip_axis) : sample.image;
  const Tensor<float> resized = resize(input, opt.model_height, opt.model_width);
  const Tensor<float> pred = predictor(PredictRequest{resized, index, flipped, opt.flip_axis});
  if (pred.shape() != Shape{1, 1, opt.model_height, opt.model_width}) {
    throw ShapeError("predictor returned " + pred.shape().str() + " for a " +
                     std::to_string(opt.model_height) + "x" + std::to_string(opt.model_width) +
                     " input");
  }
  const float lo = sample.d_max / 100.0f, hi = sample.d_max;
  auto metric = Tensor<float>::zeros(pred.shape());
  auto m = metric.mutable_data();
  const auto p = pred.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const float d = sample.d_max / std::max(p[i], kDepthEps);
    m[i] = std::clamp(d, lo, hi);
  }
  auto up = resize(metric, sample.height(), sample.width());
  return flipped ? flip(up, opt.flip_axis) : up;
}

}  // namespace

EvalReport evaluate(const Predictor& predictor, const std::vector<DepthSample>& dataset,
                    const EvalOptions& opt) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (opt.model_height % 8 != 0 || opt.model_width % 8 != 0 || opt.model_height < 8 ||
      opt.model_width < 8) {
    throw std::invalid_argument("evaluate: model resolution must be a positive multiple of 8");
  }
  MetricAccumulator acc;
  Crop last;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const DepthSample& s = dataset[i];
    const Crop crop = crop_for(opt.crop, s.height(), s.width());
    EvalReport r = compute_metrics(s.depth, predict_metric(predictor, s, i, false, opt), crop);
    if (opt.flip_average) {
      const EvalReport f =
          compute_metrics(s.depth, predict_metric(predictor, s, i, true, opt), crop);
      r.rmse = 0.5 * (r.rmse + f.rmse);
      r.rel = 0.5 * (r.rel + f.rel);
      r.log10 = 0.5 * (r.log10 + f.log10);
      r.delta1 = 0.5 * (r.delta1 + f.delta1);
      r.delta2 = 0.5 * (r.delta2 + f.delta2);
      r.delta3 = 0.5 * (r.delta3 + f.delta3);
    }
    acc.add(r);
    last = crop;
  }
  EvalReport out = acc.report();
  out.flip_averaged = opt.flip_average;
  out.crop_kind = opt.crop;
  out.crop = last;
  return out;
}

Predictor model_predictor(Model<float>& model) {
  return [&model](const PredictRequest& req) {
    Tape<float> none(false);
    return model_forward(none, model, req.image, NormMode::kEval);
  };
}

Predictor oracle_predictor(const std::vector<DepthSample>& dataset) {
  return [&dataset](const PredictRequest& req) {
    const DepthSample& s = dataset.at(req.index);
    const Tensor<float> gt = req.flipped ? flip(s.depth, req.axis) : s.depth;
    return resize(inverse_depth_transform(gt, s.d_max), req.image.shape().h,
                  req.image.shape().w);
  };
}

}  // namespace guidedepth
