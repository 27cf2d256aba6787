#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "guidedepth/blocks.hpp"
#include "guidedepth/data.hpp"

namespace guidedepth {

/// Smallest depth (metric or normalised) accepted before division.
inline constexpr float kDepthEps = 1e-3f;

/// y_norm = d_max / y. Values in (0, eps) are clamped to eps; non-positive or
/// non-finite depths throw std::domain_error.
Tensor<float> inverse_depth_transform(const Tensor<float>& depth, float d_max);
/// Inverse of inverse_depth_transform (the map is its own inverse).
Tensor<float> inverse_depth_untransform(const Tensor<float>& normalized, float d_max);

/// Half-open pixel rectangle [top, bottom) x [left, right).
struct Crop {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  int rows() const { return bottom - top; }
  int cols() const { return right - left; }
  /// Throws std::out_of_range unless 0 <= top < bottom <= h and likewise for columns.
  void check_within(int h, int w) const;
  std::string str() const;  // "top:bottom/left:right"
  bool operator==(const Crop&) const = default;
};

/// Eigen crop for NYU Depth v2 at 480x640.
Crop nyu_crop();
/// Fractional KITTI crop rows [0.332H, 0.914H), cols [0.036W, 0.964W), floored.
Crop kitti_crop(int h, int w);

enum class CropKind { kNone, kNyu, kKitti };
std::string to_string(CropKind k);
CropKind parse_crop_kind(const std::string& s);
/// Crop to apply at ground-truth resolution h x w; throws if it does not fit.
Crop crop_for(CropKind kind, int h, int w);

enum class FlipAxis { kHorizontal, kVertical };
std::string to_string(FlipAxis a);
FlipAxis parse_flip_axis(const std::string& s);

struct EvalReport {
  double rmse = 0;
  double rel = 0;
  double log10 = 0;
  double delta1 = 0;
  double delta2 = 0;
  double delta3 = 0;
  std::size_t n_images = 0;
  bool flip_averaged = false;
  CropKind crop_kind = CropKind::kNone;
  Crop crop;

  /// Multi-line `key = value` block.
  std::string to_text() const;
  static std::string csv_header();  // rmse,rel,log10,d1,d2,d3,n,flip,crop
  std::string csv_row() const;
};

/// Metrics of one image over the pixels where `mask` is non-zero (all pixels
/// when `mask` is empty). Inputs are metric depths and must be positive on
/// the mask; an empty selection throws std::invalid_argument.
EvalReport compute_metrics(const Tensor<float>& y, const Tensor<float>& yhat,
                           std::span<const std::uint8_t> mask = {});
/// Same, restricted to a crop rectangle.
EvalReport compute_metrics(const Tensor<float>& y, const Tensor<float>& yhat, const Crop& crop);

/// Sums of per-image metrics. Merging is associative and commutative up to
/// floating-point reassociation.
class MetricAccumulator {
 public:
  void add(const EvalReport& image);
  void merge(const MetricAccumulator& other);
  std::size_t count() const { return n_; }
  /// Dataset means; throws if nothing was added.
  EvalReport report() const;

 private:
  double rmse_ = 0, rel_ = 0, log10_ = 0, d1_ = 0, d2_ = 0, d3_ = 0;
  std::size_t n_ = 0;
};

struct PredictRequest {
  const Tensor<float>& image;  // (1,3,h,w) at model resolution, already flipped if `flipped`
  std::size_t index;           // dataset position
  bool flipped;
  FlipAxis axis;
};

/// Returns a (1,1,h,w) prediction in inverse-depth-normalised units at the
/// request's resolution.
using Predictor = std::function<Tensor<float>(const PredictRequest&)>;

struct EvalOptions {
  int model_height = 48;
  int model_width = 64;
  CropKind crop = CropKind::kNone;
  bool flip_average = true;
  FlipAxis flip_axis = FlipAxis::kHorizontal;
};

/// Full protocol per image: resize input to model resolution, predict,
/// convert to metric depth (clamped to [d_max/100, d_max]), upsample to the
/// ground-truth resolution, crop, compute metrics. With flip averaging the
/// mirrored input is evaluated too (its prediction is mirrored back) and the
/// two per-image contributions are averaged. Reports the mean over images.
EvalReport evaluate(const Predictor& predictor, const std::vector<DepthSample>& dataset,
                    const EvalOptions& options);

/// Eval-mode forward of a trained model. The model must outlive the predictor.
Predictor model_predictor(Model<float>& model);

/// Returns the sample's own ground truth, normalised and resized to the
/// request resolution: bounds the error introduced by the protocol alone.
Predictor oracle_predictor(const std::vector<DepthSample>& dataset);

Tensor<float> flip(const Tensor<float>& t, FlipAxis axis);

}  // namespace guidedepth
