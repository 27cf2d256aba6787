#pragma once

#include <array>
#include <map>
#include <string>

namespace guidedepth {

enum class GuidanceType { kImage, kLaplacian, kNone };
enum class GuidanceBranch { kGub, kDirect };
/// Laplacian guidance fed to a stage: the band-pass residual x_k - L_k, or the
/// low-pass L_k itself.
enum class LaplacianMode { kBandPass, kLowPass };

std::string to_string(GuidanceType t);
std::string to_string(GuidanceBranch b);
std::string to_string(LaplacianMode m);
GuidanceType parse_guidance_type(const std::string& s);
GuidanceBranch parse_guidance_branch(const std::string& s);
LaplacianMode parse_laplacian_mode(const std::string& s);

struct ModelConfig {
  int encoder_width = 16;
  int encoder_out_channels = 64;
  /// Output channels of the three decoder stages; a 1x1 head maps the last
  /// one to depth.
  std::array<int, 3> decoder_channels{64, 32, 16};
  GuidanceType guidance_type = GuidanceType::kImage;
  GuidanceBranch guidance_branch = GuidanceBranch::kGub;
  LaplacianMode laplacian_mode = LaplacianMode::kBandPass;
  int se_reduction = 4;
  int output_channels = 1;

  static ModelConfig guidedepth();
  static ModelConfig guidedepth_s();
  static ModelConfig guidedepth_tiny();
  /// "guidedepth", "guidedepth-s" or "guidedepth-tiny".
  static ModelConfig named(const std::string& name);

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  std::map<std::string, std::string> to_key_values() const;
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

/// Table III variant label, e.g. "Image/GUB" or "None".
std::string variant_label(const ModelConfig& config);

}  // namespace guidedepth
