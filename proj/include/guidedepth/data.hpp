#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "guidedepth/tensor.hpp"

namespace guidedepth {

/// RGB image in [0,1] paired with metric depth in (0, d_max].
struct DepthSample {
  Tensor<float> image;  // (1,3,H,W)
  Tensor<float> depth;  // (1,1,H,W), meters
  float d_max = 10.0f;
  std::uint64_t seed = 0;

  int height() const { return depth.shape().h; }
  int width() const { return depth.shape().w; }
  /// Throws std::invalid_argument if shapes or value ranges are inconsistent.
  void validate() const;
};

enum PrimitiveKind : unsigned {
  kPlanes = 1u << 0,
  kSpheres = 1u << 1,
  kBoxes = 1u << 2,
  kAllPrimitives = kPlanes | kSpheres | kBoxes,
};

struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  int height = 48;
  int width = 64;
  int primitives = 6;
  float d_min = 2.0f;
  float d_max = 10.0f;
  unsigned kinds = kAllPrimitives;

  void validate() const;
};

/// Ray-casts a pinhole view of random planes, spheres and boxes in front of
/// a fronto-parallel background wall at d_max. Each primitive has a flat
/// colour under Lambert shading, so colour edges coincide with depth edges.
DepthSample generate_scene(const SyntheticSceneSpec& spec);

/// `count` scenes with seeds spec.seed, spec.seed + 1, ...
std::vector<DepthSample> generate_dataset(const SyntheticSceneSpec& spec, int count);

struct AugmentDraw {
  bool flip = false;
  bool swap = false;
  std::array<int, 3> permutation{0, 1, 2};
};

/// Horizontal flip with p = 0.5, colour channel permutation with p = 0.25.
/// Always consumes the same amount of randomness.
AugmentDraw draw_augmentation(std::mt19937_64& rng);
DepthSample apply_augmentation(const DepthSample& sample, const AugmentDraw& draw);
DepthSample augment(const DepthSample& sample, std::mt19937_64& rng);

/// Uniform double in [0,1) from 53 random bits.
double uniform01(std::mt19937_64& rng);

Tensor<float> flip_horizontal(const Tensor<float>& t);
Tensor<float> flip_vertical(const Tensor<float>& t);
Tensor<float> permute_channels(const Tensor<float>& t, const std::array<int, 3>& perm);
/// Stacks (1,c,h,w) tensors into (n,c,h,w).
Tensor<float> stack_batch(const std::vector<Tensor<float>>& items);

// Sample directory: image.gdt, depth.gdt and `meta` (d_max, seed).
void write_sample(const std::filesystem::path& dir, const DepthSample& sample);
DepthSample read_sample(const std::filesystem::path& dir);

// Dataset directory: numbered sample subdirectories 000000, 000001, ...
void write_dataset(const std::filesystem::path& dir, const std::vector<DepthSample>& samples);
std::vector<DepthSample> read_dataset(const std::filesystem::path& dir);

}  // namespace guidedepth
