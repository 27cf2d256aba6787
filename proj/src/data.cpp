#include "guidedepth/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "guidedepth/kv_file.hpp"
#include "guidedepth/tensor_io.hpp"

namespace guidedepth {

namespace fs = std::filesystem;

void DepthSample::validate() const {
  const Shape is = image.shape(), ds = depth.shape();
  if (is.n != 1 || is.c != 3 || ds.n != 1 || ds.c != 1 || is.h != ds.h || is.w != ds.w) {
    throw std::invalid_argument("sample image " + is.str() + " and depth " + ds.str() +
                                " do not form a (1,3,H,W)/(1,1,H,W) pair");
  }
  if (!(d_max > 0.0f)) throw std::invalid_argument("sample d_max must be positive");
  for (const float d : depth.data()) {
    if (!(d > 0.0f) || d > d_max) {
      throw std::invalid_argument("sample depth value " + std::to_string(d) +
                                  " outside (0, d_max]");
    }
  }
}

void SyntheticSceneSpec::validate() const {
  if (height < 1 || width < 1) throw std::invalid_argument("scene resolution must be positive");
  if (primitives < 0) throw std::invalid_argument("primitive count must be >= 0");
  if (!(d_min > 0.0f) || !(d_max > d_min)) {
    throw std::invalid_argument("scene depth range must satisfy 0 < d_min < d_max");
  }
  if ((kinds & kAllPrimitives) == 0 && primitives > 0) {
    throw std::invalid_argument("scene spec enables no primitive kinds");
  }
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 normalized(Vec3 a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

struct Primitive {
  PrimitiveKind kind = kPlanes;
  Vec3 normal;  // plane: n . p = offset
  double offset = 0;
  Vec3 center;  // sphere / box
  double radius = 0;
  Vec3 half;  // box half extents
  std::array<double, 3> color{};
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;
};

Hit intersect(const Primitive& p, Vec3 dir) {
  Hit h;
  switch (p.kind) {
    case kPlanes: {
      const double denom = dot(p.normal, dir);
      if (std::abs(denom) < 1e-12) break;
      const double t = p.offset / denom;
      if (t > 0) h = {t, denom < 0 ? p.normal : -1.0 * p.normal};
      break;
    }
    case kSpheres: {
      const double a = dot(dir, dir), b = dot(dir, p.center);
      const double c = dot(p.center, p.center) - p.radius * p.radius;
      const double disc = b * b - a * c;
      if (disc < 0) break;
      const double t = (b - std::sqrt(disc)) / a;
      if (t > 0) h = {t, normalized(t * dir - p.center)};
      break;
    }
    case kBoxes: {
      const double lo[3] = {p.center.x - p.half.x, p.center.y - p.half.y, p.center.z - p.half.z};
      const double hi[3] = {p.center.x + p.half.x, p.center.y + p.half.y, p.center.z + p.half.z};
      const double d[3] = {dir.x, dir.y, dir.z};
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int axis = -1;
      double sign = 0;
      for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-12) {
          if (0 < lo[i] || 0 > hi[i]) return h;
          continue;
        }
        double t0 = lo[i] / d[i], t1 = hi[i] / d[i];
        double s = -1;
        if (t0 > t1) {
          std::swap(t0, t1);
          s = 1;
        }
        if (t0 > t_near) {
          t_near = t0;
          axis = i;
          sign = s;
        }
        t_far = std::min(t_far, t1);
      }
      if (t_near > t_far || t_near <= 0 || axis < 0) break;
      Vec3 n;
      (axis == 0 ? n.x : axis == 1 ? n.y : n.z) = sign;
      h = {t_near, n};
      break;
    }
    default: break;
  }
  return h;
}

std::array<double, 3> random_color(std::mt19937_64& rng) {
  return {0.1 + 0.8 * uniform01(rng), 0.1 + 0.8 * uniform01(rng), 0.1 + 0.8 * uniform01(rng)};
}

}  // namespace

DepthSample generate_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const double d_min = spec.d_min, d_max = spec.d_max;
  const double tan_half_v = std::tan(std::numbers::pi / 6.0);
  const double focal = (spec.height / 2.0) / tan_half_v;
  const double tan_half_h = (spec.width / 2.0) / focal;

  std::vector<PrimitiveKind> kinds;
  for (PrimitiveKind k : {kPlanes, kSpheres, kBoxes}) {
    if (spec.kinds & k) kinds.push_back(k);
  }
  const auto background = random_color(rng);

  std::vector<Primitive> prims;
  for (int i = 0; i < spec.primitives; ++i) {
    Primitive p;
    // A floor plane first gives every scene a near-to-far depth gradient.
    p.kind = (i == 0 && (spec.kinds & kPlanes)) ? kPlanes
                                                 : kinds[static_cast<std::size_t>(
                                                       uniform01(rng) * kinds.size())];
    p.color = random_color(rng);
    const double z = d_min + (0.9 * d_max - d_min) * uniform01(rng);
    const double cx = (2 * uniform01(rng) - 1) * 0.8 * z * tan_half_h;
    const double cy = (2 * uniform01(rng) - 1) * 0.8 * z * tan_half_v;
    switch (p.kind) {
      case kPlanes: {
        const double height = d_min * (0.6 + 0.6 * uniform01(rng));
        const double side = uniform01(rng);
        if (i == 0 || side < 0.5) {
          p.normal = {0, 1, 0};  // floor y = -height
          p.offset = -height;
        } else if (side < 0.75) {
          p.normal = {1, 0, 0};  // wall x = +/-height
          p.offset = (uniform01(rng) < 0.5 ? -1 : 1) * height * 1.5;
        } else {
          p.normal = {0, 1, 0};  // ceiling
          p.offset = height * 1.5;
        }
        break;
      }
      case kSpheres:
        p.center = {cx, cy, z};
        p.radius = z * (0.08 + 0.17 * uniform01(rng));
        break;
      case kBoxes:
        p.center = {cx, cy, z};
        p.half = {z * (0.05 + 0.15 * uniform01(rng)), z * (0.05 + 0.15 * uniform01(rng)),
                  z * (0.05 + 0.15 * uniform01(rng))};
        break;
      default: break;
    }
    prims.push_back(p);
  }

  const Vec3 light = normalized({-0.4, 0.7, -0.6});
  const int h = spec.height, w = spec.width;
  auto image = Tensor<float>::zeros({1, 3, h, w});
  auto depth = Tensor<float>::zeros({1, 1, h, w});
  auto img = image.mutable_data();
  auto dep = depth.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Vec3 dir{(c + 0.5 - w / 2.0) / focal, -(r + 0.5 - h / 2.0) / focal, 1.0};
      double t = d_max;
      std::array<double, 3> color = background;
      for (const auto& p : prims) {
        const Hit hit = intersect(p, dir);
        if (hit.t < t) {
          t = hit.t;
          const double shade = 0.35 + 0.65 * std::max(0.0, dot(hit.normal, light));
          color = {p.color[0] * shade, p.color[1] * shade, p.color[2] * shade};
        }
      }
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      dep[i] = static_cast<float>(std::clamp(t, d_min, d_max));
      for (int ch = 0; ch < 3; ++ch) {
        img[ch * plane + i] = static_cast<float>(std::clamp(color[ch], 0.0, 1.0));
      }
    }
  }
  return {image, depth, spec.d_max, spec.seed};
}

std::vector<DepthSample> generate_dataset(const SyntheticSceneSpec& spec, int count) {
  std::vector<DepthSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    SyntheticSceneSpec s = spec;
    s.seed = spec.seed + static_cast<std::uint64_t>(i);
    out.push_back(generate_scene(s));
  }
  return out;
}

AugmentDraw draw_augmentation(std::mt19937_64& rng) {
  static constexpr std::array<std::array<int, 3>, 5> kSwaps{
      {{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  AugmentDraw d;
  d.flip = uniform01(rng) < 0.5;
  d.swap = uniform01(rng) < 0.25;
  const auto pick = static_cast<std::size_t>(uniform01(rng) * kSwaps.size());
  if (d.swap) d.permutation = kSwaps[pick];
  return d;
}

DepthSample apply_augmentation(const DepthSample& sample, const AugmentDraw& draw) {
  DepthSample out = sample;
  if (draw.flip) {
    out.image = flip_horizontal(sample.image);
    out.depth = flip_horizontal(sample.depth);
  }
  if (draw.swap) out.image = permute_channels(out.image, draw.permutation);
  return out;
}

DepthSample augment(const DepthSample& sample, std::mt19937_64& rng) {
  return apply_augmentation(sample, draw_augmentation(rng));
}

Tensor<float> flip_horizontal(const Tensor<float>& t) {
  const Shape s = t.shape();
  auto out = Tensor<float>::zeros(s);
  const auto in = t.data();
  auto o = out.mutable_data();
  for (std::size_t row = 0; row < static_cast<std::size_t>(s.n) * s.c * s.h; ++row) {
    for (int x = 0; x < s.w; ++x) o[row * s.w + x] = in[row * s.w + (s.w - 1 - x)];
  }
  return out;
}

Tensor<float> flip_vertical(const Tensor<float>& t) {
  const Shape s = t.shape();
  auto out = Tensor<float>::zeros(s);
  const auto in = t.data();
  auto o = out.mutable_data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    for (int y = 0; y < s.h; ++y) {
      std::copy_n(in.begin() + (p * s.h + (s.h - 1 - y)) * s.w, s.w,
                  o.begin() + (p * s.h + y) * s.w);
    }
  }
  return out;
}

Tensor<float> permute_channels(const Tensor<float>& t, const std::array<int, 3>& perm) {
  const Shape s = t.shape();
  if (s.c != 3) throw ShapeError("permute_channels expects 3 channels, got " + s.str());
  auto out = Tensor<float>::zeros(s);
  const auto in = t.data();
  auto o = out.mutable_data();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 3; ++c) {
      std::copy_n(in.begin() + (static_cast<std::size_t>(n) * 3 + perm[c]) * plane, plane,
                  o.begin() + (static_cast<std::size_t>(n) * 3 + c) * plane);
    }
  }
  return out;
}

Tensor<float> stack_batch(const std::vector<Tensor<float>>& items) {
  if (items.empty()) throw ShapeError("stack_batch of zero tensors");
  const Shape s = items.front().shape();
  if (s.n != 1) throw ShapeError("stack_batch expects (1,c,h,w) items");
  std::vector<float> v;
  v.reserve(s.numel() * items.size());
  for (const auto& t : items) {
    if (t.shape() != s) throw ShapeError("stack_batch: inconsistent item shapes");
    v.insert(v.end(), t.data().begin(), t.data().end());
  }
  return Tensor<float>::from_vector({static_cast<int>(items.size()), s.c, s.h, s.w}, std::move(v));
}

void write_sample(const fs::path& dir, const DepthSample& sample) {
  sample.validate();
  fs::create_directories(dir);
  write_tensor(dir / "image.gdt", sample.image);
  write_tensor(dir / "depth.gdt", sample.depth);
  char dmax[64];
  std::snprintf(dmax, sizeof dmax, "%.9g", static_cast<double>(sample.d_max));
  write_key_value_file(dir / "meta", {{"d_max", dmax}, {"seed", std::to_string(sample.seed)}});
}

DepthSample read_sample(const fs::path& dir) {
  DepthSample s;
  s.image = read_tensor(dir / "image.gdt");
  const Shape is = s.image.shape();
  if (is.n != 1 || is.c != 3) {
    throw TensorIoError(TensorIoErrorKind::kShapeMismatch,
                        (dir / "image.gdt").string() + ": expected (1,3,H,W), got " + is.str());
  }
  s.depth = read_tensor(dir / "depth.gdt", Shape{1, 1, is.h, is.w});
  const auto meta = to_map(read_key_value_file(dir / "meta"), (dir / "meta").string());
  for (const auto& [k, v] : meta) {
    if (k == "d_max") {
      s.d_max = std::stof(v);
    } else if (k == "seed") {
      s.seed = std::stoull(v);
    } else {
      throw std::invalid_argument((dir / "meta").string() + ": unknown key '" + k + "'");
    }
  }
  if (!meta.contains("d_max")) {
    throw std::invalid_argument((dir / "meta").string() + ": missing d_max");
  }
  s.validate();
  return s;
}

void write_dataset(const fs::path& dir, const std::vector<DepthSample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%06zu", i);
    write_sample(dir / name, samples[i]);
  }
}

std::vector<DepthSample> read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("dataset directory " + dir.string() +
                             " does not exist (create one with `gd generate`)");
  }
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && !name.empty() &&
        std::all_of(name.begin(), name.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      entries.push_back(e.path());
    }
  }
  std::sort(entries.begin(), entries.end());
  if (entries.empty()) throw std::runtime_error("dataset " + dir.string() + " has no samples");
  std::vector<DepthSample> out;
  out.reserve(entries.size());
  for (const auto& p : entries) out.push_back(read_sample(p));
  return out;
}

}  // namespace guidedepth
