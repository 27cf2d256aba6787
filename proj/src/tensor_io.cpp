#include "guidedepth/tensor_io.hpp"

#include <algorithm>
#include <limits>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace guidedepth {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'G', 'D', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kRank = 4;
constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 4 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& t) {
  const Shape s = t.shape();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderSize + 4 * t.numel());
  out.push_back(kDtypeF32);
  out.push_back(kRank);
  for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
  for (const float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor<float> decode_tensor(const std::vector<std::uint8_t>& bytes, std::optional<Shape> expected) {
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw TensorIoError(TensorIoErrorKind::kMagicMismatch, "not a GDT1 tensor (bad magic)");
  }
  if (bytes.size() < kHeaderSize) {
    throw TensorIoError(TensorIoErrorKind::kTruncated, "GDT1 header truncated");
  }
  if (bytes[4] != kDtypeF32) {
    throw TensorIoError(TensorIoErrorKind::kUnsupportedDtype,
                        "unsupported GDT1 dtype code " + std::to_string(bytes[4]));
  }
  if (bytes[5] != kRank) {
    throw TensorIoError(TensorIoErrorKind::kBadRank,
                        "GDT1 rank must be 4, got " + std::to_string(bytes[5]));
  }
  std::array<std::uint32_t, 4> dims{};
  for (int i = 0; i < 4; ++i) dims[i] = get_u32(bytes.data() + 6 + 4 * i);
  for (std::uint32_t d : dims) {
    if (d > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
      throw TensorIoError(TensorIoErrorKind::kShapeMismatch, "GDT1 dimension out of range");
    }
  }
  const Shape shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                    static_cast<int>(dims[2]), static_cast<int>(dims[3])};
  if (expected && *expected != shape) {
    throw TensorIoError(TensorIoErrorKind::kShapeMismatch,
                        "tensor shape " + shape.str() + " does not match expected " +
                            expected->str());
  }
  const std::size_t payload = bytes.size() - kHeaderSize;
  const std::size_t want = shape.numel() * 4;
  if (payload < want) {
    throw TensorIoError(TensorIoErrorKind::kTruncated,
                        "GDT1 payload truncated: " + std::to_string(payload) + " of " +
                            std::to_string(want) + " bytes");
  }
  if (payload > want) {
    throw TensorIoError(TensorIoErrorKind::kTrailingData, "GDT1 payload has trailing bytes");
  }
  std::vector<float> values(shape.numel());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes.data() + kHeaderSize + 4 * i));
  }
  return Tensor<float>::from_vector(shape, std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw TensorIoError(TensorIoErrorKind::kOpen, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw TensorIoError(TensorIoErrorKind::kOpen, "write failed for " + path.string());
}

Tensor<float> read_tensor(const std::filesystem::path& path, std::optional<Shape> expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TensorIoError(TensorIoErrorKind::kOpen, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes, expected);
  } catch (const TensorIoError& e) {
    throw TensorIoError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace guidedepth
