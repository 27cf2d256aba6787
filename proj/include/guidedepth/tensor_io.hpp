#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "guidedepth/tensor.hpp"

namespace guidedepth {

// GDT1 tensor files: "GDT1", u8 dtype (0 = f32), u8 rank (4), four u32 LE
// dims, then the raw little-endian payload.

enum class TensorIoErrorKind {
  kOpen,
  kMagicMismatch,
  kUnsupportedDtype,
  kBadRank,
  kShapeMismatch,
  kTruncated,
  kTrailingData,
};

class TensorIoError : public std::runtime_error {
 public:
  TensorIoError(TensorIoErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  TensorIoErrorKind kind() const { return kind_; }

 private:
  TensorIoErrorKind kind_;
};

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& t);
/// Decodes a full GDT1 buffer. If `expected` is given, the stored shape must
/// match it exactly.
Tensor<float> decode_tensor(const std::vector<std::uint8_t>& bytes,
                            std::optional<Shape> expected = std::nullopt);

void write_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_tensor(const std::filesystem::path& path,
                          std::optional<Shape> expected = std::nullopt);

}  // namespace guidedepth
