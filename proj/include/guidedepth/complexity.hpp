#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "guidedepth/blocks.hpp"

namespace guidedepth {

/// Total number of learnable scalars (batch-norm running statistics excluded).
std::uint64_t count_params(const ModelConfig& config);

/// Multiply-accumulates of one forward pass on a single h x w image:
/// kh*kw*ci*co*ho*wo per convolution plus in*out per dense layer. Resizes,
/// batch norm and elementwise ops are not counted. Throws if h or w is not a
/// positive multiple of 8.
std::uint64_t count_macs(const ModelConfig& config, int h, int w);

/// Runs a forward pass through the reference kernels and counts every
/// multiply-accumulate they execute.
std::uint64_t count_macs_instrumented(const ModelConfig& config, int h, int w);

struct BenchReport {
  std::uint64_t param_count = 0;
  std::uint64_t mac_count = 0;
  double latency_mean_ms = 0;
  double latency_p50_ms = 0;
  double latency_p95_ms = 0;
  int n_runs = 0;
  int height = 0;
  int width = 0;

  static std::string csv_header();  // params,macs,mean_ms,p50_ms,p95_ms,n_runs,resolution
  std::string csv_row() const;
  static BenchReport parse_csv_row(const std::string& row);
  bool operator==(const BenchReport&) const = default;
};

/// Nearest-rank percentile (q in (0,1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

/// Times eval-mode forwards on a random input with one OpenMP thread.
/// `warmup` runs are discarded. If the model's batch-norm statistics were
/// never updated, one train-mode forward on the random input initialises them.
BenchReport benchmark(Model<float>& model, int h, int w, int n_runs = 200, int warmup = 20,
                      std::uint64_t seed = 0);

}  // namespace guidedepth
