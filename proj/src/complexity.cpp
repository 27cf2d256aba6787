#include "guidedepth/complexity.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

namespace guidedepth {

namespace {

void require_resolution(int h, int w) {
  if (h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0) {
    throw std::invalid_argument("resolution " + std::to_string(h) + "x" + std::to_string(w) +
                                " must be a positive multiple of 8 in both dimensions");
  }
}

std::uint64_t conv_macs(std::uint64_t k, std::uint64_t ci, std::uint64_t co, std::uint64_t pixels) {
  return k * k * ci * co * pixels;
}

// conv3x3 + conv1x1 of a stacked convolution producing `out` channels over
// `pixels` output positions.
std::uint64_t stacked_macs(std::uint64_t in, std::uint64_t out, std::uint64_t pixels) {
  return conv_macs(3, in, out, pixels) + conv_macs(1, out, out, pixels);
}

}  // namespace

std::uint64_t count_params(const ModelConfig& config) {
  Model<float> m = init_model<float>(config, 0);
  return parameter_count(m);
}

std::uint64_t count_macs(const ModelConfig& c, int h, int w) {
  c.validate();
  require_resolution(h, w);
  std::uint64_t macs = 0;
  const std::uint64_t enc_w = c.encoder_width;
  const std::uint64_t widths[4] = {3, enc_w, 2 * enc_w,
                                   static_cast<std::uint64_t>(c.encoder_out_channels)};
  for (int s = 0; s < 3; ++s) {
    const std::uint64_t pixels = static_cast<std::uint64_t>(h >> (s + 1)) * (w >> (s + 1));
    macs += stacked_macs(widths[s], widths[s + 1], pixels);
  }
  std::uint64_t in = c.encoder_out_channels;
  for (int s = 0; s < 3; ++s) {
    const int k = 2 - s;
    const std::uint64_t pixels = static_cast<std::uint64_t>(h >> k) * (w >> k);
    const std::uint64_t out = c.decoder_channels[s];
    std::uint64_t cat = in;
    if (c.guidance_type != GuidanceType::kNone) {
      if (c.guidance_branch == GuidanceBranch::kGub) {
        macs += stacked_macs(3, in, pixels);
        cat += in;
      } else {
        cat += 3;
      }
    }
    macs += stacked_macs(in, in, pixels);                // S_target
    const std::uint64_t hidden = cat / c.se_reduction;  // SE dense pair
    macs += 2 * cat * hidden;
    macs += stacked_macs(cat, in, pixels);  // S_res
    macs += conv_macs(1, in, out, pixels);  // reduce
    in = out;
  }
  macs += conv_macs(1, in, c.output_channels, static_cast<std::uint64_t>(h) * w);
  return macs;
}

std::uint64_t count_macs_instrumented(const ModelConfig& config, int h, int w) {
  require_resolution(h, w);
  Model<float> m = init_model<float>(config, 0);
  auto x = Tensor<float>::full({1, 3, h, w}, 0.5f);
  Tape<float> none(false);
  MacCountingScope scope;
  // Train mode so fresh running statistics are not required; the mode does
  // not change which multiply-accumulates run.
  model_forward(none, m, x, NormMode::kTrain);
  return scope.count();
}

std::string BenchReport::csv_header() {
  return "params,macs,mean_ms,p50_ms,p95_ms,n_runs,resolution";
}

std::string BenchReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%.17g,%.17g,%.17g,%d,%dx%d",
                static_cast<unsigned long long>(param_count),
                static_cast<unsigned long long>(mac_count), latency_mean_ms, latency_p50_ms,
                latency_p95_ms, n_runs, height, width);
  return buf;
}

BenchReport BenchReport::parse_csv_row(const std::string& row) {
  std::vector<std::string> f;
  std::stringstream ss(row);
  std::string part;
  while (std::getline(ss, part, ',')) f.push_back(part);
  if (f.size() != 7) {
    throw std::invalid_argument("bench row needs 7 fields, got " + std::to_string(f.size()) +
                                ": '" + row + "'");
  }
  BenchReport r;
  try {
    r.param_count = std::stoull(f[0]);
    r.mac_count = std::stoull(f[1]);
    r.latency_mean_ms = std::stod(f[2]);
    r.latency_p50_ms = std::stod(f[3]);
    r.latency_p95_ms = std::stod(f[4]);
    r.n_runs = std::stoi(f[5]);
    const auto x = f[6].find('x');
    if (x == std::string::npos) throw std::invalid_argument("resolution");
    r.height = std::stoi(f[6].substr(0, x));
    r.width = std::stoi(f[6].substr(x + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed bench row: '" + row + "'");
  }
  return r;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of no samples");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("percentile q must lie in (0, 1]");
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

BenchReport benchmark(Model<float>& model, int h, int w, int n_runs, int warmup,
                      std::uint64_t seed) {
  require_resolution(h, w);
  if (n_runs < 1 || warmup < 0) throw std::invalid_argument("benchmark needs n_runs >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(3) * h * w);
  for (float& x : v) x = dist(rng);
  const auto x = Tensor<float>::from_vector({1, 3, h, w}, std::move(v));

  Tape<float> none(false);
  bool calibrated = true;
  for (auto& [name, stats] : norm_stats_list(model)) calibrated = calibrated && stats->initialized;
  if (!calibrated) model_forward(none, model, x, NormMode::kTrain);

  const int previous_threads = omp_get_max_threads();
  omp_set_num_threads(1);
  std::vector<double> ms;
  ms.reserve(n_runs);
  for (int i = 0; i < warmup + n_runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model_forward(none, model, x, NormMode::kEval);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  omp_set_num_threads(previous_threads);

  BenchReport r;
  r.param_count = parameter_count(model);
  r.mac_count = count_macs(model.config, h, w);
  double total = 0;
  for (double t : ms) total += t;
  r.latency_mean_ms = total / static_cast<double>(ms.size());
  r.latency_p50_ms = percentile(ms, 0.5);
  r.latency_p95_ms = percentile(ms, 0.95);
  r.n_runs = n_runs;
  r.height = h;
  r.width = w;
  return r;
}

}  // namespace guidedepth
