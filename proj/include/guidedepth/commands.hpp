#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "guidedepth/complexity.hpp"
#include "guidedepth/eval.hpp"
#include "guidedepth/run_config.hpp"

namespace guidedepth {

/// The five guidance variants of the ablation grid, in table order:
/// Image/GUB, Image/Direct, Laplacian/GUB, Laplacian/Direct, None.
std::vector<ModelConfig> ablation_variants(const ModelConfig& base);

struct AblationRow {
  std::string variant;
  EvalReport eval;
  BenchReport bench;
};

std::string ablation_csv_header();
std::string ablation_csv_row(const AblationRow& row);

/// For each variant: train `ablate_steps` steps, evaluate on the dataset,
/// benchmark at the configured resolution.
std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const std::vector<DepthSample>& dataset);

int command_generate(const RunConfig& config, std::ostream& out);
int command_train(const RunConfig& config, std::ostream& out);
int command_eval(const RunConfig& config, std::ostream& out);
int command_predict(const RunConfig& config, std::ostream& out);
int command_bench(const RunConfig& config, std::ostream& out);
int command_ablate(const RunConfig& config, std::ostream& out);

/// Writes depth as a plain-text (P2) PGM, nearer surfaces brighter.
void write_depth_preview(const std::filesystem::path& path, const Tensor<float>& depth,
                         float d_max);

/// Entry point of the `gd` tool:
///   gd <train|eval|predict|bench|ablate|generate> --config <file> [--key value ...]
/// Returns the process exit code; errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace guidedepth
