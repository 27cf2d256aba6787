#include "guidedepth/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "guidedepth/checkpoint.hpp"
#include "guidedepth/kv_file.hpp"
#include "guidedepth/tensor_io.hpp"

namespace guidedepth {

namespace fs = std::filesystem;

namespace {

void snapshot_config(const RunConfig& c, const std::string& command) {
  fs::create_directories(c.run_dir);
  write_key_value_file(c.run_dir / ("config." + command + ".txt"), c.entries(),
                       "gd " + command + " resolved configuration");
}

std::vector<DepthSample> load_dataset(const RunConfig& c) {
  if (c.dataset.empty()) {
    throw std::invalid_argument(
        "no dataset configured: set `dataset = <dir>` (create one with `gd generate`)");
  }
  return read_dataset(c.dataset);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

Model<float> load_model(const RunConfig& c) {
  Model<float> m = load_checkpoint(c.checkpoint_path());
  if (!(m.config == c.model_config())) {
    throw std::invalid_argument("checkpoint " + c.checkpoint_path().string() + " holds a " +
                                variant_label(m.config) +
                                " model whose configuration differs from the requested one; "
                                "adjust model/guidance keys to match the checkpoint");
  }
  return m;
}

}  // namespace

std::vector<ModelConfig> ablation_variants(const ModelConfig& base) {
  const std::pair<GuidanceType, GuidanceBranch> grid[] = {
      {GuidanceType::kImage, GuidanceBranch::kGub},
      {GuidanceType::kImage, GuidanceBranch::kDirect},
      {GuidanceType::kLaplacian, GuidanceBranch::kGub},
      {GuidanceType::kLaplacian, GuidanceBranch::kDirect},
      {GuidanceType::kNone, GuidanceBranch::kGub},
  };
  std::vector<ModelConfig> out;
  for (const auto& [type, branch] : grid) {
    ModelConfig c = base;
    c.guidance_type = type;
    c.guidance_branch = branch;
    out.push_back(c);
  }
  return out;
}

std::string ablation_csv_header() {
  return "variant,rmse,rel,log10,d1,d2,d3,latency_mean_ms,latency_p95_ms,params,macs";
}

std::string ablation_csv_row(const AblationRow& r) {
  std::ostringstream os;
  os.precision(9);
  os << r.variant << ',' << r.eval.rmse << ',' << r.eval.rel << ',' << r.eval.log10 << ','
     << r.eval.delta1 << ',' << r.eval.delta2 << ',' << r.eval.delta3 << ','
     << r.bench.latency_mean_ms << ',' << r.bench.latency_p95_ms << ',' << r.bench.param_count
     << ',' << r.bench.mac_count;
  return os.str();
}

std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const std::vector<DepthSample>& dataset) {
  std::vector<AblationRow> rows;
  for (const ModelConfig& variant : ablation_variants(config.model_config())) {
    TrainOptions t = config.train_options();
    t.model = variant;
    t.max_steps = config.ablate_steps;
    t.checkpoint_every = 0;
    TrainResult trained = train(t, dataset);
    AblationRow row;
    row.variant = variant_label(variant);
    row.eval = evaluate(model_predictor(trained.model), dataset, config.eval_options());
    row.bench = benchmark(trained.model, config.height, config.width, config.bench_runs,
                          config.bench_warmup, config.seed);
    rows.push_back(row);
  }
  return rows;
}

int command_generate(const RunConfig& c, std::ostream& out) {
  if (c.dataset.empty()) throw std::invalid_argument("generate needs `dataset = <output dir>`");
  if (fs::exists(c.dataset) && !fs::is_empty(c.dataset)) {
    throw std::invalid_argument("dataset directory " + c.dataset.string() +
                                " already exists and is not empty");
  }
  const SyntheticSceneSpec spec = c.scene_spec();
  write_dataset(c.dataset, generate_dataset(spec, c.count));
  out << "wrote " << c.count << " synthetic " << spec.height << "x" << spec.width
      << " samples (seeds " << spec.seed << ".." << spec.seed + c.count - 1 << ") to "
      << c.dataset.string() << '\n';
  return 0;
}

int command_train(const RunConfig& c, std::ostream& out) {
  const auto dataset = load_dataset(c);
  snapshot_config(c, "train");
  TrainOptions t = c.train_options();
  t.on_step = [&out](const LossRecord& r) {
    if (r.step % 10 == 0) out << loss_csv_row(r) << '\n';
  };
  out << loss_csv_header() << '\n';
  const TrainResult result = train(t, dataset);
  write_loss_history(c.run_dir / "loss_history.csv", result.history);
  Model<float> model = result.model;
  save_checkpoint(c.checkpoint_path(), model);
  out << "trained " << result.history.size() << " steps; final loss "
      << result.history.back().loss << "; checkpoint " << c.checkpoint_path().string() << '\n';
  return 0;
}

int command_eval(const RunConfig& c, std::ostream& out) {
  Model<float> model = load_model(c);
  const auto dataset = load_dataset(c);
  snapshot_config(c, "eval");
  const EvalReport report = evaluate(model_predictor(model), dataset, c.eval_options());
  write_text(c.run_dir / "eval_report.txt", report.to_text());
  write_text(c.run_dir / "eval.csv", EvalReport::csv_header() + "\n" + report.csv_row() + "\n");
  out << report.to_text() << EvalReport::csv_header() << '\n' << report.csv_row() << '\n';
  return 0;
}

void write_depth_preview(const fs::path& path, const Tensor<float>& depth, float d_max) {
  const Shape s = depth.shape();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P2\n" << s.w << ' ' << s.h << "\n255\n";
  const auto d = depth.data();
  for (int r = 0; r < s.h; ++r) {
    for (int col = 0; col < s.w; ++col) {
      const float v = d[static_cast<std::size_t>(r) * s.w + col];
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v / d_max, 0.0f, 1.0f))));
      os << g << (col + 1 == s.w ? '\n' : ' ');
    }
  }
}

int command_predict(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) {
    throw std::invalid_argument("predict needs `input = <sample dir or image .gdt>`");
  }
  Model<float> model = load_model(c);
  Tensor<float> image;
  float d_max = static_cast<float>(c.d_max);
  if (fs::is_directory(c.input)) {
    const DepthSample s = read_sample(c.input);
    image = s.image;
    d_max = s.d_max;
  } else {
    image = read_tensor(c.input);
    if (image.shape().n != 1 || image.shape().c != 3) {
      throw std::invalid_argument("predict input must be a (1,3,H,W) image, got " +
                                  image.shape().str());
    }
  }
  Tape<float> none(false);
  const Shape is = image.shape();
  auto x = (is.h == c.height && is.w == c.width) ? image
                                                   : bilinear_resize(none, image, c.height, c.width);
  auto pred = model_forward(none, model, x, NormMode::kEval);
  auto metric = Tensor<float>::zeros(pred.shape());
  {
    auto m = metric.mutable_data();
    const auto p = pred.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = std::clamp(d_max / std::max(p[i], kDepthEps), d_max / 100.0f, d_max);
    }
  }
  if (is.h != c.height || is.w != c.width) metric = bilinear_resize(none, metric, is.h, is.w);
  const fs::path output = c.output.empty() ? c.run_dir / "prediction.gdt" : c.output;
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_tensor(output, metric);
  out << "wrote " << metric.shape().str() << " metric depth to " << output.string() << '\n';
  if (!c.preview.empty()) {
    if (c.preview.has_parent_path()) fs::create_directories(c.preview.parent_path());
    write_depth_preview(c.preview, metric, d_max);
    out << "wrote preview " << c.preview.string() << '\n';
  }
  return 0;
}

int command_bench(const RunConfig& c, std::ostream& out) {
  Model<float> model = fs::exists(c.checkpoint_path() / "manifest.txt")
                           ? load_model(c)
                           : init_model<float>(c.model_config(), c.seed);
  snapshot_config(c, "bench");
  const BenchReport r = benchmark(model, c.height, c.width, c.bench_runs, c.bench_warmup, c.seed);
  write_text(c.run_dir / "bench.csv", BenchReport::csv_header() + "\n" + r.csv_row() + "\n");
  out << BenchReport::csv_header() << '\n' << r.csv_row() << '\n';
  return 0;
}

int command_ablate(const RunConfig& c, std::ostream& out) {
  const auto dataset = load_dataset(c);
  snapshot_config(c, "ablate");
  const auto rows = run_ablation(c, dataset);
  std::ostringstream csv;
  csv << ablation_csv_header() << '\n';
  for (const auto& r : rows) csv << ablation_csv_row(r) << '\n';
  write_text(c.run_dir / "ablation.csv", csv.str());
  out << csv.str();
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GuideDepth: guided-upsampling monocular depth estimation", "gd"};
  app.require_subcommand(1);
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, std::ostream&);
  };
  const Sub subs[] = {
      {"train", "train a model on a dataset directory", command_train},
      {"eval", "evaluate a checkpoint with the full evaluation protocol", command_eval},
      {"predict", "write a depth map for one image", command_predict},
      {"bench", "count parameters and MACs and time inference", command_bench},
      {"ablate", "train, evaluate and benchmark the five guidance variants", command_ablate},
      {"generate", "write a synthetic RGB-D dataset", command_generate},
  };
  std::string config_file;
  for (const Sub& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_file, "key = value configuration file");
    sub->allow_extras();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code;
  }

  for (const Sub& s : subs) {
    CLI::App* sub = app.get_subcommand(s.name);
    if (!sub->parsed()) continue;
    const std::vector<std::string> extras = sub->remaining();
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 0; i < extras.size(); ++i) {
      const std::string& flag = extras[i];
      if (flag.rfind("--", 0) != 0 || flag.size() <= 2) {
        err << "gd " << s.name << ": unexpected argument '" << flag
            << "' (overrides take the form --key value)\n";
        return 2;
      }
      std::string key = flag.substr(2), value;
      const auto eq = key.find('=');
      if (eq != std::string::npos) {
        value = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else if (i + 1 < extras.size()) {
        value = extras[++i];
      } else {
        err << "gd " << s.name << ": override --" << key << " is missing a value\n";
        return 2;
      }
      overrides.emplace_back(key, value);
    }
    try {
      const RunConfig config = load_run_config(config_file, overrides);
      return s.run(config, out);
    } catch (const std::exception& e) {
      err << "gd " << s.name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace guidedepth
