#include "guidedepth/run_config.hpp"

#include <cstdio>
#include <functional>
#include <stdexcept>

#include "guidedepth/kv_file.hpp"

namespace guidedepth {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw std::invalid_argument("config key '" + key + "': expected " + expected + ", got '" +
                              value + "'");
}

template <typename Int>
Int parse_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "an integer");
  }
  if (used != v.size()) bad_value(key, v, "an integer");
  return static_cast<Int>(out);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a non-negative integer");
  }
  if (used != v.size() || v.front() == '-') bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::pair<int, int> parse_resolution(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) bad_value(key, v, "HxW, e.g. 48x64");
  return {parse_integer<int>(key, v.substr(0, x)), parse_integer<int>(key, v.substr(x + 1))};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GD_INT(name)                                                                    \
  Field {                                                                               \
    #name, [](RunConfig& c, const std::string& v) { c.name = parse_integer<decltype(c.name)>(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }                       \
  }
#define GD_REAL(name)                                                                   \
  Field {                                                                               \
    #name, [](RunConfig& c, const std::string& v) { c.name = parse_real(#name, v); },  \
        [](const RunConfig& c) { return fmt(c.name); }                                  \
  }
#define GD_BOOL(name)                                                                   \
  Field {                                                                               \
    #name, [](RunConfig& c, const std::string& v) { c.name = parse_bool(#name, v); },  \
        [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }       \
  }
#define GD_STRING(name)                                                                 \
  Field {                                                                               \
    #name, [](RunConfig& c, const std::string& v) { c.name = v; },                      \
        [](const RunConfig& c) { return std::string(c.name); }                          \
  }
#define GD_PATH(name)                                                                   \
  Field {                                                                               \
    #name, [](RunConfig& c, const std::string& v) { c.name = v; },                      \
        [](const RunConfig& c) { return c.name.string(); }                              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GD_STRING(model),
      GD_STRING(guidance_type),
      GD_STRING(guidance_branch),
      GD_STRING(laplacian_mode),
      Field{"resolution",
            [](RunConfig& c, const std::string& v) {
              std::tie(c.height, c.width) = parse_resolution("resolution", v);
            },
            [](const RunConfig& c) {
              return std::to_string(c.height) + "x" + std::to_string(c.width);
            }},
      GD_PATH(dataset),
      GD_PATH(run_dir),
      GD_PATH(checkpoint),
      GD_PATH(input),
      GD_PATH(output),
      GD_PATH(preview),
      Field{"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_unsigned("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      GD_INT(epochs),
      GD_INT(drop_epoch),
      GD_REAL(drop_factor),
      GD_REAL(lr),
      GD_REAL(beta1),
      GD_REAL(beta2),
      GD_REAL(adam_eps),
      GD_INT(batch_size),
      GD_INT(max_steps),
      GD_BOOL(augment),
      GD_INT(checkpoint_every),
      GD_REAL(lambda_l1),
      GD_INT(ssim_window),
      GD_REAL(ssim_sigma),
      GD_STRING(grad_norm),
      GD_REAL(dynamic_range),
      GD_STRING(crop),
      GD_BOOL(flip_average),
      GD_STRING(flip_axis),
      GD_INT(bench_runs),
      GD_INT(bench_warmup),
      GD_INT(ablate_steps),
      GD_INT(count),
      Field{"scene_resolution",
            [](RunConfig& c, const std::string& v) {
              std::tie(c.scene_height, c.scene_width) = parse_resolution("scene_resolution", v);
            },
            [](const RunConfig& c) {
              return std::to_string(c.scene_height) + "x" + std::to_string(c.scene_width);
            }},
      GD_INT(primitives),
      GD_REAL(d_min),
      GD_REAL(d_max),
  };
  return table;
}

#undef GD_INT
#undef GD_REAL
#undef GD_BOOL
#undef GD_STRING
#undef GD_PATH

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  std::string known;
  for (const Field& f : fields()) known += std::string(known.empty() ? "" : ", ") + f.key;
  throw std::invalid_argument("unknown config key '" + key + "' (known keys: " + known + ")");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void RunConfig::validate() const {
  model_config().validate();
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw std::invalid_argument("resolution must be a positive multiple of 8 in both dimensions");
  }
  TrainOptions t = train_options();
  t.checkpoint_dir = run_dir / "checkpoints";
  t.validate();
  if (dynamic_range != 0.0) loss_config().validate();
  if (dynamic_range < 0.0) throw std::invalid_argument("dynamic_range must be >= 0");
  eval_options();
  if (bench_runs < 1) throw std::invalid_argument("bench_runs must be >= 1");
  if (bench_warmup < 0) throw std::invalid_argument("bench_warmup must be >= 0");
  if (ablate_steps < 1) throw std::invalid_argument("ablate_steps must be >= 1");
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  if ((scene_height == 0) != (scene_width == 0) || scene_height < 0 || scene_width < 0) {
    throw std::invalid_argument("scene_resolution must be HxW with positive entries");
  }
  scene_spec().validate();
  if (run_dir.empty()) throw std::invalid_argument("run_dir must not be empty");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c = ModelConfig::named(model);
  c.guidance_type = parse_guidance_type(guidance_type);
  c.guidance_branch = parse_guidance_branch(guidance_branch);
  c.laplacian_mode = parse_laplacian_mode(laplacian_mode);
  return c;
}

LossConfig RunConfig::loss_config() const {
  LossConfig c = LossConfig::for_dynamic_range(dynamic_range > 0 ? dynamic_range : 1.0);
  c.lambda_l1 = lambda_l1;
  c.ssim_window = ssim_window;
  c.ssim_sigma = ssim_sigma;
  if (grad_norm == "l1") {
    c.grad_norm = GradNorm::kL1;
  } else if (grad_norm == "l2") {
    c.grad_norm = GradNorm::kL2;
  } else {
    bad_value("grad_norm", grad_norm, "l1 or l2");
  }
  return c;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.model = model_config();
  t.loss = loss_config();
  t.auto_dynamic_range = dynamic_range == 0.0;
  t.schedule = {lr, epochs, drop_epoch, drop_factor};
  t.beta1 = beta1;
  t.beta2 = beta2;
  t.adam_eps = adam_eps;
  t.batch_size = batch_size;
  t.seed = seed;
  t.augment = augment;
  t.max_steps = max_steps;
  t.checkpoint_every = checkpoint_every;
  t.checkpoint_dir = run_dir / "checkpoints";
  t.input_height = height;
  t.input_width = width;
  return t;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions e;
  e.model_height = height;
  e.model_width = width;
  e.crop = parse_crop_kind(crop);
  e.flip_average = flip_average;
  e.flip_axis = parse_flip_axis(flip_axis);
  return e;
}

SyntheticSceneSpec RunConfig::scene_spec() const {
  SyntheticSceneSpec s;
  s.seed = seed;
  s.height = scene_height > 0 ? scene_height : height;
  s.width = scene_width > 0 ? scene_width : width;
  s.primitives = primitives;
  s.d_min = static_cast<float>(d_min);
  s.d_max = static_cast<float>(d_max);
  return s;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? run_dir / "checkpoint" : checkpoint;
}

RunConfig load_run_config(const std::filesystem::path& config_file,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig c;
  if (!config_file.empty()) {
    if (!std::filesystem::exists(config_file)) {
      throw std::invalid_argument("config file " + config_file.string() + " does not exist");
    }
    const auto entries = read_key_value_file(config_file);
    to_map(entries, config_file.string());  // rejects duplicates
    for (const auto& kv : entries) {
      try {
        c.set(kv.key, kv.value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(config_file.string() + ":" + std::to_string(kv.line) + ": " +
                                    e.what());
      }
    }
  }
  for (const auto& [k, v] : overrides) {
    try {
      c.set(k, v);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("--" + k + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace guidedepth
