#include "guidedepth/checkpoint.hpp"

#include <set>
#include <stdexcept>

#include "guidedepth/kv_file.hpp"
#include "guidedepth/tensor_io.hpp"

namespace guidedepth {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, Model<float>& model) {
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> manifest;
  for (const auto& [k, v] : model.config.to_key_values()) manifest.emplace_back("config." + k, v);
  for (const auto& [name, t] : parameter_list(model)) {
    const std::string file = name + ".gdt";
    write_tensor(dir / file, *t);
    manifest.emplace_back("param." + name, file);
  }
  for (const auto& [name, stats] : norm_stats_list(model)) {
    if (!stats->initialized) continue;
    write_tensor(dir / (name + ".running_mean.gdt"), stats->mean);
    write_tensor(dir / (name + ".running_var.gdt"), stats->var);
    manifest.emplace_back("buffer." + name + ".running_mean", name + ".running_mean.gdt");
    manifest.emplace_back("buffer." + name + ".running_var", name + ".running_var.gdt");
  }
  write_key_value_file(dir / "manifest.txt", manifest, "guidedepth checkpoint");
}

Model<float> load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("no checkpoint manifest at " + manifest_path.string() +
                             " (run `gd train` first or point `checkpoint` at a run's checkpoint directory)");
  }
  const auto entries = to_map(read_key_value_file(manifest_path), manifest_path.string());
  std::map<std::string, std::string> config_kv;
  for (const auto& [k, v] : entries) {
    if (k.rfind("config.", 0) == 0) config_kv.emplace(k.substr(7), v);
  }
  Model<float> model = init_model<float>(ModelConfig::from_key_values(config_kv), 0);

  std::set<std::string> used;
  for (const auto& [k, v] : entries) {
    if (k.rfind("config.", 0) == 0) used.insert(k);
  }
  auto file_for = [&](const std::string& key) -> const std::string* {
    const auto it = entries.find(key);
    if (it == entries.end()) return nullptr;
    used.insert(key);
    return &it->second;
  };

  for (auto& [name, t] : parameter_list(model)) {
    const std::string* file = file_for("param." + name);
    if (file == nullptr) {
      throw std::runtime_error("checkpoint " + dir.string() + " is missing parameter " + name);
    }
    auto loaded = read_tensor(dir / *file, t->shape());
    loaded.set_requires_grad(true);
    *t = loaded;
  }
  for (auto& [name, stats] : norm_stats_list(model)) {
    const std::string* mean_file = file_for("buffer." + name + ".running_mean");
    const std::string* var_file = file_for("buffer." + name + ".running_var");
    if ((mean_file == nullptr) != (var_file == nullptr)) {
      throw std::runtime_error("checkpoint " + dir.string() + " has incomplete statistics for " +
                               name);
    }
    if (mean_file == nullptr) continue;
    stats->mean = read_tensor(dir / *mean_file, stats->mean.shape());
    stats->var = read_tensor(dir / *var_file, stats->var.shape());
    stats->initialized = true;
  }
  for (const auto& [k, v] : entries) {
    if (!used.contains(k)) {
      throw std::runtime_error("checkpoint " + dir.string() + " has unexpected entry '" + k +
                               "' for this model configuration");
    }
  }
  return model;
}

}  // namespace guidedepth
