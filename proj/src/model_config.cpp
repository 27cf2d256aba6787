#include "guidedepth/model_config.hpp"

#include <sstream>
#include <stdexcept>

namespace guidedepth {

std::string to_string(GuidanceType t) {
  switch (t) {
    case GuidanceType::kImage: return "image";
    case GuidanceType::kLaplacian: return "laplacian";
    case GuidanceType::kNone: return "none";
  }
  return "?";
}

std::string to_string(GuidanceBranch b) {
  return b == GuidanceBranch::kGub ? "gub" : "direct";
}

std::string to_string(LaplacianMode m) {
  return m == LaplacianMode::kBandPass ? "bandpass" : "lowpass";
}

GuidanceType parse_guidance_type(const std::string& s) {
  if (s == "image") return GuidanceType::kImage;
  if (s == "laplacian") return GuidanceType::kLaplacian;
  if (s == "none") return GuidanceType::kNone;
  throw std::invalid_argument("unknown guidance_type '" + s + "' (expected image|laplacian|none)");
}

GuidanceBranch parse_guidance_branch(const std::string& s) {
  if (s == "gub") return GuidanceBranch::kGub;
  if (s == "direct") return GuidanceBranch::kDirect;
  throw std::invalid_argument("unknown guidance_branch '" + s + "' (expected gub|direct)");
}

LaplacianMode parse_laplacian_mode(const std::string& s) {
  if (s == "bandpass") return LaplacianMode::kBandPass;
  if (s == "lowpass") return LaplacianMode::kLowPass;
  throw std::invalid_argument("unknown laplacian_mode '" + s + "' (expected bandpass|lowpass)");
}

ModelConfig ModelConfig::guidedepth() { return {}; }

ModelConfig ModelConfig::guidedepth_s() {
  ModelConfig c;
  for (int& ch : c.decoder_channels) ch /= 2;
  return c;
}

ModelConfig ModelConfig::guidedepth_tiny() {
  ModelConfig c;
  c.encoder_width = 4;
  c.encoder_out_channels = 8;
  c.decoder_channels = {8, 4, 2};
  return c;
}

ModelConfig ModelConfig::named(const std::string& name) {
  if (name == "guidedepth") return guidedepth();
  if (name == "guidedepth-s") return guidedepth_s();
  if (name == "guidedepth-tiny") return guidedepth_tiny();
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected guidedepth|guidedepth-s|guidedepth-tiny)");
}

void ModelConfig::validate() const {
  if (encoder_width < 1 || encoder_out_channels < 1) {
    throw std::invalid_argument("encoder widths must be positive");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw std::invalid_argument("decoder_channels must be strictly positive");
  }
  if (se_reduction < 1) throw std::invalid_argument("se_reduction must be >= 1");
  if (output_channels != 1) throw std::invalid_argument("output_channels must be 1");
  // Every SE gate needs at least one hidden unit.
  int in = encoder_out_channels;
  for (int c : decoder_channels) {
    int cat = in;
    if (guidance_type != GuidanceType::kNone) {
      cat += guidance_branch == GuidanceBranch::kGub ? in : 3;
    }
    if (cat < se_reduction) {
      throw std::invalid_argument("se_reduction " + std::to_string(se_reduction) +
                                  " exceeds the concatenated width " + std::to_string(cat));
    }
    in = c;
  }
}

std::map<std::string, std::string> ModelConfig::to_key_values() const {
  std::ostringstream dc;
  dc << decoder_channels[0] << ',' << decoder_channels[1] << ',' << decoder_channels[2];
  return {
      {"encoder_width", std::to_string(encoder_width)},
      {"encoder_out_channels", std::to_string(encoder_out_channels)},
      {"decoder_channels", dc.str()},
      {"guidance_type", to_string(guidance_type)},
      {"guidance_branch", to_string(guidance_branch)},
      {"laplacian_mode", to_string(laplacian_mode)},
      {"se_reduction", std::to_string(se_reduction)},
      {"output_channels", std::to_string(output_channels)},
  };
}

namespace {

int parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("'" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

}  // namespace

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "encoder_width") {
      c.encoder_width = parse_int(key, value);
    } else if (key == "encoder_out_channels") {
      c.encoder_out_channels = parse_int(key, value);
    } else if (key == "decoder_channels") {
      std::istringstream is(value);
      std::string part;
      int i = 0;
      while (std::getline(is, part, ',')) {
        if (i >= 3) throw std::invalid_argument("decoder_channels takes exactly 3 values");
        c.decoder_channels[i++] = parse_int(key, part);
      }
      if (i != 3) throw std::invalid_argument("decoder_channels takes exactly 3 values");
    } else if (key == "guidance_type") {
      c.guidance_type = parse_guidance_type(value);
    } else if (key == "guidance_branch") {
      c.guidance_branch = parse_guidance_branch(value);
    } else if (key == "laplacian_mode") {
      c.laplacian_mode = parse_laplacian_mode(value);
    } else if (key == "se_reduction") {
      c.se_reduction = parse_int(key, value);
    } else if (key == "output_channels") {
      c.output_channels = parse_int(key, value);
    } else {
      throw std::invalid_argument("unknown model config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string variant_label(const ModelConfig& config) {
  switch (config.guidance_type) {
    case GuidanceType::kNone: return "None";
    case GuidanceType::kImage:
      return config.guidance_branch == GuidanceBranch::kGub ? "Image/GUB" : "Image/Direct";
    case GuidanceType::kLaplacian:
      return config.guidance_branch == GuidanceBranch::kGub ? "Laplacian/GUB" : "Laplacian/Direct";
  }
  return "?";
}

}  // namespace guidedepth
