#include "guidedepth/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "guidedepth/checkpoint.hpp"
#include "guidedepth/eval.hpp"

namespace guidedepth {

void AdamConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("adam lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be > 0");
}

template <typename T>
AdamState<T> AdamState<T>::create(const std::vector<Tensor<T>*>& params,
                                  const AdamConfig& config) {
  config.validate();
  AdamState s;
  s.config = config;
  for (const Tensor<T>* p : params) {
    s.m.emplace_back(p->numel(), 0.0);
    s.v.emplace_back(p->numel(), 0.0);
  }
  return s;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, AdamState<T>& s) {
  if (params.size() != s.m.size()) {
    throw std::logic_error("adam_step: state was created for " + std::to_string(s.m.size()) +
                           " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) {
      throw std::logic_error("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (params[i]->numel() != s.m[i].size()) {
      throw std::logic_error("adam_step: moment buffer does not match parameter " +
                             std::to_string(i));
    }
  }
  ++s.step;
  const AdamConfig& c = s.config;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i]->mutable_data();
    const auto g = params[i]->grad();
    auto& m = s.m[i];
    auto& v = s.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = g[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double update = c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
      data[j] = static_cast<T>(data[j] - update);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(const std::vector<Tensor<float>*>&, AdamState<float>&);
template void adam_step(const std::vector<Tensor<double>*>&, AdamState<double>&);

void Schedule::validate() const {
  if (!(base_lr >= 0.0)) throw std::invalid_argument("schedule base_lr must be >= 0");
  if (total_epochs < 1) throw std::invalid_argument("schedule total_epochs must be >= 1");
  if (drop_epoch < 1 || drop_epoch > total_epochs) {
    throw std::invalid_argument("schedule drop_epoch must satisfy 0 < drop_epoch <= total_epochs");
  }
  if (!(drop_factor > 0.0)) throw std::invalid_argument("schedule drop_factor must be > 0");
}

double lr_at(const Schedule& s, int epoch) {
  s.validate();
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(s.total_epochs) + ")");
  }
  return epoch < s.drop_epoch ? s.base_lr : s.base_lr / s.drop_factor;
}

std::string loss_csv_header() { return "step,epoch,lr,loss,dssim,grad,l1"; }

std::string loss_csv_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%d,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.step), r.epoch, r.lr, r.loss, r.dssim, r.grad, r.l1);
  return buf;
}

void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& h) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << loss_csv_header() << '\n';
  for (const auto& r : h) os << loss_csv_row(r) << '\n';
}

void TrainOptions::validate() const {
  model.validate();
  schedule.validate();
  AdamConfig{schedule.base_lr, beta1, beta2, adam_eps}.validate();
  if (!auto_dynamic_range) loss.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw std::invalid_argument("checkpoint_every needs a checkpoint directory");
  }
  if ((input_height == 0) != (input_width == 0) || input_height % 8 != 0 ||
      input_width % 8 != 0 || input_height < 0 || input_width < 0) {
    throw std::invalid_argument("input resolution must be a pair of positive multiples of 8");
  }
}

double max_normalized_target(const std::vector<DepthSample>& dataset) {
  double best = 0;
  for (const auto& s : dataset) {
    for (const float d : s.depth.data()) {
      best = std::max(best, static_cast<double>(s.d_max) / std::max(d, kDepthEps));
    }
  }
  return best;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates on our own uniform draw keeps the order identical across
  // standard library implementations.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

namespace {

std::mt19937_64 augment_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0xa06u};
  return std::mt19937_64(seq);
}

std::string describe(const LossRecord& r) {
  std::ostringstream os;
  os << "step " << r.step << " (epoch " << r.epoch << ", lr " << r.lr << "): loss " << r.loss
     << " = dssim " << r.dssim << " + grad " << r.grad << " + lambda * l1 " << r.l1;
  return os.str();
}

}  // namespace

TrainResult train(const TrainOptions& options, const std::vector<DepthSample>& dataset) {
  return train(options, dataset, init_model<float>(options.model, options.seed));
}

TrainResult train(const TrainOptions& opt, const std::vector<DepthSample>& dataset,
                  Model<float> initial) {
  opt.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult result{std::move(initial), {}, opt.loss};
  Model<float>& model = result.model;
  if (opt.auto_dynamic_range) {
    LossConfig resolved = LossConfig::for_dynamic_range(max_normalized_target(dataset));
    resolved.lambda_l1 = opt.loss.lambda_l1;
    resolved.ssim_window = opt.loss.ssim_window;
    resolved.ssim_sigma = opt.loss.ssim_sigma;
    resolved.grad_norm = opt.loss.grad_norm;
    result.loss = resolved;
  }
  result.loss.validate();

  std::vector<Tensor<float>*> params;
  for (auto& [name, t] : parameter_list(model)) params.push_back(t);
  AdamState<float> adam =
      AdamState<float>::create(params, {opt.schedule.base_lr, opt.beta1, opt.beta2, opt.adam_eps});

  const int in_h = opt.input_height > 0 ? opt.input_height : dataset.front().height();
  const int in_w = opt.input_width > 0 ? opt.input_width : dataset.front().width();
  std::int64_t step = 0;
  for (int epoch = 0; epoch < opt.schedule.total_epochs; ++epoch) {
    adam.config.lr = lr_at(opt.schedule, epoch);
    const auto order = epoch_order(dataset.size(), opt.seed, epoch);
    auto rng = augment_rng(opt.seed, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += opt.batch_size) {
      if (opt.max_steps > 0 && step >= opt.max_steps) break;
      const std::size_t end = std::min(order.size(), begin + opt.batch_size);
      std::vector<Tensor<float>> images, targets;
      for (std::size_t k = begin; k < end; ++k) {
        const DepthSample& raw = dataset[order[k]];
        const DepthSample s = opt.augment ? augment(raw, rng) : raw;
        Tape<float> none(false);
        auto img = s.image, dep = s.depth;
        if (s.height() != in_h || s.width() != in_w) {
          img = bilinear_resize(none, img, in_h, in_w);
          dep = bilinear_resize(none, dep, in_h, in_w);
        }
        images.push_back(img);
        targets.push_back(inverse_depth_transform(dep, s.d_max));
      }
      const auto x = stack_batch(images);
      const auto y = stack_batch(targets);

      LossRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = adam.config.lr;
      Tape<float> tape;
      zero_grad(model);
      try {
        const auto yhat = model_forward(tape, model, x, NormMode::kTrain);
        const auto terms = combined_loss(tape, y, yhat, result.loss);
        rec.loss = terms.total.item();
        rec.dssim = terms.dssim.item();
        rec.grad = terms.grad.item();
        rec.l1 = terms.l1.item();
        tape.backward(terms.total);
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged("training diverged at " + describe(rec) + ": " + e.what());
      }
      for (const Tensor<float>* p : params) {
        for (const float g : p->grad()) {
          if (!std::isfinite(g)) {
            throw TrainingDiverged("non-finite gradient at " + describe(rec));
          }
        }
      }
      adam_step(params, adam);
      result.history.push_back(rec);
      if (opt.on_step) opt.on_step(rec);
      ++step;
    }
    if (opt.checkpoint_every > 0 && (epoch + 1) % opt.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch%03d", epoch + 1);
      save_checkpoint(opt.checkpoint_dir / name, model);
    }
    if (opt.max_steps > 0 && step >= opt.max_steps) break;
  }
  zero_grad(model);
  return result;
}

}  // namespace guidedepth
