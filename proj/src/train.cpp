#include "ccfg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ccfg/random.hpp"

namespace ccfg {

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("train.epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be positive");
  if (warmup_steps < 0) throw ValidationError("train.warmup_steps must be nonnegative");
  if (!(dropout_probability >= 0.0 && dropout_probability <= 1.0)) {
    throw ValidationError("train.dropout_probability must lie in [0, 1]");
  }
  if (loss.dwt < 0.0 || loss.divergence < 0.0 || loss.sobel < 0.0) {
    throw ValidationError("train loss weights must be nonnegative");
  }
  if (grad_clip < 0.0) throw ValidationError("train.grad_clip must be nonnegative");
  if (crop_size < 0) throw ValidationError("train.crop_size must be nonnegative");
}

double scheduled_learning_rate(const TrainConfig& c, int step, int total_steps) {
  if (step < c.warmup_steps) return c.learning_rate * (step + 1) / c.warmup_steps;
  const int span = std::max(1, total_steps - c.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  return c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

struct Adam {
  std::vector<double> m, v;
  int t = 0;
  void step(std::span<double> params, std::span<const double> grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

Tensor crop_rows(const Tensor& t, int size, std::span<const int> oy, std::span<const int> ox) {
  Tensor out(t.n, t.c, size, size);
  for (int i = 0; i < t.n; ++i) {
    for (int c = 0; c < t.c; ++c) {
      for (int y = 0; y < size; ++y) {
        std::memcpy(out.channel(i, c) + static_cast<std::size_t>(y) * size,
                    t.channel(i, c) + static_cast<std::size_t>(oy[i] + y) * t.w + ox[i], size * sizeof(double));
      }
    }
  }
  return out;
}

}  // namespace

TrainResult train(UNet& model, const PreparedSet& data, const TrainConfig& config,
                  const std::function<void(const LossRecord&)>& on_step) {
  config.validate();
  if (data.size() < 1) throw ValidationError("train: dataset is empty");
  const int size = config.crop_size > 0 ? config.crop_size : data.targets.h;
  if (size > data.targets.h || size > data.targets.w || size % data.scale_factor != 0 || size % 4 != 0) {
    throw DimensionError("train: crop size " + std::to_string(size) + " does not fit the data");
  }
  const NoiseSchedule sched = model.architecture().schedule();
  const int n = data.size();
  const int batches = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = batches * config.epochs;
  const int groups = static_cast<int>(data.groups.size());

  TrainResult result;
  Adam opt;
  std::vector<double> grad(model.parameter_count());
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Engine shuffle_rng(stream_seed({config.seed, 0x7368756666ULL, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int b = 0; b < batches; ++b, ++step) {
      const int first = b * config.batch_size;
      const int rows = std::min(config.batch_size, n - first);
      std::span<const int> idx(order.data() + first, rows);
      Tensor cond = gather_rows(data.conditioning, idx);
      Tensor x0 = gather_rows(data.targets, idx);
      std::vector<int> ts(rows), oy(rows, 0), ox(rows, 0);
      Tensor eps(rows, x0.c, size, size);
      for (int r = 0; r < rows; ++r) {
        Engine rng(stream_seed({config.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(r)}));
        ts[r] = static_cast<int>(std::uniform_int_distribution<int>(1, sched.steps())(rng));
        if (size < data.targets.h) {
          oy[r] = data.scale_factor *
                  std::uniform_int_distribution<int>(0, (data.targets.h - size) / data.scale_factor)(rng);
          ox[r] = data.scale_factor *
                  std::uniform_int_distribution<int>(0, (data.targets.w - size) / data.scale_factor)(rng);
        }
        GroupMask present = full_mask(groups);
        for (int g = 0; g < groups; ++g) {
          if (uniform(rng, 0.0, 1.0) < config.dropout_probability) present &= ~(GroupMask{1} << g);
        }
        if (present != full_mask(groups)) ++result.dropped_views;
        ++result.rows_seen;
        Tensor one = slice_rows(cond, r, 1);
        mask_groups(one, data.channel_group, present);
        assign_rows(cond, r, one);
        double* e = eps.sample(r);
        for (std::size_t j = 0; j < eps.sample_size(); ++j) e[j] = standard_normal(rng);
      }
      if (size < data.targets.h) {
        cond = crop_rows(cond, size, oy, ox);
        x0 = crop_rows(x0, size, oy, ox);
      }
      Tensor x_t = Tensor::like(x0);
      for (int r = 0; r < rows; ++r) {
        const double ra = std::sqrt(sched.alpha_bar(ts[r]));
        const double sg = sched.sigma(ts[r]);
        for (std::size_t j = 0; j < x0.sample_size(); ++j) {
          x_t.sample(r)[j] = ra * x0.sample(r)[j] + sg * eps.sample(r)[j];
        }
      }
      UNet::Tape tape;
      const Tensor pred = model.forward(concat_channels(x_t, cond), ts, &tape);
      Tensor d_pred;
      const LossBreakdown loss = total_loss(pred, x0, config.loss, data.scaling, &d_pred);
      if (!std::isfinite(loss.total)) {
        std::ostringstream msg;
        msg << "training diverged at step " << step << " (epoch " << epoch << "): l1=" << loss.l1
            << " dwt=" << loss.dwt << " div=" << loss.divergence << " sobel=" << loss.sobel;
        throw NumericError(msg.str());
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      model.backward(tape, d_pred, grad, false);
      if (config.grad_clip > 0.0) {
        double norm = 0.0;
        for (double g : grad) norm += g * g;
        norm = std::sqrt(norm);
        if (!std::isfinite(norm)) throw NumericError("non-finite gradient at step " + std::to_string(step));
        if (norm > config.grad_clip) {
          for (double& g : grad) g *= config.grad_clip / norm;
        }
      }
      const double lr = scheduled_learning_rate(config, step, total_steps);
      opt.step(model.parameters(), grad, lr);
      LossRecord rec{step, epoch, lr, loss};
      result.curve.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  return result;
}

double validation_l1(const UNet& model, const PreparedSet& data, std::uint64_t seed, int limit) {
  const int total = limit > 0 ? std::min(limit, data.size()) : data.size();
  const NoiseSchedule sched = model.architecture().schedule();
  constexpr int kBatch = 25;
  double sum = 0.0;
  for (int start = 0; start < total; start += kBatch) {
    const int rows = std::min(kBatch, total - start);
    std::vector<int> idx(rows), ts(rows);
    for (int r = 0; r < rows; ++r) idx[r] = start + r;
    const Tensor x0 = gather_rows(data.targets, idx);
    Tensor x_t = Tensor::like(x0);
    for (int r = 0; r < rows; ++r) {
      Engine rng(stream_seed({seed, 0x76616cULL, static_cast<std::uint64_t>(start + r)}));
      ts[r] = std::uniform_int_distribution<int>(1, sched.steps())(rng);
      const double ra = std::sqrt(sched.alpha_bar(ts[r]));
      const double sg = sched.sigma(ts[r]);
      for (std::size_t j = 0; j < x0.sample_size(); ++j) {
        x_t.sample(r)[j] = ra * x0.sample(r)[j] + sg * standard_normal(rng);
      }
    }
    const Tensor pred = model.forward(concat_channels(x_t, gather_rows(data.conditioning, idx)), ts);
    sum += l1_loss(pred, x0) * rows;
  }
  return sum / total;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write loss curve " + path.string());
  f << "step,epoch,learning_rate,total,l1,dwt,divergence,sobel\n" << std::setprecision(10);
  for (const auto& r : curve) {
    f << r.step << ',' << r.epoch << ',' << r.learning_rate << ',' << r.loss.total << ',' << r.loss.l1 << ','
      << r.loss.dwt << ',' << r.loss.divergence << ',' << r.loss.sobel << '\n';
  }
}

}  // namespace ccfg
