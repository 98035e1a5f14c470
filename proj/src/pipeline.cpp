#include "ccfg/pipeline.hpp"

#include <algorithm>
#include <cstring>

namespace ccfg {

PreparedSet prepare(const Dataset& dataset, const std::vector<std::string>& inputs) {
  dataset.validate();
  if (dataset.pairs.empty()) throw ValidationError("prepare: dataset is empty");
  PreparedSet out;
  out.inputs = inputs;
  out.scale_factor = dataset.scale_factor;
  const Moments& speed = dataset.stats.at(vars::speed_stats);
  out.scaling = {speed.mean, speed.std};
  const int n = static_cast<int>(dataset.pairs.size());
  for (int i = 0; i < n; ++i) {
    SamplePair pair = dataset.pairs[i];
    // domain-wide statistics apply to every record
    pair.stats = dataset.stats;
    const ConditioningSet cond = pair.conditioning.restricted_to(inputs);
    if (static_cast<int>(cond.variables().size()) != static_cast<int>(inputs.size())) {
      throw FormatError("record " + std::to_string(i) + " lacks some of the requested inputs");
    }
    const AssembledConditioning a =
        assemble_conditioning(cond, pair.stats, dataset.hr_height, dataset.hr_width, dataset.scale_factor);
    const Tensor tg = assemble_targets(pair);
    if (i == 0) {
      out.conditioning = Tensor(n, a.channels.c, a.channels.h, a.channels.w);
      out.targets = Tensor(n, tg.c, tg.h, tg.w);
      out.channel_group = a.channel_group;
      out.groups = cond.groups();
    }
    std::memcpy(out.conditioning.sample(i), a.channels.data.data(), a.channels.size() * sizeof(double));
    std::memcpy(out.targets.sample(i), tg.data.data(), tg.size() * sizeof(double));
    out.timestamp_ids.push_back(pair.timestamp_id);
  }
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const int> indices) {
  Tensor out(static_cast<int>(indices.size()), t.c, t.h, t.w);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= t.n) throw DimensionError("gather_rows: index out of range");
    std::memcpy(out.sample(static_cast<int>(r)), t.sample(indices[r]), t.sample_size() * sizeof(double));
  }
  return out;
}

void mask_groups(Tensor& cond, std::span<const int> channel_group, GroupMask present) {
  if (static_cast<int>(channel_group.size()) != cond.c) throw DimensionError("mask_groups: channel map mismatch");
  for (int i = 0; i < cond.n; ++i) {
    for (int c = 0; c < cond.c; ++c) {
      if ((present >> channel_group[c]) & 1u) continue;
      std::fill(cond.channel(i, c), cond.channel(i, c) + cond.plane(), 0.0);
    }
  }
}

UNetArchitecture architecture_for(const PreparedSet& data, int width1, int width2, int width3, int embed_dim) {
  UNetArchitecture a;
  a.target_channels = data.targets.c;
  a.cond_channels = data.conditioning.c;
  a.width1 = width1;
  a.width2 = width2;
  a.width3 = width3;
  a.embed_dim = embed_dim;
  a.inputs = data.inputs;
  return a;
}

ModelDenoiser::ModelDenoiser(const UNet& model, Tensor conditioning, std::vector<int> channel_group, int group_count)
    : model_(model), conditioning_(std::move(conditioning)), channel_group_(std::move(channel_group)),
      group_count_(group_count) {
  if (conditioning_.c != model_.architecture().cond_channels) {
    throw DimensionError("model expects " + std::to_string(model_.architecture().cond_channels) +
                         " conditioning channels, got " + std::to_string(conditioning_.c));
  }
}

Tensor ModelDenoiser::input_for(const Tensor& x_t, GroupMask present) const {
  if (x_t.n != conditioning_.n || x_t.h != conditioning_.h || x_t.w != conditioning_.w) {
    throw DimensionError("ModelDenoiser: x_t " + x_t.shape_string() + " vs conditioning " +
                         conditioning_.shape_string());
  }
  Tensor cond = conditioning_;
  mask_groups(cond, channel_group_, present);
  return concat_channels(x_t, cond);
}

Tensor ModelDenoiser::predict_x0(const Tensor& x_t, int t, GroupMask present) const {
  const std::vector<int> ts(x_t.n, t);
  return model_.forward(input_for(x_t, present), ts);
}

Tensor ModelDenoiser::x0_input_vjp(const Tensor& x_t, int t, GroupMask present, const Tensor& cotangent) const {
  const std::vector<int> ts(x_t.n, t);
  UNet::Tape tape;
  model_.forward(input_for(x_t, present), ts, &tape);
  const Tensor d_in = model_.backward(tape, cotangent, {}, true);
  Tensor out = Tensor::like(x_t);
  for (int i = 0; i < x_t.n; ++i) {
    std::memcpy(out.sample(i), d_in.sample(i), out.sample_size() * sizeof(double));
  }
  return out;
}

Tensor speed_channels(const Tensor& targets, const FlowScaling& k) {
  Tensor out(targets.n, 1, targets.h, targets.w);
  for (int i = 0; i < targets.n; ++i) {
    const double* s = targets.channel(i, 0);
    double* o = out.sample(i);
    for (std::size_t j = 0; j < targets.plane(); ++j) o[j] = k.speed_std * s[j] + k.speed_mean;
  }
  return out;
}

PredictionSet predict(const UNet& model, const PreparedSet& data, const Guidance& guidance,
                      const SamplerConfig& config, int batch_size, int limit) {
  const int total = limit > 0 ? std::min(limit, data.size()) : data.size();
  if (batch_size < 1) throw ValidationError("predict: batch size must be positive");
  const int members = config.ensemble_count;
  const NoiseSchedule sched = model.architecture().schedule();
  PredictionSet out;
  out.predictions = Tensor(total, members, data.targets.h, data.targets.w);
  out.truths = Tensor(total, 1, data.targets.h, data.targets.w);
  const int groups = static_cast<int>(data.groups.size());
  for (int start = 0; start < total; start += batch_size) {
    const int rows = std::min(batch_size, total - start);
    std::vector<int> idx(rows);
    for (int r = 0; r < rows; ++r) idx[r] = start + r;
    ModelDenoiser bound(model, gather_rows(data.conditioning, idx), data.channel_group, groups);
    CountingDenoiser counter(bound);
    const Tensor x0 = sample(counter, rows, data.targets.c, data.targets.h, data.targets.w, guidance, config,
                             sched, static_cast<std::uint64_t>(start));
    out.nfe += counter.evaluations();
    const Tensor speed = speed_channels(x0, data.scaling);
    const Tensor truth = speed_channels(gather_rows(data.targets, idx), data.scaling);
    for (int e = 0; e < members; ++e) {
      for (int r = 0; r < rows; ++r) {
        std::memcpy(out.predictions.channel(start + r, e), speed.sample(e * rows + r),
                    speed.sample_size() * sizeof(double));
      }
    }
    for (int r = 0; r < rows; ++r) {
      std::memcpy(out.truths.sample(start + r), truth.sample(r), truth.sample_size() * sizeof(double));
      out.timestamp_ids.push_back(data.timestamp_ids[start + r]);
    }
  }
  return out;
}

}  // namespace ccfg
