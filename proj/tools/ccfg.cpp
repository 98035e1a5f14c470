// ccfg: dataset generation, training, weight selection, sampling,
// evaluation and map export for composite classifier-free guidance.
//
// Exit codes: 0 success, 2 configuration, 3 data, 4 numeric, 1 anything else.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "ccfg/config.hpp"
#include "ccfg/dataset.hpp"
#include "ccfg/io.hpp"
#include "ccfg/metrics.hpp"
#include "ccfg/pipeline.hpp"
#include "ccfg/random.hpp"
#include "ccfg/selection.hpp"
#include "ccfg/synthetic.hpp"
#include "ccfg/train.hpp"
#include "ccfg/unet.hpp"

namespace fs = std::filesystem;
using namespace ccfg;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> scheme;
  std::optional<int> ensemble;
};

ExperimentConfig resolve(const Overrides& o, const std::string& command) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = c.sampler.seed = c.selection.seed = *o.seed;
  }
  if (o.out) c.out = fs::absolute(*o.out);
  if (o.scheme) {
    c.guidance.scheme = parse_scheme(*o.scheme);
    c.evaluate.schemes = {c.guidance.scheme};
  }
  if (o.ensemble) c.sampler.ensemble_count = *o.ensemble;
  c.validate();
  fs::create_directories(c.out);
  write_snapshot(c, c.out / (command + ".config.json"));
  return c;
}

std::vector<std::string> required_variables(const ExperimentConfig& c) {
  std::vector<std::string> v{vars::hr_speed, vars::hr_direction};
  for (const auto& n : vars::named_set(c.inputs)) v.push_back(n);
  return v;
}

Dataset load_split(const fs::path& manifest, const ExperimentConfig& c, const char* what) {
  if (manifest.empty()) throw ValidationError(std::string("config: data.") + what + " is not set");
  return read_dataset(manifest, required_variables(c));
}

UNet load_model(const ExperimentConfig& c) {
  if (c.model.checkpoint.empty()) throw ValidationError("config: model.checkpoint is not set");
  return load_checkpoint(c.model.checkpoint);
}

void check_inputs(const UNet& model, const PreparedSet& data) {
  if (model.architecture().inputs != data.inputs) {
    throw ValidationError("checkpoint was trained on a different conditioning set");
  }
}

Guidance make_guidance(Scheme scheme, const ExperimentConfig& c, int groups) {
  switch (scheme) {
    case Scheme::direct: return Guidance::direct();
    case Scheme::cfg: return Guidance::cfg(c.guidance.cfg_weight, groups);
    case Scheme::ccfg: {
      if (c.guidance.weights.empty()) throw ValidationError("the ccfg scheme needs guidance.weights");
      std::ifstream in(c.guidance.weights);
      if (!in) throw ValidationError("cannot open subset weights " + c.guidance.weights.string());
      std::stringstream ss;
      ss << in.rdbuf();
      return Guidance::ccfg(parse_weights(ss.str()));
    }
  }
  throw ValidationError("unknown scheme");
}

int cmd_generate(const ExperimentConfig& c) {
  std::vector<SamplePair> train = generate_synthetic_set(c.seed, c.data.train_count, c.data.synthetic);
  std::vector<SamplePair> eval =
      generate_synthetic_set(stream_seed({c.seed, 0x6576616cULL}), c.data.eval_count, c.data.synthetic);
  Dataset tr = Dataset::from_pairs(std::move(train));
  Dataset ev = Dataset::from_pairs(std::move(eval));
  // evaluation data is standardized with the training statistics
  ev.stats = tr.stats;
  for (auto& p : ev.pairs) p.stats = tr.stats;
  const auto a = write_dataset(tr, c.out / "train");
  const auto b = write_dataset(ev, c.out / "eval");
  std::cout << "wrote " << a.string() << " (" << tr.pairs.size() << " records)\n"
            << "wrote " << b.string() << " (" << ev.pairs.size() << " records)\n";
  return 0;
}

int cmd_train(const ExperimentConfig& c) {
  const PreparedSet data = prepare(load_split(c.data.train, c, "train"), vars::named_set(c.inputs));
  UNet model(architecture_for(data, c.model.width1, c.model.width2, c.model.width3, c.model.embed_dim));
  model.initialize(c.train.seed);
  std::optional<PreparedSet> eval;
  if (!c.data.eval.empty()) eval = prepare(load_split(c.data.eval, c, "eval"), vars::named_set(c.inputs));
  if (eval) std::cout << "validation L1 at init: " << validation_l1(model, *eval, c.seed, 200) << "\n";
  const TrainResult r = train(model, data, c.train, [](const LossRecord& rec) {
    if (rec.step % 100 == 0) {
      std::cout << "step " << rec.step << " epoch " << rec.epoch << " loss " << rec.loss.total << "\n";
    }
  });
  if (eval) std::cout << "validation L1 after training: " << validation_l1(model, *eval, c.seed, 200) << "\n";
  save_checkpoint(model, c.out / "model.json");
  write_loss_curve(c.out / "loss_curve.csv", r.curve);
  std::cout << "wrote " << (c.out / "model.json").string() << "\n";
  return 0;
}

int cmd_select(const ExperimentConfig& c) {
  const UNet model = load_model(c);
  const PreparedSet data = prepare(load_split(c.data.train, c, "train"), vars::named_set(c.inputs));
  check_inputs(model, data);
  const int groups = static_cast<int>(data.groups.size());
  const int batch = std::min(c.selection.batch, data.size());
  BatchProvider provider = [&](int iteration) {
    Engine rng(stream_seed({c.selection.seed, 0x62617463ULL, static_cast<std::uint64_t>(iteration)}));
    std::vector<int> idx(batch);
    for (int& i : idx) i = std::uniform_int_distribution<int>(0, data.size() - 1)(rng);
    SelectionBatch b;
    b.denoiser = std::make_shared<ModelDenoiser>(model, gather_rows(data.conditioning, idx), data.channel_group, groups);
    b.targets = gather_rows(data.targets, idx);
    return b;
  };
  const SelectionResult r = run_selection(data.groups, provider, c.selection, model.architecture().schedule());
  std::ofstream(c.out / "weights.json") << serialize_weights(r.weights);
  r.trace.write_csv(c.out / "selection_trace.csv");
  for (std::size_t i = 0; i < r.weights.weights.size(); ++i) {
    std::cout << r.weights.family.describe(r.weights.family.subsets[i]) << " " << r.weights.weights[i] << "\n";
  }
  std::cout << "wrote " << (c.out / "weights.json").string() << "\n";
  return 0;
}

int cmd_sample(const ExperimentConfig& c) {
  const UNet model = load_model(c);
  const PreparedSet data = prepare(load_split(c.data.eval, c, "eval"), vars::named_set(c.inputs));
  check_inputs(model, data);
  const Guidance g = make_guidance(c.guidance.scheme, c, static_cast<int>(data.groups.size()));
  const PredictionSet p = predict(model, data, g, c.sampler, c.evaluate.batch_size, c.evaluate.max_timestamps);
  const double per_step =
      static_cast<double>(p.nfe) / (static_cast<double>(p.timestamps()) * p.ensemble() * c.sampler.steps);
  write_predictions(c.out / "predictions.json", p, {to_string(c.guidance.scheme), c.sampler.steps, per_step});
  std::cout << "wrote " << (c.out / "predictions.json").string() << " (NFE per step " << per_step << ")\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& c) {
  const UNet model = load_model(c);
  const Dataset eval_set = load_split(c.data.eval, c, "eval");
  const PreparedSet data = prepare(eval_set, vars::named_set(c.inputs));
  check_inputs(model, data);
  const int groups = static_cast<int>(data.groups.size());
  std::vector<MetricRow> rows;
  const std::string domain = "synthetic-" + std::to_string(data.targets.h);
  auto add = [&](const std::string& name, double nfe, int ens, const PredictionSet& p) {
    rows.push_back({name, domain, "t_rmse", nfe, ens, t_rmse(p)});
    rows.push_back({name, domain, "mm_rmse", nfe, ens, mm_rmse(mean_map(p.predictions), mean_map(p.truths))});
    rows.push_back({name, domain, "crps", nfe, ens, crps_timestamps(p)});
    rows.push_back({name, domain, "mm_crps", nfe, ens, crps_mean_map(p)});
  };
  for (Scheme s : c.evaluate.schemes) {
    const Guidance g = make_guidance(s, c, groups);
    const PredictionSet p = predict(model, data, g, c.sampler, c.evaluate.batch_size, c.evaluate.max_timestamps);
    const double per_step =
        static_cast<double>(p.nfe) / (static_cast<double>(p.timestamps()) * p.ensemble() * c.sampler.steps);
    add(to_string(s), per_step, c.sampler.ensemble_count, p);
    std::cout << to_string(s) << ": NFE per step " << per_step << ", T-RMSE " << rows[rows.size() - 4].value
              << " m/s\n";
  }
  // interpolation baseline on the same timestamps
  const int n = c.evaluate.max_timestamps > 0 ? std::min(c.evaluate.max_timestamps, data.size()) : data.size();
  PredictionSet base;
  base.predictions = Tensor(n, 1, data.targets.h, data.targets.w);
  base.truths = Tensor(n, 1, data.targets.h, data.targets.w);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  base.truths = speed_channels(gather_rows(data.targets, idx), data.scaling);
  for (int i = 0; i < n; ++i) {
    const FieldGrid sp = bicubic_baseline(eval_set.pairs[i]).speed;
    std::copy(sp.values.begin(), sp.values.end(), base.predictions.sample(i));
  }
  add("bicubic", 0.0, 1, base);
  write_metric_report(c.out / "metrics.csv", rows);
  std::cout << "wrote " << (c.out / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_export_maps(const ExperimentConfig& c) {
  const fs::path src = c.evaluate.predictions.empty() ? c.out / "predictions.json" : c.evaluate.predictions;
  const PredictionSet p = read_predictions(src);
  const FieldGrid pred = mean_map(p.predictions);
  const FieldGrid truth = mean_map(p.truths);
  FieldGrid bias = pred;
  for (std::size_t i = 0; i < bias.size(); ++i) bias.values[i] = pred.values[i] - truth.values[i];
  double lo = truth.values[0], hi = truth.values[0], amp = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    lo = std::min({lo, truth.values[i], pred.values[i]});
    hi = std::max({hi, truth.values[i], pred.values[i]});
    amp = std::max(amp, std::abs(bias.values[i]));
  }
  if (amp == 0.0) amp = 1.0;
  write_pgm(c.out / "mean_map_pred.pgm", pred, lo, hi);
  write_pgm(c.out / "mean_map_true.pgm", truth, lo, hi);
  write_pgm(c.out / "bias_map.pgm", bias, -amp, amp);
  write_grid_csv(c.out / "mean_map_pred.csv", pred);
  write_grid_csv(c.out / "mean_map_true.csv", truth);
  write_grid_csv(c.out / "bias_map.csv", bias);
  std::cout << "wrote mean and bias maps to " << c.out.string() << "\n";
  return 0;
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numeric: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composite classifier-free guidance for wind super-resolution"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--scheme", o.scheme, "guidance scheme")->check(CLI::IsMember({"direct", "cfg", "ccfg"}));
    sub->add_option("--ensemble", o.ensemble, "ensemble members per conditioning")->check(CLI::PositiveNumber);
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const ExperimentConfig&);
  };
  const Command commands[] = {
      {"generate", "write synthetic train/eval datasets", cmd_generate},
      {"train", "train the denoiser", cmd_train},
      {"select", "select CCFG subset weights", cmd_select},
      {"sample", "sample predictions for the eval split", cmd_sample},
      {"evaluate", "compute the metric report", cmd_evaluate},
      {"export-maps", "write mean and bias maps", cmd_export_maps},
  };
  for (const Command& cmd : commands) add_common(app.add_subcommand(cmd.name, cmd.help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (const Command& cmd : commands) {
      if (app.got_subcommand(cmd.name)) return cmd.run(resolve(o, cmd.name));
    }
  } catch (const ccfg::Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
