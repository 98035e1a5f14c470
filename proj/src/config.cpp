#include "ccfg/config.hpp"

#include <fstream>
#include <initializer_list>

namespace ccfg {

namespace {

using json = nlohmann::json;

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return std::filesystem::weakly_canonical(base / p);
}

void read_path(const json& j, const char* key, const std::filesystem::path& base, std::filesystem::path& out) {
  if (j.contains(key)) out = resolve(base, j.at(key).get<std::string>());
}

}  // namespace

void ExperimentConfig::validate() const {
  vars::named_set(inputs);
  if (data.train_count < 1 || data.eval_count < 1) throw ValidationError("data counts must be positive");
  if (model.width1 < 1 || model.width2 < 1 || model.width3 < 1 || model.embed_dim < 2 || model.embed_dim % 2) {
    throw ValidationError("model widths must be positive and embed_dim even");
  }
  train.validate();
  if (sampler.ensemble_count < 1) throw ValidationError("sampler.ensemble_count must be positive");
  if (sampler.steps < 1) throw ValidationError("sampler.steps must be positive");
  if (sampler.method == SamplerMethod::dpmpp && (sampler.order < 1 || sampler.order > 3 || sampler.steps < sampler.order)) {
    throw ValidationError("sampler.order must lie in [1, 3] and not exceed steps");
  }
  if (!(guidance.cfg_weight >= 0.0)) throw ValidationError("guidance.cfg_weight must be nonnegative");
  if (evaluate.batch_size < 1 || evaluate.max_timestamps < 0) throw ValidationError("bad evaluate settings");
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base) {
  ExperimentConfig c;
  try {
    only_keys(j, {"seed", "inputs", "data", "model", "train", "sampler", "selection", "guidance", "evaluate", "out"},
              "config");
    read(j, "seed", c.seed);
    read(j, "inputs", c.inputs);
    if (j.contains("out")) c.out = resolve(base, j.at("out").get<std::string>());

    // sub-seeds default to the global seed
    c.train.seed = c.seed;
    c.sampler.seed = c.seed;
    c.selection.seed = c.seed;

    if (j.contains("data")) {
      const json& d = j.at("data");
      only_keys(d, {"train", "eval", "train_count", "eval_count", "synthetic"}, "data");
      read_path(d, "train", base, c.data.train);
      read_path(d, "eval", base, c.data.eval);
      read(d, "train_count", c.data.train_count);
      read(d, "eval_count", c.data.eval_count);
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        only_keys(s, {"hr_size", "scale_factor", "bias_amplitude", "noise_std", "turbulence"}, "data.synthetic");
        read(s, "hr_size", c.data.synthetic.hr_size);
        read(s, "scale_factor", c.data.synthetic.scale_factor);
        read(s, "bias_amplitude", c.data.synthetic.bias_amplitude);
        read(s, "noise_std", c.data.synthetic.noise_std);
        read(s, "turbulence", c.data.synthetic.turbulence);
      }
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      only_keys(m, {"checkpoint", "width1", "width2", "width3", "embed_dim"}, "model");
      read_path(m, "checkpoint", base, c.model.checkpoint);
      read(m, "width1", c.model.width1);
      read(m, "width2", c.model.width2);
      read(m, "width3", c.model.width3);
      read(m, "embed_dim", c.model.embed_dim);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      only_keys(t, {"epochs", "batch_size", "learning_rate", "warmup_steps", "dropout_probability", "lambda_dwt",
                    "lambda_divergence", "lambda_sobel", "grad_clip", "crop_size", "seed"},
                "train");
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "warmup_steps", c.train.warmup_steps);
      read(t, "dropout_probability", c.train.dropout_probability);
      read(t, "lambda_dwt", c.train.loss.dwt);
      read(t, "lambda_divergence", c.train.loss.divergence);
      read(t, "lambda_sobel", c.train.loss.sobel);
      read(t, "grad_clip", c.train.grad_clip);
      read(t, "crop_size", c.train.crop_size);
      read(t, "seed", c.train.seed);
    }
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      only_keys(s, {"method", "steps", "order", "seed", "ensemble_count"}, "sampler");
      if (s.contains("method")) c.sampler.method = parse_sampler_method(s.at("method").get<std::string>());
      read(s, "steps", c.sampler.steps);
      read(s, "order", c.sampler.order);
      read(s, "seed", c.sampler.seed);
      read(s, "ensemble_count", c.sampler.ensemble_count);
    }
    if (j.contains("selection")) {
      const json& s = j.at("selection");
      only_keys(s, {"max_omitted", "budget", "iterations", "total", "alpha", "beta", "step_size", "batch",
                    "inner_steps", "gradient_mode", "fd_step", "seed"},
                "selection");
      read(s, "max_omitted", c.selection.max_omitted);
      read(s, "budget", c.selection.budget);
      read(s, "iterations", c.selection.iterations);
      read(s, "total", c.selection.total);
      read(s, "alpha", c.selection.alpha);
      read(s, "beta", c.selection.beta);
      read(s, "step_size", c.selection.step_size);
      read(s, "batch", c.selection.batch);
      read(s, "inner_steps", c.selection.inner_steps);
      if (s.contains("gradient_mode")) {
        c.selection.gradient_mode = parse_gradient_mode(s.at("gradient_mode").get<std::string>());
      }
      read(s, "fd_step", c.selection.fd_step);
      read(s, "seed", c.selection.seed);
    }
    if (j.contains("guidance")) {
      const json& g = j.at("guidance");
      only_keys(g, {"scheme", "cfg_weight", "weights"}, "guidance");
      if (g.contains("scheme")) c.guidance.scheme = parse_scheme(g.at("scheme").get<std::string>());
      read(g, "cfg_weight", c.guidance.cfg_weight);
      read_path(g, "weights", base, c.guidance.weights);
    }
    if (j.contains("evaluate")) {
      const json& e = j.at("evaluate");
      only_keys(e, {"schemes", "max_timestamps", "batch_size", "predictions"}, "evaluate");
      if (e.contains("schemes")) {
        c.evaluate.schemes.clear();
        for (const auto& s : e.at("schemes")) c.evaluate.schemes.push_back(parse_scheme(s.get<std::string>()));
      }
      read(e, "max_timestamps", c.evaluate.max_timestamps);
      read(e, "batch_size", c.evaluate.batch_size);
      read_path(e, "predictions", base, c.evaluate.predictions);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["inputs"] = c.inputs;
  j["out"] = c.out.string();
  j["data"] = {{"train", c.data.train.string()},
               {"eval", c.data.eval.string()},
               {"train_count", c.data.train_count},
               {"eval_count", c.data.eval_count},
               {"synthetic",
                {{"hr_size", c.data.synthetic.hr_size},
                 {"scale_factor", c.data.synthetic.scale_factor},
                 {"bias_amplitude", c.data.synthetic.bias_amplitude},
                 {"noise_std", c.data.synthetic.noise_std},
                 {"turbulence", c.data.synthetic.turbulence}}}};
  j["model"] = {{"checkpoint", c.model.checkpoint.string()},
                {"width1", c.model.width1},
                {"width2", c.model.width2},
                {"width3", c.model.width3},
                {"embed_dim", c.model.embed_dim}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"warmup_steps", c.train.warmup_steps},
                {"dropout_probability", c.train.dropout_probability},
                {"lambda_dwt", c.train.loss.dwt},
                {"lambda_divergence", c.train.loss.divergence},
                {"lambda_sobel", c.train.loss.sobel},
                {"grad_clip", c.train.grad_clip},
                {"crop_size", c.train.crop_size},
                {"seed", c.train.seed}};
  j["sampler"] = {{"method", to_string(c.sampler.method)},
                  {"steps", c.sampler.steps},
                  {"order", c.sampler.order},
                  {"seed", c.sampler.seed},
                  {"ensemble_count", c.sampler.ensemble_count}};
  j["selection"] = {{"max_omitted", c.selection.max_omitted},
                    {"budget", c.selection.budget},
                    {"iterations", c.selection.iterations},
                    {"total", c.selection.total},
                    {"alpha", c.selection.alpha},
                    {"beta", c.selection.beta},
                    {"step_size", c.selection.step_size},
                    {"batch", c.selection.batch},
                    {"inner_steps", c.selection.inner_steps},
                    {"gradient_mode", to_string(c.selection.gradient_mode)},
                    {"fd_step", c.selection.fd_step},
                    {"seed", c.selection.seed}};
  j["guidance"] = {{"scheme", to_string(c.guidance.scheme)},
                   {"cfg_weight", c.guidance.cfg_weight},
                   {"weights", c.guidance.weights.string()}};
  nlohmann::ordered_json schemes = nlohmann::ordered_json::array();
  for (Scheme s : c.evaluate.schemes) schemes.push_back(to_string(s));
  j["evaluate"] = {{"schemes", schemes},
                   {"max_timestamps", c.evaluate.max_timestamps},
                   {"batch_size", c.evaluate.batch_size},
                   {"predictions", c.evaluate.predictions.string()}};
  return j;
}

void write_snapshot(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write config snapshot " + path.string());
  f << to_json(c).dump(2) << "\n";
}

}  // namespace ccfg
