#include "ccfg/unet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ccfg/kernels.hpp"
#include "ccfg/random.hpp"

namespace ccfg {

void UNetArchitecture::validate() const {
  if (target_channels < 1 || cond_channels < 0) throw ValidationError("unet: bad channel counts");
  if (width1 < 1 || width2 < 1 || width3 < 1) throw ValidationError("unet: widths must be positive");
  if (embed_dim < 2 || embed_dim % 2 != 0) throw ValidationError("unet: embed_dim must be even and >= 2");
  if (!inputs.empty() && static_cast<int>(inputs.size()) > cond_channels) {
    throw ValidationError("unet: more input variables than conditioning channels");
  }
}

Tensor timestep_embedding(std::span<const int> t, int dim) {
  const int half = dim / 2;
  Tensor e(static_cast<int>(t.size()), dim, 1, 1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      e.at(static_cast<int>(i), k, 0, 0) = std::sin(t[i] * freq);
      e.at(static_cast<int>(i), half + k, 0, 0) = std::cos(t[i] * freq);
    }
  }
  return e;
}

std::size_t UNet::add_slot(const std::string& name, std::vector<int> shape) {
  ParamSlot s;
  s.name = name;
  s.size = 1;
  for (int d : shape) s.size *= static_cast<std::size_t>(d);
  s.shape = std::move(shape);
  s.offset = slots_.empty() ? 0 : slots_.back().offset + slots_.back().size;
  slots_.push_back(std::move(s));
  return slots_.size() - 1;
}

UNet::Conv UNet::add_conv(const std::string& name, int c_in, int c_out) {
  Conv c;
  c.c_in = c_in;
  c.c_out = c_out;
  c.weight = add_slot(name + ".weight", {c_out, c_in, 3, 3});
  c.bias = add_slot(name + ".bias", {c_out});
  return c;
}

UNet::Block UNet::add_block(const std::string& name, int channels) {
  Block b;
  b.channels = channels;
  b.a = add_conv(name + ".conv_a", channels, channels);
  b.proj_weight = add_slot(name + ".proj.weight", {channels, arch_.embed_dim});
  b.proj_bias = add_slot(name + ".proj.bias", {channels});
  b.b = add_conv(name + ".conv_b", channels, channels);
  return b;
}

UNet::UNet(UNetArchitecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  sched_ = arch_.schedule();
  const int e = arch_.embed_dim;
  const int c1 = arch_.width1, c2 = arch_.width2, c3 = arch_.width3;
  temb_weight_ = add_slot("temb.weight", {e, e});
  temb_bias_ = add_slot("temb.bias", {e});
  conv_in_ = add_conv("conv_in", arch_.input_channels(), c1);
  rb1_ = add_block("block1", c1);
  conv_d1_ = add_conv("down1", c1, c2);
  rb2_ = add_block("block2", c2);
  conv_d2_ = add_conv("down2", c2, c3);
  rb3_ = add_block("block3", c3);
  conv_u2_ = add_conv("up2", c3 + c2, c2);
  rb4_ = add_block("block4", c2);
  conv_u1_ = add_conv("up1", c2 + c1, c1);
  conv_out_ = add_conv("conv_out", c1, arch_.target_channels);
  params_.assign(slots_.back().offset + slots_.back().size, 0.0);
}

void UNet::initialize(std::uint64_t seed) {
  Engine rng(stream_seed({seed, 0x756e6574}));
  for (const ParamSlot& s : slots_) {
    const bool is_bias = s.shape.size() == 1;
    double stddev = 0.0;
    if (!is_bias) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < s.shape.size(); ++d) fan_in *= static_cast<std::size_t>(s.shape[d]);
      stddev = std::sqrt(1.0 / static_cast<double>(fan_in));
      // residual branches and the output head start small
      if (s.name.find("conv_b") != std::string::npos || s.name.rfind("conv_out", 0) == 0) stddev *= 0.1;
    }
    for (std::size_t i = 0; i < s.size; ++i) {
      params_[s.offset + i] = is_bias ? 0.0 : stddev * standard_normal(rng);
    }
  }
}

void UNet::conv_forward(const Conv& c, const Tensor& x, Tensor& y) const {
  kernels::conv3x3_forward({c.c_in, c.c_out, p(c.weight), p(c.bias)}, x, y);
}

void UNet::conv_backward(const Conv& c, const Tensor& x, const Tensor& dy, Tensor* dx,
                         std::span<double> grad) const {
  double* gw = grad.empty() ? nullptr : grad.data() + slots_[c.weight].offset;
  double* gb = grad.empty() ? nullptr : grad.data() + slots_[c.bias].offset;
  kernels::conv3x3_backward({c.c_in, c.c_out, p(c.weight), nullptr}, x, dy, dx, gw, gb);
}

namespace {

Tensor map_silu(const Tensor& x) {
  Tensor y = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = kernels::silu(x.data[i]);
  return y;
}

// dy * silu'(pre)
void silu_backward_inplace(const Tensor& pre, Tensor& d) {
  for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= kernels::silu_grad(pre.data[i]);
}

// Splits channels [0, first) and [first, c) of a gradient tensor.
void split_channels(const Tensor& g, int first, Tensor& a, Tensor& b) {
  a = Tensor(g.n, first, g.h, g.w);
  b = Tensor(g.n, g.c - first, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::memcpy(a.sample(i), g.sample(i), a.sample_size() * sizeof(double));
    std::memcpy(b.sample(i), g.sample(i) + a.sample_size(), b.sample_size() * sizeof(double));
  }
}

}  // namespace

Tensor UNet::block_forward(const Block& b, const Tensor& x, const Tensor& emb,
                           Tape::BlockTape* tape) const {
  const int e = arch_.embed_dim;
  Tensor a0 = map_silu(x);
  Tensor a2;
  conv_forward(b.a, a0, a2);
  const double* pw = p(b.proj_weight);
  const double* pb = p(b.proj_bias);
  for (int i = 0; i < x.n; ++i) {
    const double* em = emb.sample(i);
    for (int c = 0; c < b.channels; ++c) {
      double shift = pb[c];
      for (int k = 0; k < e; ++k) shift += pw[c * e + k] * em[k];
      double* ch = a2.channel(i, c);
      for (std::size_t j = 0; j < a2.plane(); ++j) ch[j] += shift;
    }
  }
  Tensor a3 = map_silu(a2);
  Tensor out;
  conv_forward(b.b, a3, out);
  axpy(1.0, x, out);
  if (tape != nullptr) {
    tape->x = x;
    tape->a0 = std::move(a0);
    tape->a2 = std::move(a2);
    tape->a3 = std::move(a3);
  }
  return out;
}

Tensor UNet::block_backward(const Block& b, const Tape::BlockTape& tape, const Tensor& emb,
                            const Tensor& dout, Tensor& d_emb, std::span<double> grad) const {
  const int e = arch_.embed_dim;
  Tensor da3;
  conv_backward(b.b, tape.a3, dout, &da3, grad);
  silu_backward_inplace(tape.a2, da3);  // now d a2
  const double* pw = p(b.proj_weight);
  double* gpw = grad.empty() ? nullptr : grad.data() + slots_[b.proj_weight].offset;
  double* gpb = grad.empty() ? nullptr : grad.data() + slots_[b.proj_bias].offset;
  for (int i = 0; i < dout.n; ++i) {
    const double* em = emb.sample(i);
    double* dem = d_emb.sample(i);
    for (int c = 0; c < b.channels; ++c) {
      const double* ch = da3.channel(i, c);
      double s = 0.0;
      for (std::size_t j = 0; j < da3.plane(); ++j) s += ch[j];
      if (gpb != nullptr) {
        gpb[c] += s;
        for (int k = 0; k < e; ++k) gpw[c * e + k] += s * em[k];
      }
      for (int k = 0; k < e; ++k) dem[k] += s * pw[c * e + k];
    }
  }
  Tensor da0;
  conv_backward(b.a, tape.a0, da3, &da0, grad);
  silu_backward_inplace(tape.x, da0);
  axpy(1.0, dout, da0);
  return da0;
}

Tensor UNet::forward(const Tensor& input, std::span<const int> t, Tape* tape) const {
  const int ct = arch_.target_channels;
  if (input.c != arch_.input_channels()) {
    throw DimensionError("unet: input has " + std::to_string(input.c) + " channels, expected " +
                         std::to_string(arch_.input_channels()));
  }
  if (input.h % 4 != 0 || input.w % 4 != 0 || input.h < 4 || input.w < 4) {
    throw DimensionError("unet: spatial size must be a positive multiple of 4, got " + input.shape_string());
  }
  if (static_cast<int>(t.size()) != input.n) throw DimensionError("unet: one timestep per row required");
  for (int ti : t) {
    if (ti < 1 || ti > sched_.steps()) throw ValidationError("unet: timestep out of range");
  }

  const int e = arch_.embed_dim;
  Tensor emb0 = timestep_embedding(t, e);
  Tensor emb_pre(input.n, e, 1, 1);
  const double* tw = p(temb_weight_);
  const double* tb = p(temb_bias_);
  for (int i = 0; i < input.n; ++i) {
    for (int r = 0; r < e; ++r) {
      double acc = tb[r];
      for (int k = 0; k < e; ++k) acc += tw[r * e + k] * emb0.at(i, k, 0, 0);
      emb_pre.at(i, r, 0, 0) = acc;
    }
  }
  Tensor emb = map_silu(emb_pre);

  Tape local;
  Tape& tp = tape != nullptr ? *tape : local;
  Tensor h0, p1, h1, p2, h2, u2, c2, h3, u1, c1, h4, f;
  conv_forward(conv_in_, input, h0);
  Tensor e1 = block_forward(rb1_, h0, emb, tape ? &tp.b1 : nullptr);
  kernels::avgpool2_forward(e1, p1);
  conv_forward(conv_d1_, p1, h1);
  Tensor e2 = block_forward(rb2_, h1, emb, tape ? &tp.b2 : nullptr);
  kernels::avgpool2_forward(e2, p2);
  conv_forward(conv_d2_, p2, h2);
  Tensor m = block_forward(rb3_, h2, emb, tape ? &tp.b3 : nullptr);
  kernels::upsample2_forward(m, u2);
  c2 = concat_channels(u2, e2);
  conv_forward(conv_u2_, c2, h3);
  Tensor d2 = block_forward(rb4_, h3, emb, tape ? &tp.b4 : nullptr);
  kernels::upsample2_forward(d2, u1);
  c1 = concat_channels(u1, e1);
  conv_forward(conv_u1_, c1, h4);
  Tensor s = map_silu(h4);
  conv_forward(conv_out_, s, f);

  Tensor x0(input.n, ct, input.h, input.w);
  for (int i = 0; i < input.n; ++i) {
    const double ra = std::sqrt(sched_.alpha_bar(t[i]));
    const double sg = sched_.sigma(t[i]);
    const double* xt = input.sample(i);
    const double* fi = f.sample(i);
    double* out = x0.sample(i);
    for (std::size_t j = 0; j < x0.sample_size(); ++j) out[j] = ra * xt[j] + sg * fi[j];
  }

  if (tape != nullptr) {
    tp.input = input;
    tp.t.assign(t.begin(), t.end());
    tp.emb0 = std::move(emb0);
    tp.emb_pre = std::move(emb_pre);
    tp.emb = std::move(emb);
    tp.h0 = std::move(h0);
    tp.p1 = std::move(p1);
    tp.h1 = std::move(h1);
    tp.p2 = std::move(p2);
    tp.h2 = std::move(h2);
    tp.c2 = std::move(c2);
    tp.c1 = std::move(c1);
    tp.h4 = std::move(h4);
    tp.s = std::move(s);
    tp.e1 = std::move(e1);
    tp.e2 = std::move(e2);
  }
  return x0;
}

Tensor UNet::backward(const Tape& tp, const Tensor& d_x0, std::span<double> grad, bool input_grad) const {
  if (!grad.empty() && grad.size() != params_.size()) throw DimensionError("unet: gradient buffer size mismatch");
  const int ct = arch_.target_channels;
  const int n = tp.input.n;
  if (d_x0.n != n || d_x0.c != ct || d_x0.h != tp.input.h || d_x0.w != tp.input.w) {
    throw DimensionError("unet: output gradient shape " + d_x0.shape_string());
  }
  const int e = arch_.embed_dim;
  const int c1 = arch_.width1, c2 = arch_.width2;

  Tensor df = Tensor::like(d_x0);
  for (int i = 0; i < n; ++i) {
    const double sg = sched_.sigma(tp.t[i]);
    const double* g = d_x0.sample(i);
    double* out = df.sample(i);
    for (std::size_t j = 0; j < df.sample_size(); ++j) out[j] = sg * g[j];
  }
  Tensor d_emb(n, e, 1, 1);

  Tensor ds, dc1, du1, de1, dd2, dh3, dc2, du2, de2, dm, dh2, dp2, dh1, dp1, dh0;
  conv_backward(conv_out_, tp.s, df, &ds, grad);
  silu_backward_inplace(tp.h4, ds);
  conv_backward(conv_u1_, tp.c1, ds, &dc1, grad);
  split_channels(dc1, c2, du1, de1);
  kernels::upsample2_backward(du1, dd2);
  dh3 = block_backward(rb4_, tp.b4, tp.emb, dd2, d_emb, grad);
  conv_backward(conv_u2_, tp.c2, dh3, &dc2, grad);
  split_channels(dc2, arch_.width3, du2, de2);
  kernels::upsample2_backward(du2, dm);
  dh2 = block_backward(rb3_, tp.b3, tp.emb, dm, d_emb, grad);
  conv_backward(conv_d2_, tp.p2, dh2, &dp2, grad);
  Tensor tmp;
  kernels::avgpool2_backward(dp2, tmp);
  axpy(1.0, tmp, de2);
  dh1 = block_backward(rb2_, tp.b2, tp.emb, de2, d_emb, grad);
  conv_backward(conv_d1_, tp.p1, dh1, &dp1, grad);
  kernels::avgpool2_backward(dp1, tmp);
  axpy(1.0, tmp, de1);
  dh0 = block_backward(rb1_, tp.b1, tp.emb, de1, d_emb, grad);
  (void)c1;

  Tensor d_input;
  conv_backward(conv_in_, tp.input, dh0, input_grad ? &d_input : nullptr, grad);

  if (!grad.empty()) {
    silu_backward_inplace(tp.emb_pre, d_emb);
    double* gw = grad.data() + slots_[temb_weight_].offset;
    double* gb = grad.data() + slots_[temb_bias_].offset;
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < e; ++r) {
        const double g = d_emb.at(i, r, 0, 0);
        gb[r] += g;
        for (int k = 0; k < e; ++k) gw[r * e + k] += g * tp.emb0.at(i, k, 0, 0);
      }
    }
  }

  if (input_grad) {
    // direct path through sqrt(alpha_bar) x_t
    for (int i = 0; i < n; ++i) {
      const double ra = std::sqrt(sched_.alpha_bar(tp.t[i]));
      for (int c = 0; c < ct; ++c) {
        const double* g = d_x0.channel(i, c);
        double* out = d_input.channel(i, c);
        for (std::size_t j = 0; j < d_input.plane(); ++j) out[j] += ra * g[j];
      }
    }
  }
  return d_input;
}

namespace {

nlohmann::ordered_json arch_to_json(const UNetArchitecture& a) {
  nlohmann::ordered_json j;
  j["target_channels"] = a.target_channels;
  j["cond_channels"] = a.cond_channels;
  j["width1"] = a.width1;
  j["width2"] = a.width2;
  j["width3"] = a.width3;
  j["embed_dim"] = a.embed_dim;
  j["inputs"] = a.inputs;
  j["schedule_steps"] = a.schedule_steps;
  j["beta_start"] = a.beta_start;
  j["beta_end"] = a.beta_end;
  return j;
}

UNetArchitecture arch_from_json(const nlohmann::json& j) {
  static const char* keys[] = {"target_channels", "cond_channels", "width1", "width2", "width3",
                               "embed_dim", "inputs", "schedule_steps", "beta_start", "beta_end"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw FormatError("checkpoint: unknown architecture key '" + it.key() + "'");
  }
  UNetArchitecture a;
  a.target_channels = j.at("target_channels").get<int>();
  a.cond_channels = j.at("cond_channels").get<int>();
  a.width1 = j.at("width1").get<int>();
  a.width2 = j.at("width2").get<int>();
  a.width3 = j.at("width3").get<int>();
  a.embed_dim = j.at("embed_dim").get<int>();
  a.inputs = j.at("inputs").get<std::vector<std::string>>();
  a.schedule_steps = j.at("schedule_steps").get<int>();
  a.beta_start = j.at("beta_start").get<double>();
  a.beta_end = j.at("beta_end").get<double>();
  return a;
}

std::filesystem::path payload_path(const std::filesystem::path& descriptor) {
  std::filesystem::path p = descriptor;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void save_checkpoint(const UNet& model, const std::filesystem::path& descriptor) {
  const auto payload = payload_path(descriptor);
  nlohmann::ordered_json j;
  j["format"] = "ccfg-checkpoint";
  j["version"] = 1;
  j["payload"] = payload.filename().string();
  j["architecture"] = arch_to_json(model.architecture());
  j["parameter_count"] = model.parameter_count();
  nlohmann::ordered_json slots = nlohmann::ordered_json::array();
  for (const ParamSlot& s : model.slots()) {
    slots.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", s.offset}});
  }
  j["parameters"] = slots;
  {
    std::ofstream f(descriptor);
    if (!f) throw FormatError("cannot write checkpoint descriptor " + descriptor.string());
    f << j.dump(2) << "\n";
  }
  std::ofstream f(payload, std::ios::binary);
  if (!f) throw FormatError("cannot write checkpoint payload " + payload.string());
  std::vector<unsigned char> bytes(model.parameter_count() * 4);
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(params[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to " + payload.string());
}

UNet load_checkpoint(const std::filesystem::path& descriptor) {
  std::ifstream in(descriptor);
  if (!in) throw FormatError("cannot open checkpoint " + descriptor.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + descriptor.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "ccfg-checkpoint") throw FormatError("not a ccfg checkpoint");
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported checkpoint version");
    UNet model(arch_from_json(j.at("architecture")));
    if (j.at("parameter_count").get<std::size_t>() != model.parameter_count()) {
      throw FormatError("checkpoint parameter count does not match its architecture");
    }
    const auto& slots = j.at("parameters");
    if (slots.size() != model.slots().size()) throw FormatError("checkpoint slot table mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const ParamSlot& s = model.slots()[i];
      if (slots[i].at("name").get<std::string>() != s.name ||
          slots[i].at("shape").get<std::vector<int>>() != s.shape ||
          slots[i].at("offset").get<std::size_t>() != s.offset) {
        throw FormatError("checkpoint slot " + std::to_string(i) + " does not match the architecture");
      }
    }
    const auto payload = descriptor.parent_path() / j.at("payload").get<std::string>();
    std::ifstream f(payload, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint payload " + payload.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() != model.parameter_count() * 4) {
      throw FormatError("checkpoint payload holds " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(model.parameter_count() * 4));
    }
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
      params[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + descriptor.string() + ": " + e.what());
  }
}

}  // namespace ccfg
