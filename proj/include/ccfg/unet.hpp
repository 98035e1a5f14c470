#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccfg/diffusion.hpp"
#include "ccfg/tensor.hpp"

namespace ccfg {

/// Shape of the toy U-Net. Conditioning enters by channel concatenation
/// after the noisy target channels.
struct UNetArchitecture {
  int target_channels = 3;
  int cond_channels = 4;
  int width1 = 12;
  int width2 = 24;
  int width3 = 48;
  int embed_dim = 32;
  /// Conditioning variables in assembly order; informational for loaders.
  std::vector<std::string> inputs;
  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  int input_channels() const { return target_channels + cond_channels; }
  void validate() const;
  NoiseSchedule schedule() const { return NoiseSchedule::linear(schedule_steps, beta_start, beta_end); }
};

struct ParamSlot {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Encoder-decoder with two 2x downsamplings, four residual blocks and a
/// sinusoidal timestep embedding added per block. The raw network output F
/// is preconditioned into a clean-sample prediction
///   x0 = sqrt(alpha_bar_t) x_t + sigma_t F.
class UNet {
 public:
  explicit UNet(UNetArchitecture arch);

  const UNetArchitecture& architecture() const { return arch_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  void initialize(std::uint64_t seed);

  /// Cached activations of one forward pass.
  struct Tape {
    Tensor input;
    std::vector<int> t;
    Tensor emb0, emb_pre, emb;  // [n, E, 1, 1]
    struct BlockTape {
      Tensor x, a0, a2, a3;
    };
    Tensor h0, p1, h1, p2, h2, c2, c1, h4, s;
    BlockTape b1, b2, b3, b4;
    Tensor e1, e2;
  };


  /// input is [n, target + cond, h, w] with h and w divisible by 4; t holds
  /// one timestep per row. Returns the x0 prediction [n, target, h, w].
  Tensor forward(const Tensor& input, std::span<const int> t, Tape* tape = nullptr) const;

  /// Backpropagates dL/dx0. Adds parameter gradients into `grad` (sized like
  /// parameters()) when `grad` is non-empty and returns dL/dinput when
  /// `input_grad` (an empty tensor otherwise).
  Tensor backward(const Tape& tape, const Tensor& d_x0, std::span<double> grad,
                  bool input_grad) const;

 private:
  struct Conv {
    std::size_t weight = 0, bias = 0;
    int c_in = 0, c_out = 0;
  };
  struct Block {
    Conv a, b;
    std::size_t proj_weight = 0, proj_bias = 0;  // [c, E], [c]
    int channels = 0;
  };

  std::size_t add_slot(const std::string& name, std::vector<int> shape);
  Conv add_conv(const std::string& name, int c_in, int c_out);
  Block add_block(const std::string& name, int channels);
  const double* p(std::size_t slot) const { return params_.data() + slots_[slot].offset; }

  void conv_forward(const Conv& c, const Tensor& x, Tensor& y) const;
  void conv_backward(const Conv& c, const Tensor& x, const Tensor& dy, Tensor* dx,
                     std::span<double> grad) const;
  Tensor block_forward(const Block& b, const Tensor& x, const Tensor& emb, Tape::BlockTape* tape) const;
  Tensor block_backward(const Block& b, const Tape::BlockTape& tape, const Tensor& emb,
                        const Tensor& dout, Tensor& d_emb, std::span<double> grad) const;

  UNetArchitecture arch_;
  Conv conv_in_, conv_d1_, conv_d2_, conv_u2_, conv_u1_, conv_out_;
  Block rb1_, rb2_, rb3_, rb4_;
  std::size_t temb_weight_ = 0, temb_bias_ = 0;
  NoiseSchedule sched_;
  std::vector<ParamSlot> slots_;
  std::vector<double> params_;
};

/// Sinusoidal embedding of integer timesteps, [n, dim, 1, 1].
Tensor timestep_embedding(std::span<const int> t, int dim);

/// Checkpoint: `<stem>.json` architecture descriptor plus `<stem>.bin`, a flat
/// little-endian float32 parameter payload in slot order.
void save_checkpoint(const UNet& model, const std::filesystem::path& descriptor);
UNet load_checkpoint(const std::filesystem::path& descriptor);

}  // namespace ccfg
