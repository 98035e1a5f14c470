#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include "ccfg/tensor.hpp"

namespace ccfg {

/// Bit i set when conditioning group i is presented to the denoiser.
using GroupMask = std::uint32_t;

constexpr GroupMask full_mask(int group_count) {
  return group_count >= 32 ? ~GroupMask{0} : ((GroupMask{1} << group_count) - 1u);
}

/// A denoiser bound to a batch of conditioning inputs. It predicts the clean
/// sample x0 from a noisy batch x_t at step t, seeing only the conditioning
/// groups in `present`; everything else is presented as zeros.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual int group_count() const = 0;
  /// Rows of bound conditioning, or 0 when any batch size is accepted.
  virtual int rows() const { return 0; }

  virtual Tensor predict_x0(const Tensor& x_t, int t, GroupMask present) const = 0;

  /// Vector-Jacobian product of predict_x0 with respect to x_t.
  virtual bool supports_input_vjp() const { return false; }
  virtual Tensor x0_input_vjp(const Tensor& x_t, int t, GroupMask present,
                              const Tensor& cotangent) const;
};

/// Counts neural function evaluations (one per batch row per call) and calls.
class CountingDenoiser final : public Denoiser {
 public:
  explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}

  int group_count() const override { return inner_.group_count(); }
  int rows() const override { return inner_.rows(); }
  Tensor predict_x0(const Tensor& x_t, int t, GroupMask present) const override;
  bool supports_input_vjp() const override { return inner_.supports_input_vjp(); }
  Tensor x0_input_vjp(const Tensor& x_t, int t, GroupMask present,
                      const Tensor& cotangent) const override {
    return inner_.x0_input_vjp(x_t, t, present, cotangent);
  }

  std::uint64_t evaluations() const { return evaluations_.load(); }
  std::uint64_t calls() const { return calls_.load(); }
  void reset() {
    evaluations_ = 0;
    calls_ = 0;
  }

 private:
  const Denoiser& inner_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Presents a batch of `members * inner.rows()` rows to a denoiser bound to
/// `inner.rows()` items by evaluating it once per member block.
class ReplicatedDenoiser final : public Denoiser {
 public:
  ReplicatedDenoiser(const Denoiser& inner, int members);

  int group_count() const override { return inner_.group_count(); }
  int rows() const override { return inner_.rows() * members_; }
  Tensor predict_x0(const Tensor& x_t, int t, GroupMask present) const override;
  bool supports_input_vjp() const override { return inner_.supports_input_vjp(); }
  Tensor x0_input_vjp(const Tensor& x_t, int t, GroupMask present,
                      const Tensor& cotangent) const override;

 private:
  const Denoiser& inner_;
  int members_;
};

}  // namespace ccfg
