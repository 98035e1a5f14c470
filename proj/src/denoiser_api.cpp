#include "ccfg/denoiser_api.hpp"

namespace ccfg {

Tensor Denoiser::x0_input_vjp(const Tensor&, int, GroupMask, const Tensor&) const {
  throw ValidationError("denoiser does not provide input gradients");
}

Tensor CountingDenoiser::predict_x0(const Tensor& x_t, int t, GroupMask present) const {
  evaluations_ += static_cast<std::uint64_t>(x_t.n);
  calls_ += 1;
  return inner_.predict_x0(x_t, t, present);
}

ReplicatedDenoiser::ReplicatedDenoiser(const Denoiser& inner, int members)
    : inner_(inner), members_(members) {
  if (members < 1) throw ValidationError("ensemble size must be at least 1");
}

Tensor ReplicatedDenoiser::predict_x0(const Tensor& x_t, int t, GroupMask present) const {
  const int block = inner_.rows();
  if (block == 0 || members_ == 1) return inner_.predict_x0(x_t, t, present);
  if (x_t.n != block * members_) throw DimensionError("ReplicatedDenoiser: unexpected batch size");
  Tensor out = Tensor::like(x_t);
  for (int m = 0; m < members_; ++m) {
    assign_rows(out, m * block, inner_.predict_x0(slice_rows(x_t, m * block, block), t, present));
  }
  return out;
}

Tensor ReplicatedDenoiser::x0_input_vjp(const Tensor& x_t, int t, GroupMask present,
                                        const Tensor& cotangent) const {
  const int block = inner_.rows();
  if (block == 0 || members_ == 1) return inner_.x0_input_vjp(x_t, t, present, cotangent);
  if (x_t.n != block * members_) throw DimensionError("ReplicatedDenoiser: unexpected batch size");
  Tensor out = Tensor::like(x_t);
  for (int m = 0; m < members_; ++m) {
    assign_rows(out, m * block,
                inner_.x0_input_vjp(slice_rows(x_t, m * block, block), t, present,
                                    slice_rows(cotangent, m * block, block)));
  }
  return out;
}

}  // namespace ccfg
