#pragma once

// Dense image kernels used by the toy U-Net. The default versions run the
// batch dimension under OpenMP and use Eigen for the channel contractions;
// `serial` holds plain-loop references with identical semantics for tests
// and benchmarks.

#include "ccfg/tensor.hpp"

namespace ccfg::kernels {

/// Weights are [c_out, c_in, 3, 3] row-major; zero padding of one cell.
struct Conv3x3 {
  int c_in = 0;
  int c_out = 0;
  const double* weight = nullptr;
  const double* bias = nullptr;  // c_out entries, may be null
};

/// y = conv(x); y is resized to [n, c_out, h, w].
void conv3x3_forward(const Conv3x3& conv, const Tensor& x, Tensor& y);

/// Accumulates dL/dweight and dL/dbias (either may be null) and, when dx is
/// non-null, writes dL/dx. Weight gradients are summed over the batch in row
/// order regardless of threading.
void conv3x3_backward(const Conv3x3& conv, const Tensor& x, const Tensor& dy, Tensor* dx,
                      double* dweight, double* dbias);

/// 2x2 mean pooling and its adjoint.
void avgpool2_forward(const Tensor& x, Tensor& y);
void avgpool2_backward(const Tensor& dy, Tensor& dx);

/// Nearest-neighbour 2x upsampling and its adjoint.
void upsample2_forward(const Tensor& x, Tensor& y);
void upsample2_backward(const Tensor& dy, Tensor& dx);

double silu(double v);
double silu_grad(double v);

namespace serial {
void conv3x3_forward(const Conv3x3& conv, const Tensor& x, Tensor& y);
void conv3x3_backward(const Conv3x3& conv, const Tensor& x, const Tensor& dy, Tensor* dx,
                      double* dweight, double* dbias);
}  // namespace serial

}  // namespace ccfg::kernels
