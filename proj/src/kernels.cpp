#include "ccfg/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <vector>

namespace ccfg::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

void check_conv(const Conv3x3& conv, const Tensor& x) {
  if (x.c != conv.c_in) {
    throw DimensionError("conv3x3: input has " + std::to_string(x.c) + " channels, expected " +
                         std::to_string(conv.c_in));
  }
}

// cols[(ci*9 + k), y*w + x] = in[ci, y+dy, x+dx] (zero outside)
void im2col(const double* in, int c, int h, int w, double* cols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = in + ci * hw;
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1;
      const int dx = k % 3 - 1;
      double* row = cols + (static_cast<std::size_t>(ci) * 9 + k) * hw;
      for (int y = 0; y < h; ++y) {
        const int sy = y + dy;
        double* out = row + static_cast<std::size_t>(y) * w;
        if (sy < 0 || sy >= h) {
          for (int x = 0; x < w; ++x) out[x] = 0.0;
          continue;
        }
        const double* src = plane + static_cast<std::size_t>(sy) * w;
        for (int x = 0; x < w; ++x) {
          const int sx = x + dx;
          out[x] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
        }
      }
    }
  }
}

void col2im(const double* cols, int c, int h, int w, double* out) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < c * hw; ++i) out[i] = 0.0;
  for (int ci = 0; ci < c; ++ci) {
    double* plane = out + ci * hw;
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1;
      const int dx = k % 3 - 1;
      const double* row = cols + (static_cast<std::size_t>(ci) * 9 + k) * hw;
      for (int y = 0; y < h; ++y) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        const double* src = row + static_cast<std::size_t>(y) * w;
        double* dst = plane + static_cast<std::size_t>(sy) * w;
        for (int x = 0; x < w; ++x) {
          const int sx = x + dx;
          if (sx >= 0 && sx < w) dst[sx] += src[x];
        }
      }
    }
  }
}

}  // namespace

void conv3x3_forward(const Conv3x3& conv, const Tensor& x, Tensor& y) {
  check_conv(conv, x);
  y = Tensor(x.n, conv.c_out, x.h, x.w);
  const int hw = x.h * x.w;
  const int kdim = conv.c_in * 9;
  ConstMapRow wmat(conv.weight, conv.c_out, kdim);
#pragma omp parallel
  {
    std::vector<double> cols(static_cast<std::size_t>(kdim) * hw);
#pragma omp for schedule(static)
    for (int i = 0; i < x.n; ++i) {
      im2col(x.sample(i), x.c, x.h, x.w, cols.data());
      MapRow out(y.sample(i), conv.c_out, hw);
      out.noalias() = wmat * ConstMapRow(cols.data(), kdim, hw);
      if (conv.bias != nullptr) {
        for (int co = 0; co < conv.c_out; ++co) out.row(co).array() += conv.bias[co];
      }
    }
  }
}

void conv3x3_backward(const Conv3x3& conv, const Tensor& x, const Tensor& dy, Tensor* dx,
                      double* dweight, double* dbias) {
  check_conv(conv, x);
  if (dy.n != x.n || dy.c != conv.c_out || dy.h != x.h || dy.w != x.w) {
    throw DimensionError("conv3x3_backward: gradient shape " + dy.shape_string());
  }
  const int hw = x.h * x.w;
  const int kdim = conv.c_in * 9;
  const std::size_t wsize = static_cast<std::size_t>(conv.c_out) * kdim;
  if (dx != nullptr) *dx = Tensor::like(x);
  ConstMapRow wmat(conv.weight, conv.c_out, kdim);
  // per-row weight gradients, reduced in row order afterwards
  std::vector<double> dw_rows(dweight != nullptr ? wsize * x.n : 0);
#pragma omp parallel
  {
    std::vector<double> cols(static_cast<std::size_t>(kdim) * hw);
#pragma omp for schedule(static)
    for (int i = 0; i < x.n; ++i) {
      ConstMapRow g(dy.sample(i), conv.c_out, hw);
      if (dweight != nullptr) {
        im2col(x.sample(i), x.c, x.h, x.w, cols.data());
        MapRow dw(dw_rows.data() + wsize * i, conv.c_out, kdim);
        dw.noalias() = g * ConstMapRow(cols.data(), kdim, hw).transpose();
      }
      if (dx != nullptr) {
        MapRow dcols(cols.data(), kdim, hw);
        dcols.noalias() = wmat.transpose() * g;
        col2im(cols.data(), x.c, x.h, x.w, dx->sample(i));
      }
    }
  }
  if (dweight != nullptr) {
    for (int i = 0; i < x.n; ++i) {
      const double* src = dw_rows.data() + wsize * i;
      for (std::size_t j = 0; j < wsize; ++j) dweight[j] += src[j];
    }
  }
  if (dbias != nullptr) {
    for (int i = 0; i < x.n; ++i) {
      for (int co = 0; co < conv.c_out; ++co) {
        const double* p = dy.channel(i, co);
        double s = 0.0;
        for (int j = 0; j < hw; ++j) s += p[j];
        dbias[co] += s;
      }
    }
  }
}

void avgpool2_forward(const Tensor& x, Tensor& y) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw DimensionError("avgpool2: odd spatial size " + x.shape_string());
  y = Tensor(x.n, x.c, x.h / 2, x.w / 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const double* src = x.channel(i, c);
      double* dst = y.channel(i, c);
      for (int yy = 0; yy < y.h; ++yy) {
        for (int xx = 0; xx < y.w; ++xx) {
          const double* p = src + static_cast<std::size_t>(2 * yy) * x.w + 2 * xx;
          dst[yy * y.w + xx] = 0.25 * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
        }
      }
    }
  }
}

void avgpool2_backward(const Tensor& dy, Tensor& dx) {
  dx = Tensor(dy.n, dy.c, dy.h * 2, dy.w * 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < dy.n; ++i) {
    for (int c = 0; c < dy.c; ++c) {
      const double* src = dy.channel(i, c);
      double* dst = dx.channel(i, c);
      for (int yy = 0; yy < dx.h; ++yy) {
        for (int xx = 0; xx < dx.w; ++xx) dst[yy * dx.w + xx] = 0.25 * src[(yy / 2) * dy.w + xx / 2];
      }
    }
  }
}

void upsample2_forward(const Tensor& x, Tensor& y) {
  y = Tensor(x.n, x.c, x.h * 2, x.w * 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const double* src = x.channel(i, c);
      double* dst = y.channel(i, c);
      for (int yy = 0; yy < y.h; ++yy) {
        for (int xx = 0; xx < y.w; ++xx) dst[yy * y.w + xx] = src[(yy / 2) * x.w + xx / 2];
      }
    }
  }
}

void upsample2_backward(const Tensor& dy, Tensor& dx) {
  if (dy.h % 2 != 0 || dy.w % 2 != 0) throw DimensionError("upsample2_backward: odd spatial size");
  dx = Tensor(dy.n, dy.c, dy.h / 2, dy.w / 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < dy.n; ++i) {
    for (int c = 0; c < dy.c; ++c) {
      const double* src = dy.channel(i, c);
      double* dst = dx.channel(i, c);
      for (int yy = 0; yy < dx.h; ++yy) {
        for (int xx = 0; xx < dx.w; ++xx) {
          const double* p = src + static_cast<std::size_t>(2 * yy) * dy.w + 2 * xx;
          dst[yy * dx.w + xx] = p[0] + p[1] + p[dy.w] + p[dy.w + 1];
        }
      }
    }
  }
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }

double silu_grad(double v) {
  const double s = 1.0 / (1.0 + std::exp(-v));
  return s * (1.0 + v * (1.0 - s));
}

namespace serial {

void conv3x3_forward(const Conv3x3& conv, const Tensor& x, Tensor& y) {
  check_conv(conv, x);
  y = Tensor(x.n, conv.c_out, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int co = 0; co < conv.c_out; ++co) {
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
          double acc = conv.bias != nullptr ? conv.bias[co] : 0.0;
          for (int ci = 0; ci < conv.c_in; ++ci) {
            const double* k = conv.weight + (static_cast<std::size_t>(co) * conv.c_in + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
              const int sy = yy + ky - 1;
              if (sy < 0 || sy >= x.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int sx = xx + kx - 1;
                if (sx < 0 || sx >= x.w) continue;
                acc += k[ky * 3 + kx] * x.at(i, ci, sy, sx);
              }
            }
          }
          y.at(i, co, yy, xx) = acc;
        }
      }
    }
  }
}

void conv3x3_backward(const Conv3x3& conv, const Tensor& x, const Tensor& dy, Tensor* dx,
                      double* dweight, double* dbias) {
  check_conv(conv, x);
  if (dy.n != x.n || dy.c != conv.c_out || dy.h != x.h || dy.w != x.w) {
    throw DimensionError("conv3x3_backward: gradient shape " + dy.shape_string());
  }
  if (dx != nullptr) *dx = Tensor::like(x);
  for (int i = 0; i < x.n; ++i) {
    for (int co = 0; co < conv.c_out; ++co) {
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
          const double g = dy.at(i, co, yy, xx);
          if (dbias != nullptr) dbias[co] += g;
          for (int ci = 0; ci < conv.c_in; ++ci) {
            const std::size_t base = (static_cast<std::size_t>(co) * conv.c_in + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
              const int sy = yy + ky - 1;
              if (sy < 0 || sy >= x.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int sx = xx + kx - 1;
                if (sx < 0 || sx >= x.w) continue;
                if (dweight != nullptr) dweight[base + ky * 3 + kx] += g * x.at(i, ci, sy, sx);
                if (dx != nullptr) dx->at(i, ci, sy, sx) += g * conv.weight[base + ky * 3 + kx];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace serial

}  // namespace ccfg::kernels
