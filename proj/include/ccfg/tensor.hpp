#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ccfg/errors.hpp"

namespace ccfg {

/// Dense NCHW block of doubles. Used for batches of multichannel grids
/// throughout the diffusion, guidance and network code.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  static Tensor like(const Tensor& other, double fill = 0.0) {
    return Tensor(other.n, other.c, other.h, other.w, fill);
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  std::size_t index(int in, int ic, int y, int x) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
  }
  double& at(int in, int ic, int y, int x) { return data[index(in, ic, y, x)]; }
  double at(int in, int ic, int y, int x) const { return data[index(in, ic, y, x)]; }

  double* sample(int in) { return data.data() + static_cast<std::size_t>(in) * sample_size(); }
  const double* sample(int in) const {
    return data.data() + static_cast<std::size_t>(in) * sample_size();
  }
  double* channel(int in, int ic) { return sample(in) + static_cast<std::size_t>(ic) * plane(); }
  const double* channel(int in, int ic) const {
    return sample(in) + static_cast<std::size_t>(ic) * plane();
  }

  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Small elementwise helpers. All of them require equal shapes.
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x
Tensor lincomb(double a, const Tensor& x, double b, const Tensor& y);  // a*x + b*y
void scale(Tensor& x, double alpha);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Rows [first, first + count) of a batch.
Tensor slice_rows(const Tensor& t, int first, int count);
/// Writes `src` into rows starting at `first`.
void assign_rows(Tensor& dst, int first, const Tensor& src);
/// Channel-wise concatenation of two batches with equal n, h, w.
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace ccfg
