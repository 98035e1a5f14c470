#pragma once

// Independent brute-force references for the loss terms, the simplex
// projection and CRPS. Written directly from the textbook definitions and
// sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ccfg/tensor.hpp"

namespace oracle {

using ccfg::Tensor;

inline double l1(const Tensor& p, const Tensor& t) {
  long double s = 0.0;
  for (int i = 0; i < p.n; ++i)
    for (int c = 0; c < p.c; ++c)
      for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) s += std::fabs(p.at(i, c, y, x) - t.at(i, c, y, x));
  return static_cast<double>(s / static_cast<long double>(p.size()));
}

using Image = std::vector<std::vector<double>>;

inline Image plane_of(const Tensor& t, int i, int c) {
  Image img(t.h, std::vector<double>(t.w));
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) img[y][x] = t.at(i, c, y, x);
  return img;
}

// Two-channel filter bank: lowpass (1, 1)/sqrt2, highpass (1, -1)/sqrt2,
// each followed by downsampling by two.
inline void filter_rows(const Image& in, Image& lo, Image& hi) {
  const double r = 1.0 / std::sqrt(2.0);
  const double h0[2] = {r, r}, h1[2] = {r, -r};
  lo.assign(in.size(), std::vector<double>(in[0].size() / 2));
  hi = lo;
  for (std::size_t y = 0; y < in.size(); ++y) {
    for (std::size_t k = 0; k < lo[y].size(); ++k) {
      double a = 0.0, b = 0.0;
      for (int j = 0; j < 2; ++j) {
        a += h0[j] * in[y][2 * k + j];
        b += h1[j] * in[y][2 * k + j];
      }
      lo[y][k] = a;
      hi[y][k] = b;
    }
  }
}

inline Image transpose(const Image& a) {
  Image t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t y = 0; y < a.size(); ++y)
    for (std::size_t x = 0; x < a[0].size(); ++x) t[x][y] = a[y][x];
  return t;
}

/// Sum of squared detail coefficients of a two-level 2-D Haar filter bank.
inline double haar_detail_energy(const Image& img, int levels) {
  double s = 0.0;
  Image cur = img;
  for (int l = 0; l < levels; ++l) {
    Image lo, hi;
    filter_rows(cur, lo, hi);
    Image lolo, lohi, hilo, hihi;
    filter_rows(transpose(lo), lolo, lohi);
    filter_rows(transpose(hi), hilo, hihi);
    for (const Image* band : {&lohi, &hilo, &hihi})
      for (const auto& row : *band)
        for (double v : row) s += v * v;
    cur = transpose(lolo);
  }
  return s;
}

inline double dwt(const Tensor& p, const Tensor& t) {
  double s = 0.0;
  for (int i = 0; i < p.n; ++i) {
    for (int c = 0; c < p.c; ++c) {
      Image d = plane_of(p, i, c);
      const Image b = plane_of(t, i, c);
      for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) d[y][x] -= b[y][x];
      s += haar_detail_energy(d, 2);
    }
  }
  return s / p.n;
}

/// Finite-difference divergence, unit spacing: central inside, one-sided at edges.
inline Image divergence(const Image& u, const Image& v) {
  const int h = static_cast<int>(u.size()), w = static_cast<int>(u[0].size());
  auto d = [](const std::function<double(int)>& f, int i, int n) {
    if (i == 0) return f(1) - f(0);
    if (i == n - 1) return f(n - 1) - f(n - 2);
    return (f(i + 1) - f(i - 1)) / 2.0;
  };
  Image out(h, std::vector<double>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out[y][x] = d([&](int k) { return u[y][k]; }, x, w) + d([&](int k) { return v[k][x]; }, y, h);
    }
  }
  return out;
}

inline double divergence_loss(const Tensor& p, const Tensor& t) {
  double s = 0.0;
  for (int i = 0; i < p.n; ++i) {
    const Image dp = divergence(plane_of(p, i, 0), plane_of(p, i, 1));
    const Image dt = divergence(plane_of(t, i, 0), plane_of(t, i, 1));
    for (std::size_t y = 0; y < dp.size(); ++y)
      for (std::size_t x = 0; x < dp[0].size(); ++x) s += (dp[y][x] - dt[y][x]) * (dp[y][x] - dt[y][x]);
  }
  return s / p.n;
}

/// Direct 2-D convolution (flipped kernel) of an edge-replicated image.
inline Image convolve3(const Image& img, const double (&k)[3][3]) {
  const int h = static_cast<int>(img.size()), w = static_cast<int>(img[0].size());
  Image pad(h + 2, std::vector<double>(w + 2));
  for (int y = 0; y < h + 2; ++y)
    for (int x = 0; x < w + 2; ++x)
      pad[y][x] = img[std::clamp(y - 1, 0, h - 1)][std::clamp(x - 1, 0, w - 1)];
  Image out(h, std::vector<double>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double a = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a += k[i][j] * pad[y + 2 - i][x + 2 - j];
      out[y][x] = a;
    }
  return out;
}

inline double sobel(const Tensor& p, const Tensor& t) {
  static const double kx[3][3] = {{1, 0, -1}, {2, 0, -2}, {1, 0, -1}};
  static const double ky[3][3] = {{1, 2, 1}, {0, 0, 0}, {-1, -2, -1}};
  double s = 0.0;
  for (int i = 0; i < p.n; ++i) {
    for (int c = 0; c < p.c; ++c) {
      const Image a = plane_of(p, i, c), b = plane_of(t, i, c);
      for (const auto* k : {&kx, &ky}) {
        const Image ca = convolve3(a, *k), cb = convolve3(b, *k);
        for (int y = 0; y < p.h; ++y)
          for (int x = 0; x < p.w; ++x) s += std::fabs(ca[y][x] - cb[y][x]);
      }
    }
  }
  return s / p.n;
}

/// Euclidean projection onto {x >= 0, sum x = W} by enumerating every support
/// set and keeping the closest feasible KKT point.
inline std::vector<double> simplex_projection(const std::vector<double>& v, double W) {
  const std::size_t n = v.size();
  std::vector<double> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int k = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        sum += v[i];
        ++k;
      }
    const double shift = (sum - W) / k;
    std::vector<double> x(n, 0.0);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        x[i] = v[i] - shift;
        ok = ok && x[i] >= -1e-15;
      }
    if (!ok) continue;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += (x[i] - v[i]) * (x[i] - v[i]);
    if (d < best_d) {
      best_d = d;
      best = x;
    }
  }
  return best;
}

/// Grid search over the simplex with spacing W / steps.
inline std::vector<double> simplex_grid_search(const std::vector<double>& v, double W, int steps) {
  const std::size_t n = v.size();
  std::vector<double> best;
  double best_d = std::numeric_limits<double>::infinity();
  auto consider = [&](const std::vector<double>& x) {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += (x[i] - v[i]) * (x[i] - v[i]);
    if (d < best_d) {
      best_d = d;
      best = x;
    }
  };
  const double h = W / steps;
  if (n == 1) {
    consider({W});
  } else if (n == 2) {
    for (int a = 0; a <= steps; ++a) consider({a * h, W - a * h});
  } else {
    for (int a = 0; a <= steps; ++a)
      for (int b = 0; a + b <= steps; ++b) consider({a * h, b * h, W - (a + b) * h});
  }
  return best;
}

/// CRPS as the integral of (F(z) - H(z - y))^2. The integrand is piecewise
/// constant between the ensemble members and y, so a midpoint rule on each
/// piece is exact.
inline double crps_quadrature(const std::vector<double>& ens, double y) {
  std::vector<double> cuts(ens);
  cuts.push_back(y);
  std::sort(cuts.begin(), cuts.end());
  auto integrand = [&](double z) {
    double f = 0.0;
    for (double e : ens) f += e <= z ? 1.0 : 0.0;
    f /= static_cast<double>(ens.size());
    const double step = z >= y ? 1.0 : 0.0;
    return (f - step) * (f - step);
  };
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    s += integrand(0.5 * (cuts[i] + cuts[i + 1])) * (cuts[i + 1] - cuts[i]);
  }
  return s;
}

}  // namespace oracle
