#include "ccfg/losses.hpp"

#include <cmath>

namespace ccfg {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor difference(const Tensor& a, const Tensor& b) { return lincomb(1.0, a, -1.0, b); }

void require_rows(const Tensor& t, const char* what) {
  if (t.n < 1) throw DimensionError(std::string(what) + ": empty batch");
}

}  // namespace

double l1_loss(const Tensor& pred, const Tensor& truth, Tensor* grad) {
  require_same_shape(pred, truth, "l1_loss");
  require_rows(pred, "l1_loss");
  const double inv = 1.0 / static_cast<double>(pred.size());
  double s = 0.0;
  if (grad != nullptr) *grad = Tensor::like(pred);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - truth.data[i];
    s += std::abs(d);
    if (grad != nullptr) grad->data[i] = sign(d) * inv;
  }
  return s * inv;
}

HaarLevel haar_analysis(const Tensor& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw DimensionError("haar: spatial size must be even, got " + x.shape_string());
  HaarLevel out;
  out.ll = Tensor(x.n, x.c, x.h / 2, x.w / 2);
  out.lh = Tensor::like(out.ll);
  out.hl = Tensor::like(out.ll);
  out.hh = Tensor::like(out.ll);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      for (int y = 0; y < out.ll.h; ++y) {
        for (int xx = 0; xx < out.ll.w; ++xx) {
          const double a = x.at(i, c, 2 * y, 2 * xx);
          const double b = x.at(i, c, 2 * y, 2 * xx + 1);
          const double cc = x.at(i, c, 2 * y + 1, 2 * xx);
          const double d = x.at(i, c, 2 * y + 1, 2 * xx + 1);
          out.ll.at(i, c, y, xx) = 0.5 * (a + b + cc + d);
          out.hl.at(i, c, y, xx) = 0.5 * (a - b + cc - d);
          out.lh.at(i, c, y, xx) = 0.5 * (a + b - cc - d);
          out.hh.at(i, c, y, xx) = 0.5 * (a - b - cc + d);
        }
      }
    }
  }
  return out;
}

Tensor haar_synthesis(const HaarLevel& l) {
  Tensor x(l.ll.n, l.ll.c, l.ll.h * 2, l.ll.w * 2);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      for (int y = 0; y < l.ll.h; ++y) {
        for (int xx = 0; xx < l.ll.w; ++xx) {
          const double ll = l.ll.at(i, c, y, xx), hl = l.hl.at(i, c, y, xx);
          const double lh = l.lh.at(i, c, y, xx), hh = l.hh.at(i, c, y, xx);
          x.at(i, c, 2 * y, 2 * xx) = 0.5 * (ll + hl + lh + hh);
          x.at(i, c, 2 * y, 2 * xx + 1) = 0.5 * (ll - hl + lh - hh);
          x.at(i, c, 2 * y + 1, 2 * xx) = 0.5 * (ll + hl - lh - hh);
          x.at(i, c, 2 * y + 1, 2 * xx + 1) = 0.5 * (ll - hl - lh + hh);
        }
      }
    }
  }
  return x;
}

std::array<HaarLevel, 2> haar_analysis2(const Tensor& x) {
  if (x.h % 4 != 0 || x.w % 4 != 0) {
    throw DimensionError("two-level haar: spatial size must be divisible by 4, got " + x.shape_string());
  }
  std::array<HaarLevel, 2> out;
  out[0] = haar_analysis(x);
  out[1] = haar_analysis(out[0].ll);
  return out;
}

Tensor haar_synthesis2(const std::array<HaarLevel, 2>& levels) {
  HaarLevel fine = levels[0];
  fine.ll = haar_synthesis(levels[1]);
  return haar_synthesis(fine);
}

double dwt_loss(const Tensor& pred, const Tensor& truth, Tensor* grad) {
  require_same_shape(pred, truth, "dwt_loss");
  require_rows(pred, "dwt_loss");
  // the transform is linear, so decompose the residual once
  auto lv = haar_analysis2(difference(pred, truth));
  double s = 0.0;
  for (const HaarLevel& l : lv) {
    for (const Tensor* band : {&l.lh, &l.hl, &l.hh}) {
      for (double v : band->data) s += v * v;
    }
  }
  const double inv_n = 1.0 / pred.n;
  if (grad != nullptr) {
    // orthonormal: the adjoint of analysis is synthesis
    lv[1].ll = Tensor::like(lv[1].ll);
    *grad = haar_synthesis2(lv);
    scale(*grad, 2.0 * inv_n);
  }
  return s * inv_n;
}

Tensor gradient_x(const Tensor& f) {
  if (f.w < 2) throw DimensionError("gradient_x: need at least 2 columns");
  Tensor g = Tensor::like(f);
  for (int i = 0; i < f.n; ++i) {
    for (int c = 0; c < f.c; ++c) {
      for (int y = 0; y < f.h; ++y) {
        const double* r = f.channel(i, c) + static_cast<std::size_t>(y) * f.w;
        double* o = g.channel(i, c) + static_cast<std::size_t>(y) * f.w;
        o[0] = r[1] - r[0];
        o[f.w - 1] = r[f.w - 1] - r[f.w - 2];
        for (int x = 1; x < f.w - 1; ++x) o[x] = 0.5 * (r[x + 1] - r[x - 1]);
      }
    }
  }
  return g;
}

Tensor gradient_y(const Tensor& f) {
  if (f.h < 2) throw DimensionError("gradient_y: need at least 2 rows");
  Tensor g = Tensor::like(f);
  for (int i = 0; i < f.n; ++i) {
    for (int c = 0; c < f.c; ++c) {
      for (int x = 0; x < f.w; ++x) {
        g.at(i, c, 0, x) = f.at(i, c, 1, x) - f.at(i, c, 0, x);
        g.at(i, c, f.h - 1, x) = f.at(i, c, f.h - 1, x) - f.at(i, c, f.h - 2, x);
        for (int y = 1; y < f.h - 1; ++y) g.at(i, c, y, x) = 0.5 * (f.at(i, c, y + 1, x) - f.at(i, c, y - 1, x));
      }
    }
  }
  return g;
}

namespace {

// Adjoints of gradient_x / gradient_y on a single plane, accumulated.
void gradient_x_adjoint(const double* g, int h, int w, double* out) {
  for (int y = 0; y < h; ++y) {
    const double* r = g + static_cast<std::size_t>(y) * w;
    double* o = out + static_cast<std::size_t>(y) * w;
    o[1] += r[0];
    o[0] -= r[0];
    o[w - 1] += r[w - 1];
    o[w - 2] -= r[w - 1];
    for (int x = 1; x < w - 1; ++x) {
      o[x + 1] += 0.5 * r[x];
      o[x - 1] -= 0.5 * r[x];
    }
  }
}

void gradient_y_adjoint(const double* g, int h, int w, double* out) {
  for (int x = 0; x < w; ++x) {
    auto at = [&](int y) { return g[static_cast<std::size_t>(y) * w + x]; };
    auto ref = [&](int y) -> double& { return out[static_cast<std::size_t>(y) * w + x]; };
    ref(1) += at(0);
    ref(0) -= at(0);
    ref(h - 1) += at(h - 1);
    ref(h - 2) -= at(h - 1);
    for (int y = 1; y < h - 1; ++y) {
      ref(y + 1) += 0.5 * at(y);
      ref(y - 1) -= 0.5 * at(y);
    }
  }
}

Tensor channel_of(const Tensor& t, int c) {
  Tensor out(t.n, 1, t.h, t.w);
  for (int i = 0; i < t.n; ++i) {
    const double* s = t.channel(i, c);
    std::copy(s, s + t.plane(), out.sample(i));
  }
  return out;
}

}  // namespace

Tensor divergence(const Tensor& uv) {
  if (uv.c != 2) throw DimensionError("divergence: expected a two-channel flow, got " + uv.shape_string());
  Tensor div = gradient_x(channel_of(uv, 0));
  axpy(1.0, gradient_y(channel_of(uv, 1)), div);
  return div;
}

double divergence_loss(const Tensor& pred_uv, const Tensor& true_uv, Tensor* grad) {
  require_same_shape(pred_uv, true_uv, "divergence_loss");
  require_rows(pred_uv, "divergence_loss");
  const Tensor r = divergence(difference(pred_uv, true_uv));
  double s = 0.0;
  for (double v : r.data) s += v * v;
  const double inv_n = 1.0 / pred_uv.n;
  if (grad != nullptr) {
    *grad = Tensor::like(pred_uv);
    for (int i = 0; i < r.n; ++i) {
      std::vector<double> g(r.sample(i), r.sample(i) + r.plane());
      for (double& v : g) v *= 2.0 * inv_n;
      gradient_x_adjoint(g.data(), r.h, r.w, grad->channel(i, 0));
      gradient_y_adjoint(g.data(), r.h, r.w, grad->channel(i, 1));
    }
  }
  return s * inv_n;
}

namespace {

constexpr double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

Tensor sobel(const Tensor& f, const double (&k)[3][3]) {
  Tensor out = Tensor::like(f);
  for (int i = 0; i < f.n; ++i) {
    for (int c = 0; c < f.c; ++c) {
      for (int y = 0; y < f.h; ++y) {
        for (int x = 0; x < f.w; ++x) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              acc += k[dy + 1][dx + 1] * f.at(i, c, clampi(y + dy, 0, f.h - 1), clampi(x + dx, 0, f.w - 1));
            }
          }
          out.at(i, c, y, x) = acc;
        }
      }
    }
  }
  return out;
}

void sobel_adjoint(const Tensor& g, const double (&k)[3][3], Tensor& out) {
  for (int i = 0; i < g.n; ++i) {
    for (int c = 0; c < g.c; ++c) {
      for (int y = 0; y < g.h; ++y) {
        for (int x = 0; x < g.w; ++x) {
          const double v = g.at(i, c, y, x);
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              out.at(i, c, clampi(y + dy, 0, g.h - 1), clampi(x + dx, 0, g.w - 1)) += k[dy + 1][dx + 1] * v;
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor sobel_x(const Tensor& f) { return sobel(f, kSobelX); }
Tensor sobel_y(const Tensor& f) { return sobel(f, kSobelY); }

double sobel_loss(const Tensor& pred, const Tensor& truth, Tensor* grad) {
  require_same_shape(pred, truth, "sobel_loss");
  require_rows(pred, "sobel_loss");
  const Tensor r = difference(pred, truth);
  Tensor gx = sobel_x(r);
  Tensor gy = sobel_y(r);
  double s = 0.0;
  for (std::size_t j = 0; j < gx.size(); ++j) s += std::abs(gx.data[j]) + std::abs(gy.data[j]);
  const double inv_n = 1.0 / pred.n;
  if (grad != nullptr) {
    for (double& v : gx.data) v = sign(v) * inv_n;
    for (double& v : gy.data) v = sign(v) * inv_n;
    *grad = Tensor::like(pred);
    sobel_adjoint(gx, kSobelX, *grad);
    sobel_adjoint(gy, kSobelY, *grad);
  }
  return s * inv_n;
}

Tensor targets_to_flow(const Tensor& t, const FlowScaling& k) {
  if (t.c != 3) throw DimensionError("targets_to_flow: expected [speed, sin, cos] channels");
  Tensor uv(t.n, 2, t.h, t.w);
  for (int i = 0; i < t.n; ++i) {
    const double* sp = t.channel(i, 0);
    const double* sn = t.channel(i, 1);
    const double* cs = t.channel(i, 2);
    double* u = uv.channel(i, 0);
    double* v = uv.channel(i, 1);
    for (std::size_t j = 0; j < t.plane(); ++j) {
      const double speed = k.speed_std * sp[j] + k.speed_mean;
      u[j] = -speed * sn[j];
      v[j] = -speed * cs[j];
    }
  }
  return uv;
}

Tensor flow_vjp(const Tensor& t, const FlowScaling& k, const Tensor& d_flow) {
  if (t.c != 3 || d_flow.c != 2 || d_flow.n != t.n || d_flow.h != t.h || d_flow.w != t.w) {
    throw DimensionError("flow_vjp: shape mismatch");
  }
  Tensor g = Tensor::like(t);
  for (int i = 0; i < t.n; ++i) {
    const double* sp = t.channel(i, 0);
    const double* sn = t.channel(i, 1);
    const double* cs = t.channel(i, 2);
    const double* du = d_flow.channel(i, 0);
    const double* dv = d_flow.channel(i, 1);
    double* gs = g.channel(i, 0);
    double* gn = g.channel(i, 1);
    double* gc = g.channel(i, 2);
    for (std::size_t j = 0; j < t.plane(); ++j) {
      const double speed = k.speed_std * sp[j] + k.speed_mean;
      gs[j] = -k.speed_std * (du[j] * sn[j] + dv[j] * cs[j]);
      gn[j] = -speed * du[j];
      gc[j] = -speed * dv[j];
    }
  }
  return g;
}

LossBreakdown total_loss(const Tensor& pred, const Tensor& truth, const LossWeights& w,
                         const FlowScaling& scaling, Tensor* grad) {
  if (w.dwt < 0.0 || w.divergence < 0.0 || w.sobel < 0.0) throw ValidationError("loss weights must be nonnegative");
  LossBreakdown b;
  Tensor g_l1, g_dwt, g_div, g_sobel;
  const bool want = grad != nullptr;
  b.l1 = l1_loss(pred, truth, want ? &g_l1 : nullptr);
  b.dwt = dwt_loss(pred, truth, want ? &g_dwt : nullptr);
  const Tensor pred_uv = targets_to_flow(pred, scaling);
  b.divergence = divergence_loss(pred_uv, targets_to_flow(truth, scaling), want ? &g_div : nullptr);
  b.sobel = sobel_loss(pred, truth, want ? &g_sobel : nullptr);
  b.total = b.l1 + w.dwt * b.dwt + w.divergence * b.divergence + w.sobel * b.sobel;
  if (want) {
    *grad = std::move(g_l1);
    axpy(w.dwt, g_dwt, *grad);
    axpy(w.divergence, flow_vjp(pred, scaling, g_div), *grad);
    axpy(w.sobel, g_sobel, *grad);
  }
  return b;
}

}  // namespace ccfg
