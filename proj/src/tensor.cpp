#include "ccfg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ccfg {

const char* category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * x.data[i];
}

Tensor lincomb(double a, const Tensor& x, double b, const Tensor& y) {
  require_same_shape(x, y, "lincomb");
  Tensor out = Tensor::like(x);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a * x.data[i] + b * y.data[i];
  return out;
}

void scale(Tensor& x, double alpha) {
  for (double& v : x.data) v *= alpha;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

Tensor slice_rows(const Tensor& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.n) {
    throw DimensionError("slice_rows: rows out of range");
  }
  Tensor out(count, t.c, t.h, t.w);
  std::copy_n(t.sample(first), out.size(), out.data.begin());
  return out;
}

void assign_rows(Tensor& dst, int first, const Tensor& src) {
  if (src.c != dst.c || src.h != dst.h || src.w != dst.w || first < 0 || first + src.n > dst.n) {
    throw DimensionError("assign_rows: incompatible shapes");
  }
  std::copy(src.data.begin(), src.data.end(), dst.sample(first));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw DimensionError("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy_n(a.sample(i), a.sample_size(), out.sample(i));
    std::copy_n(b.sample(i), b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

}  // namespace ccfg
