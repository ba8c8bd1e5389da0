#include "gazealign/kernels.hpp"

#include <cmath>

namespace gazealign::kern {
namespace {

double sum_impl(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot_impl(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_sq_diff_impl(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

double max_value_impl(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void scale_impl(double* x, std::size_t n, double a) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void axpy_impl(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void mean2_impl(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (x[i] + y[i]);
}

double exp_shift_sum_impl(const double* x, double* out, std::size_t n,
                          double shift) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - shift);
    acc += out[i];
  }
  return acc;
}

double kl_sum_impl(const double* p, const double* q, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) acc += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return acc;
}

double xlogx_sum_impl(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) acc += x[i] * std::log(x[i]);
  }
  return acc;
}

void centered_moments_impl(const double* x, const double* y, std::size_t n,
                           double mean_x, double mean_y, double out[3]) {
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  out[0] = sxx;
  out[1] = syy;
  out[2] = sxy;
}

double index_weighted_sum_impl(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(i) * x[i];
  return acc;
}

void add_gaussian_row_impl(double* row, std::size_t n, double x0,
                           double inv_two_sigma_sq, double amp) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - x0;
    row[i] += amp * std::exp(-d * d * inv_two_sigma_sq);
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend table = {
      "scalar",
      sum_impl,
      dot_impl,
      sum_sq_diff_impl,
      max_value_impl,
      scale_impl,
      axpy_impl,
      mean2_impl,
      exp_shift_sum_impl,
      kl_sum_impl,
      xlogx_sum_impl,
      centered_moments_impl,
      index_weighted_sum_impl,
      add_gaussian_row_impl,
  };
  return table;
}

}  // namespace gazealign::kern
