#pragma once

#include <cstddef>

namespace gazealign::kern {

// Dense double-precision primitives shared by the map/loss/metric code.
// Every entry has a scalar reference implementation; the AVX2 table must
// agree with it within the tolerances pinned in tests/test_kernels.cpp.
// All pointers are to contiguous arrays of length n unless noted.
struct Backend {
  const char* name;

  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum of (x[i] - y[i])^2
  double (*sum_sq_diff)(const double* x, const double* y, std::size_t n);
  // n >= 1
  double (*max_value)(const double* x, std::size_t n);
  // x[i] *= a
  void (*scale)(double* x, std::size_t n, double a);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out[i] = (x[i] + y[i]) / 2
  void (*mean2)(const double* x, const double* y, double* out, std::size_t n);
  // out[i] = exp(x[i] - shift); returns sum of out
  double (*exp_shift_sum)(const double* x, double* out, std::size_t n,
                          double shift);
  // sum over i with p[i] > 0 of p[i] * log(p[i] / q[i])
  double (*kl_sum)(const double* p, const double* q, std::size_t n);
  // sum over i with x[i] > 0 of x[i] * log(x[i])
  double (*xlogx_sum)(const double* x, std::size_t n);
  // out = {sum (x-mx)^2, sum (y-my)^2, sum (x-mx)*(y-my)}. Centered so
  // constant inputs give ~0 instead of the raw-moment cancellation residue.
  void (*centered_moments)(const double* x, const double* y, std::size_t n,
                           double mean_x, double mean_y, double out[3]);
  // sum of i * x[i]
  double (*index_weighted_sum)(const double* x, std::size_t n);
  // row[j] += amp * exp(-(j - x0)^2 * inv_two_sigma_sq)
  void (*add_gaussian_row)(double* row, std::size_t n, double x0,
                           double inv_two_sigma_sq, double amp);
};

const Backend& scalar_backend();

// True when the running CPU supports the AVX2 table built into this binary.
bool avx2_supported();
// Valid only when avx2_supported(); otherwise returns the scalar table.
const Backend& avx2_backend();

// Runtime-selected table. Honors GAZE_ALIGN_KERNELS=scalar and
// force_backend(); defaults to the widest supported variant.
const Backend& active();

// "scalar", "avx2", or nullptr to reset to automatic selection.
void force_backend(const char* name);

}  // namespace gazealign::kern
