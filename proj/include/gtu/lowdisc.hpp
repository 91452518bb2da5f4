#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gtu {

// Standard normal CDF through erfc, accurate in both tails.
inline double norm_cdf(double z) {
  return 0.5 * std::erfc(-z * M_SQRT1_2);
}

inline double norm_pdf(double z) {
  static const double kInvSqrt2Pi = 0.3989422804014326779;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

// Quantile of the standard normal. Rational initial guess (Acklam) plus one
// Halley correction against norm_cdf, giving |norm_cdf(z) - u| well below 1e-9.
inline double inv_norm_cdf(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::domain_error("inv_norm_cdf: argument must lie strictly in (0,1)");
  }

  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  static const double kLow = 0.02425;

  double x;
  if (u < kLow) {
    double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - kLow) {
    double q = u - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  double err = norm_cdf(x) - u;
  double step = err / norm_pdf(x);
  x -= step / (1.0 + 0.5 * x * step);
  return x;
}

inline std::vector<std::uint32_t> first_primes(int count) {
  std::vector<std::uint32_t> primes;
  primes.reserve(count);
  for (std::uint32_t n = 2; static_cast<int>(primes.size()) < count; ++n) {
    bool composite = false;
    for (std::uint32_t p : primes) {
      if (p * p > n) break;
      if (n % p == 0) { composite = true; break; }
    }
    if (!composite) primes.push_back(n);
  }
  return primes;
}

// Van der Corput radical inverse: reflect the base-b digits of n about the
// radix point. Never returns 0 or 1 for n >= 1.
inline double radical_inverse(std::uint64_t n, std::uint32_t base) {
  double inv = 1.0 / base;
  double f = inv;
  double value = 0.0;
  while (n > 0) {
    value += f * static_cast<double>(n % base);
    n /= base;
    f *= inv;
  }
  return value;
}

// Halton sequence over (0,1)^dim, one prime base per axis, starting at index 1
// so no component is ever exactly 0.
struct HaltonState {
  int dim = 0;
  std::uint64_t index = 1;
  std::vector<std::uint32_t> bases;

  explicit HaltonState(int dimension) : dim(dimension), bases(first_primes(dimension)) {
    if (dimension < 1) throw std::invalid_argument("HaltonState: dimension must be >= 1");
  }
};

inline Eigen::VectorXd halton_next(HaltonState& state) {
  Eigen::VectorXd point(state.dim);
  for (int i = 0; i < state.dim; ++i) {
    point[i] = radical_inverse(state.index, state.bases[i]);
  }
  ++state.index;
  return point;
}

}  // namespace gtu
