#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "gtu/correlation.hpp"
#include "gtu/types.hpp"

namespace gtu {

// Continuation values for a batch of states, one state per row.
using BatchFn = std::function<void(const Eigen::MatrixXd&, Eigen::VectorXd&)>;

inline BatchFn pointwise(std::function<double(const Eigen::VectorXd&)> f) {
  return [f = std::move(f)](const Eigen::MatrixXd& pts, Eigen::VectorXd& out) {
    out.resize(pts.rows());
    for (long i = 0; i < pts.rows(); ++i) out[i] = f(pts.row(i).transpose());
  };
}

// The +-1 sign patterns driving one tree step. Full mode enumerates all 2^d
// patterns; subsampled mode holds an antithetic subset (every pattern is
// followed immediately by its negation).
struct BranchSet {
  int dim = 0;
  bool full = true;
  Eigen::MatrixXd signs;  // count x dim

  long count() const { return signs.rows(); }
};

namespace detail {

inline void fill_sign_row(Eigen::MatrixXd& signs, long row, std::uint64_t pattern, int d) {
  for (int i = 0; i < d; ++i) {
    signs(row, i) = (pattern >> i) & 1 ? 1.0 : -1.0;
  }
}

}  // namespace detail

// count == 0 or count == 2^d selects full enumeration (pattern index counts
// in binary, bit i driving asset i). Otherwise count must be even and the set
// is drawn without replacement from the antithetic pairs, deterministically
// from the seed.
inline BranchSet make_branches(int d, long count, std::uint64_t seed = 0) {
  if (d < 1 || d > 62) throw std::invalid_argument("make_branches: dimension out of range");
  const bool has_full = d <= 24;
  const long full_count = has_full ? (1L << d) : -1;

  BranchSet bs;
  bs.dim = d;
  if (count == 0 || count == full_count) {
    if (!has_full) throw std::invalid_argument("make_branches: full enumeration too large");
    bs.full = true;
    bs.signs.resize(full_count, d);
    for (long m = 0; m < full_count; ++m) {
      detail::fill_sign_row(bs.signs, m, static_cast<std::uint64_t>(m), d);
    }
    return bs;
  }

  if (count < 2 || count % 2 != 0) {
    throw std::invalid_argument("make_branches: subsample size must be even and >= 2");
  }
  const std::uint64_t half_space = 1ULL << (d - 1);
  if (static_cast<std::uint64_t>(count) / 2 > half_space) {
    throw std::invalid_argument("make_branches: subsample size exceeds 2^d");
  }

  bs.full = false;
  bs.signs.resize(count, d);
  std::mt19937_64 rng(seed);
  const std::uint64_t mask = half_space - 1;
  std::unordered_set<std::uint64_t> seen;
  const std::uint64_t all = (1ULL << d) - 1;
  long row = 0;
  while (row < count) {
    std::uint64_t m = rng() & mask;  // canonical pair member: top bit clear
    if (!seen.insert(m).second) continue;
    detail::fill_sign_row(bs.signs, row++, m, d);
    detail::fill_sign_row(bs.signs, row++, ~m & all, d);
  }
  return bs;
}

// Scratch buffers for repeated one-step evaluations at a fixed branch count.
struct StepWorkspace {
  Eigen::MatrixXd mixed;   // signs * sqrt(gamma)^T
  Eigen::MatrixXd points;  // branch spot vectors
  Eigen::VectorXd values;
};

// Discounted equal-weight expectation of the continuation over one tree step:
// each branch moves the spot vector by exp((r - eta - sigma^2/2) dt +
// sigma sqrt(dt) * (sqrt(gamma) g)) with g the branch's sign pattern. The
// correlation matrix must be PSD (within 1e-8); indefinite input throws.
inline double step_expectation(const Eigen::VectorXd& spot, const UvmPoint& c, double dt,
                               double rate, const Eigen::VectorXd& dividend,
                               const BranchSet& branches, const BatchFn& continuation,
                               StepWorkspace* ws = nullptr) {
  const int d = static_cast<int>(spot.size());
  if (branches.dim != d || c.sigma.size() != d || dividend.size() != d ||
      c.rho.size() != pair_count(d)) {
    throw std::invalid_argument("step_expectation: dimension mismatch");
  }
  if (dt <= 0.0) throw std::invalid_argument("step_expectation: dt must be positive");
  if ((c.sigma.array() <= 0.0).any()) {
    throw std::invalid_argument("step_expectation: volatilities must be positive");
  }

  Eigen::MatrixXd root = sqrt_gamma(build_gamma(c.rho, d), 1e-8);

  StepWorkspace local;
  StepWorkspace& w = ws ? *ws : local;
  const double sqdt = std::sqrt(dt);
  w.mixed.noalias() = branches.signs * root.transpose();

  Eigen::ArrayXd drift =
      (rate - dividend.array() - 0.5 * c.sigma.array().square()) * dt;
  Eigen::ArrayXd scale = c.sigma.array() * sqdt;
  w.points = (((w.mixed.array().rowwise() * scale.transpose()).rowwise() +
               drift.transpose())
                  .exp()
                  .rowwise() *
              spot.transpose().array())
                 .matrix();

  continuation(w.points, w.values);
  if (w.values.size() != branches.count()) {
    throw std::runtime_error("step_expectation: continuation returned wrong batch size");
  }
  return std::exp(-rate * dt) * w.values.mean();
}

}  // namespace gtu
