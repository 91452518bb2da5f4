#pragma once

#include <Eigen/Dense>
#include <omp.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gtu/correlation.hpp"
#include "gtu/gpr.hpp"
#include "gtu/lowdisc.hpp"
#include "gtu/payoffs.hpp"
#include "gtu/sqp.hpp"
#include "gtu/treestep.hpp"
#include "gtu/types.hpp"

namespace gtu {

enum class KernelChoice { Auto, Matern32, Matern32Ard };

struct AlgoParams {
  int time_steps = 16;    // backward induction steps
  int grid_points = 125;  // states per time slice
  long branch_count = 0;  // tree branches per step; 0 = all 2^d sign patterns
  std::uint64_t seed = 12345;
  KernelChoice kernel = KernelChoice::Auto;
  int threads = 0;  // grid-loop threads; 0 = runtime default
  SqpConfig sqp;
  int gpr_max_iters = 40;

  void validate() const {
    if (time_steps < 1) throw std::invalid_argument("AlgoParams: need at least one time step");
    if (grid_points < 1) throw std::invalid_argument("AlgoParams: need at least one grid point");
    if (branch_count < 0) throw std::invalid_argument("AlgoParams: branch count must be >= 0");
  }
};

struct StepReport {
  int step = 0;
  int points = 0;
  double seconds = 0.0;
  double mean_sqp_iterations = 0.0;
  int gpr_input_dim = 0;
  double gpr_signal_std = 0.0;
  double gpr_noise_std = 0.0;
  double gpr_lml = 0.0;
  std::vector<double> gpr_length_scales;
};

struct PriceReport {
  double value = 0.0;
  double seconds = 0.0;
  UvmPoint root_point;  // maximizing parameters of the t=0 subproblem
  int root_iterations = 0;
  std::vector<StepReport> steps;
};

// Deterministic stream splitting: every (seed, index) pair gets its own
// uncorrelated 64-bit value, so grid points can be processed in any order.
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Spot grid for one time slice: quasi-random Gaussian displacements pushed
// through the midpoint lognormal map. Consumes `count` points of the
// sequence.
inline Eigen::MatrixXd build_grid(const ModelSpec& m, double t, int count, HaltonState& halton) {
  if (t <= 0.0) throw std::invalid_argument("build_grid: need t > 0");
  if (halton.dim != m.d) throw std::invalid_argument("build_grid: sequence dimension mismatch");
  Eigen::MatrixXd root = sqrt_gamma(m.gamma_avg());
  Eigen::ArrayXd sig = m.sigma_avg().array();
  Eigen::ArrayXd drift = (m.r - m.eta.array() - 0.5 * sig.square()) * t;
  Eigen::ArrayXd scale = sig * std::sqrt(t);

  Eigen::MatrixXd grid(count, m.d);
  Eigen::VectorXd z(m.d);
  for (int p = 0; p < count; ++p) {
    Eigen::VectorXd u = halton_next(halton);
    for (int i = 0; i < m.d; ++i) z[i] = inv_norm_cdf(u[i]);
    grid.row(p) =
        (m.s0.array() * (drift + scale * (root * z).array()).exp()).transpose();
  }
  return grid;
}

// States for the path-dependent payoff, simulated at the midpoint volatility.
// Slice n (1..steps-1) holds one row per path: (spot, accumulated squared
// fixing log-returns) when t_n is a fixing date, plus the spot at the last
// fixing date otherwise.
struct PathGrid {
  std::vector<Eigen::MatrixXd> slices;
};

inline PathGrid mc_grid(const ModelSpec& m, const PayoffSpec& payoff, int steps, int count,
                        std::uint64_t seed) {
  m.validate();
  payoff.validate(m);
  if (!payoff.path_dependent()) throw std::invalid_argument("mc_grid: payoff is not path dependent");
  if (steps % payoff.monitor_count != 0) {
    throw std::invalid_argument("mc_grid: steps must be a multiple of the fixing count");
  }
  const int spm = steps / payoff.monitor_count;
  const double dt = m.T / steps;

  PathGrid pg;
  pg.slices.resize(steps);
  for (int n = 1; n < steps; ++n) {
    pg.slices[n].resize(count, n % spm == 0 ? 2 : 3);
  }

  std::mt19937_64 rng(seed);
  auto gauss = [&rng]() {
    double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
    return inv_norm_cdf(u);
  };
  auto uniform = [&rng]() { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53; };
  // each step draws its own volatility from the admissible band, so the state
  // cloud covers the paths the worst-case controls can produce, not just the
  // band midpoint's reachable set
  for (int p = 0; p < count; ++p) {
    double spot = m.s0[0];
    double acc = 0.0;
    double last_fix = spot;
    for (int n = 1; n <= steps; ++n) {
      const double sig = m.sigma_min[0] + (m.sigma_max[0] - m.sigma_min[0]) * uniform();
      const double drift = (m.r - m.eta[0] - 0.5 * sig * sig) * dt;
      const double vol = sig * std::sqrt(dt);
      spot *= std::exp(drift + vol * gauss());
      if (n % spm == 0) {
        double lr = std::log(spot / last_fix);
        acc += lr * lr;
        last_fix = spot;
      }
      if (n < steps) {
        if (n % spm == 0) {
          pg.slices[n].row(p) << spot, acc;
        } else {
          pg.slices[n].row(p) << spot, acc, last_fix;
        }
      }
    }
  }
  return pg;
}

// Worst-case price by backward induction: per-slice state grids, a
// maximization over the admissible parameter box at every state (one-step
// tree expectation of the next slice's value surface), and a regression fit
// that carries the slice values backward.
inline PriceReport price(const ModelSpec& model, const PayoffSpec& payoff, const AlgoParams& algo) {
  model.validate();
  payoff.validate(model);
  algo.validate();

  const int d = model.d;
  const int np = pair_count(d);
  const int N = algo.time_steps;
  const int P = algo.grid_points;
  const double dt = model.T / N;
  const double sqdt = std::sqrt(dt);
  const bool sharpe = payoff.path_dependent();
  const int nthreads = algo.threads > 0 ? algo.threads : omp_get_max_threads();
  if (sharpe && N % payoff.monitor_count != 0) {
    throw std::invalid_argument("price: time steps must be a multiple of the fixing count");
  }
  const int spm = sharpe ? N / payoff.monitor_count : 0;

  const KernelKind kind = algo.kernel == KernelChoice::Auto
                              ? (sharpe ? KernelKind::Matern32Ard : KernelKind::Matern32)
                          : algo.kernel == KernelChoice::Matern32 ? KernelKind::Matern32
                                                                  : KernelKind::Matern32Ard;

  // Start points for the per-state maximization: box midpoint (correlations
  // repaired onto the PSD cone if needed), plus a high-volatility restart
  // while the parameter count stays small.
  ParameterBox box = model.box();
  Eigen::VectorXd rho_start = model.rho_avg();
  if (np > 0 && !is_psd(build_gamma(rho_start, d))) {
    rho_start = gamma_to_rho(nearest_psd(build_gamma(rho_start, d)))
                    .cwiseMax(box.rho_min)
                    .cwiseMin(box.rho_max);
  }
  UvmPoint start_mid{model.sigma_avg(), rho_start};
  UvmPoint start_high{model.sigma_max, rho_start};
  const bool use_restart = d * (d + 1) / 2 <= 6;

  // The objective is typically near-multilinear in (sigma_i^2, rho_ij), so a
  // coordinate-wise sign probe around the midpoint predicts the best box
  // vertex; starting there catches maxima the midpoint descent misses.
  auto vertex_start = [&, d](const std::function<double(const UvmPoint&)>& obj) {
    UvmPoint v = start_mid;
    for (int i = 0; i < d; ++i) {
      if (model.sigma_min[i] == model.sigma_max[i]) continue;
      UvmPoint up = start_mid, dn = start_mid;
      const double delta = 0.25 * (model.sigma_max[i] - model.sigma_min[i]);
      up.sigma[i] = std::min(model.sigma_max[i], start_mid.sigma[i] + delta);
      dn.sigma[i] = std::max(model.sigma_min[i], start_mid.sigma[i] - delta);
      v.sigma[i] = obj(up) >= obj(dn) ? model.sigma_max[i] : model.sigma_min[i];
    }
    for (int j = 0; j < start_mid.rho.size(); ++j) {
      if (model.rho_min[j] == model.rho_max[j]) continue;
      UvmPoint up = start_mid, dn = start_mid;
      const double delta = 0.25 * (model.rho_max[j] - model.rho_min[j]);
      up.rho[j] = std::min(model.rho_max[j], start_mid.rho[j] + delta);
      dn.rho[j] = std::max(model.rho_min[j], start_mid.rho[j] - delta);
      v.rho[j] = obj(up) >= obj(dn) ? model.rho_max[j] : model.rho_min[j];
    }
    Eigen::MatrixXd gamma = build_gamma(v.rho, d);
    if (!is_psd(gamma)) {
      v.rho = gamma_to_rho(nearest_psd(gamma)).cwiseMax(model.rho_min).cwiseMin(model.rho_max);
    }
    return v;
  };

  auto solve_point = [&](const std::function<double(const UvmPoint&)>& obj) {
    SqpResult best = maximize(obj, box, start_mid, algo.sqp);
    if (use_restart) {
      int total = best.iterations;
      for (const UvmPoint& start : {start_high, vertex_start(obj)}) {
        SqpResult other = maximize(obj, box, start, algo.sqp);
        total += other.iterations;
        if (other.value > best.value) {
          best.value = other.value;
          best.point = other.point;
        }
      }
      best.iterations = total;
    }
    return best;
  };

  // Continuation for the slice currently being solved; starts as the payoff
  // and becomes the fitted value surface of the slice just finished.
  GprModel surface;
  BatchFn cont;
  auto payoff_cont = [&](const Eigen::MatrixXd& pts, Eigen::VectorXd& out) {
    out.resize(pts.rows());
    for (long i = 0; i < pts.rows(); ++i) {
      out[i] = payoff_eval(payoff, pts.row(i).transpose(), model.T);
    }
  };
  auto surface_cont = [&](const Eigen::MatrixXd& pts, Eigen::VectorXd& out) {
    surface.predict_mean_batch(pts, out);
    out = out.cwiseMax(0.0);  // value surfaces of nonnegative payoffs stay nonnegative
  };
  cont = payoff_cont;

  // Shared branch set when every state uses full enumeration; per-state
  // seeded draws otherwise.
  const bool full_branches = !sharpe && (algo.branch_count == 0 || (d <= 24 && algo.branch_count == (1L << d)));
  BranchSet shared_branches;
  if (full_branches) {
    shared_branches = make_branches(d, 0);
  } else if (!sharpe) {
    make_branches(d, algo.branch_count, 0);  // reject bad counts before the parallel loop
  }

  auto basket_objective = [&](const Eigen::VectorXd& state, const BranchSet& branches,
                              StepWorkspace* ws) {
    const BranchSet* br = &branches;
    return [&, state, br, ws](const UvmPoint& c) -> double {
      try {
        return step_expectation(state, c, dt, model.r, model.eta, *br, cont, ws);
      } catch (const std::domain_error&) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    };
  };

  // Two-branch move of the path state (spot, accumulated fixing variance
  // [, spot at last fixing]); at fixing dates the running return folds into
  // the accumulator and the state drops back to two components.
  auto sharpe_objective = [&](const Eigen::VectorXd& state, bool next_is_fixing) {
    return [&, state, next_is_fixing](const UvmPoint& c) -> double {
      const double sig = c.sigma[0];
      const double spot = state[0];
      const double acc = state[1];
      const double last_fix = state.size() == 3 ? state[2] : state[0];
      const double base = (model.r - model.eta[0] - 0.5 * sig * sig) * dt;
      const double up = spot * std::exp(base + sig * sqdt);
      const double dn = spot * std::exp(base - sig * sqdt);
      Eigen::MatrixXd pts;
      if (next_is_fixing) {
        const double lu = std::log(up / last_fix);
        const double ld = std::log(dn / last_fix);
        pts.resize(2, 2);
        pts << up, acc + lu * lu, dn, acc + ld * ld;
      } else {
        pts.resize(2, 3);
        pts << up, acc, last_fix, dn, acc, last_fix;
      }
      Eigen::VectorXd vals;
      cont(pts, vals);
      return std::exp(-model.r * dt) * 0.5 * (vals[0] + vals[1]);
    };
  };

  PathGrid pg;
  if (sharpe) {
    pg = mc_grid(model, payoff, N, P, mix64(algo.seed, 0x6d63677269646d63ULL));
  }

  PriceReport report;
  std::optional<std::pair<KernelSpec, double>> warm_even, warm_odd;
  const auto t_begin = std::chrono::steady_clock::now();

  for (int n = N - 1; n >= 1; --n) {
    const auto t_slice = std::chrono::steady_clock::now();
    // every slice reuses the same quantile points, so consecutive grids are
    // nested in time and one-step branch queries stay near fitted data; the
    // grid time carries a T/4 pad because early-time clouds are otherwise
    // narrower than the one-step branch spread, and the regression bleeds
    // value wherever branches land beyond the fitted points
    HaltonState halton(d);
    Eigen::MatrixXd grid =
        sharpe ? std::move(pg.slices[n]) : build_grid(model, n * dt + 0.25 * model.T, P, halton);
    const bool next_is_fixing = sharpe && ((n + 1) % spm == 0);

    Eigen::VectorXd values(P);
    std::vector<int> iters(P, 0);
    std::atomic<bool> failed{false};
    std::string fail_what;
#pragma omp parallel num_threads(nthreads)
    {
      StepWorkspace ws;
#pragma omp for schedule(dynamic)
      for (int p = 0; p < P; ++p) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
          SqpResult res;
          if (sharpe) {
            res = solve_point(sharpe_objective(grid.row(p).transpose(), next_is_fixing));
          } else if (full_branches) {
            res = solve_point(basket_objective(grid.row(p).transpose(), shared_branches, &ws));
          } else {
            BranchSet local = make_branches(d, algo.branch_count, mix64(mix64(algo.seed, n), p));
            res = solve_point(basket_objective(grid.row(p).transpose(), local, &ws));
          }
          values[p] = res.value;
          iters[p] = res.iterations;
        } catch (const std::exception& e) {
          // exceptions must not escape the parallel region
          bool expected = false;
          if (failed.compare_exchange_strong(expected, true)) {
            fail_what = "point " + std::to_string(p) + ": " + e.what();
          }
        }
      }
    }
    if (failed.load()) {
      throw std::runtime_error("price: state subproblem failed at step " + std::to_string(n) +
                               ", " + fail_what);
    }

    GprFitOptions fit_opts;
    fit_opts.max_iters = algo.gpr_max_iters;
    auto& warm = (sharpe && grid.cols() == 3) ? warm_odd : warm_even;
    fit_opts.warm = warm;
    surface = GprModel::fit(grid, values, kind, fit_opts);
    warm = {{surface.kernel(), surface.noise_std()}};
    cont = surface_cont;

    StepReport sr;
    sr.step = n;
    sr.points = P;
    sr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_slice).count();
    double isum = 0.0;
    for (int v : iters) isum += v;
    sr.mean_sqp_iterations = isum / P;
    sr.gpr_input_dim = static_cast<int>(surface.input_dim());
    sr.gpr_signal_std = surface.kernel().signal_std;
    sr.gpr_noise_std = surface.noise_std();
    sr.gpr_lml = surface.log_marginal_likelihood();
    sr.gpr_length_scales.assign(surface.kernel().length_scales.data(),
                                surface.kernel().length_scales.data() +
                                    surface.kernel().length_scales.size());
    report.steps.push_back(std::move(sr));
  }

  // Root subproblem at the known time-zero state.
  const auto t_root = std::chrono::steady_clock::now();
  SqpResult root;
  if (sharpe) {
    Eigen::VectorXd state(2);
    state << model.s0[0], 0.0;
    root = solve_point(sharpe_objective(state, 1 % spm == 0));
  } else if (full_branches) {
    root = solve_point(basket_objective(model.s0, shared_branches, nullptr));
  } else {
    BranchSet local = make_branches(d, algo.branch_count, mix64(mix64(algo.seed, 0), 0));
    root = solve_point(basket_objective(model.s0, local, nullptr));
  }

  StepReport sr;
  sr.step = 0;
  sr.points = 1;
  sr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_root).count();
  sr.mean_sqp_iterations = root.iterations;
  report.steps.push_back(std::move(sr));

  report.value = root.value;
  report.root_point = root.point;
  report.root_iterations = root.iterations;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return report;
}

}  // namespace gtu
