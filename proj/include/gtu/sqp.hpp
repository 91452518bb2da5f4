#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gtu/correlation.hpp"
#include "gtu/types.hpp"

namespace gtu {

struct SqpConfig {
  double tol_step = 1e-6;
  double tol_constraint = 1e-10;
  int max_iters = 100;
  double fd_step = 1e-5;
};

struct SqpResult {
  UvmPoint point;
  double value = 0.0;
  int iterations = 0;
  int objective_evals = 0;
  bool converged = false;
};

namespace detail {

// Box-constrained QP with at most one extra linear inequality:
//   minimize 1/2 p'Bp + g'p  s.t.  lo <= p <= hi,  a'p <= b.
// Primal active-set method; returns the final iterate even if the working-set
// loop hits its cap (the caller's line search absorbs imperfect directions).
class SmallQp {
 public:
  static Eigen::VectorXd solve(const Eigen::MatrixXd& B, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                               const Eigen::VectorXd* a, double b, double* lambda_out) {
    const int n = static_cast<int>(g.size());
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    std::vector<int> bound(n, 0);  // -1 at lower, +1 at upper, 0 free
    bool general_active = false;
    if (lambda_out) *lambda_out = 0.0;
    const double feas_b = (a != nullptr) ? std::max(b, 0.0) : 0.0;

    for (int sweep = 0; sweep < 20 + 6 * n; ++sweep) {
      // Equality-constrained solve on the current working set.
      std::vector<int> free;
      for (int i = 0; i < n; ++i) {
        if (bound[i] == 0) free.push_back(i);
      }
      Eigen::VectorXd target = p;
      double lambda = 0.0;
      if (!free.empty()) {
        const int nf = static_cast<int>(free.size());
        Eigen::MatrixXd bff(nf, nf);
        Eigen::VectorXd rhs(nf);
        for (int r = 0; r < nf; ++r) {
          for (int c = 0; c < nf; ++c) bff(r, c) = B(free[r], free[c]);
          double fixed = 0.0;
          for (int i = 0; i < n; ++i) {
            if (bound[i] != 0) fixed += B(free[r], i) * p[i];
          }
          rhs[r] = -g[free[r]] - fixed;
        }
        Eigen::VectorXd pf;
        if (general_active) {
          Eigen::VectorXd af(nf);
          for (int r = 0; r < nf; ++r) af[r] = (*a)[free[r]];
          if (af.lpNorm<Eigen::Infinity>() < 1e-12) {
            general_active = false;  // constraint no longer touches free dims
            continue;
          }
          double cb = feas_b;
          for (int i = 0; i < n; ++i) {
            if (bound[i] != 0) cb -= (*a)[i] * p[i];
          }
          Eigen::MatrixXd kkt(nf + 1, nf + 1);
          kkt.setZero();
          kkt.topLeftCorner(nf, nf) = bff;
          kkt.topRightCorner(nf, 1) = af;
          kkt.bottomLeftCorner(1, nf) = af.transpose();
          Eigen::VectorXd krhs(nf + 1);
          krhs.head(nf) = rhs;
          krhs[nf] = cb;
          Eigen::VectorXd sol = kkt.fullPivLu().solve(krhs);
          pf = sol.head(nf);
          lambda = sol[nf];
        } else {
          pf = bff.ldlt().solve(rhs);
        }
        for (int r = 0; r < nf; ++r) target[free[r]] = pf[r];
      }

      Eigen::VectorXd dir = target - p;
      if (dir.lpNorm<Eigen::Infinity>() < 1e-13) {
        // Optimal for the working set; check multiplier signs.
        Eigen::VectorXd grad_q = B * p + g;
        if (general_active) grad_q += lambda * (*a);
        int worst = -1;
        double most_negative = -1e-11;
        for (int i = 0; i < n; ++i) {
          if (bound[i] == 0) continue;
          double mult = bound[i] < 0 ? grad_q[i] : -grad_q[i];
          if (mult < most_negative) {
            most_negative = mult;
            worst = i;
          }
        }
        bool drop_general = general_active && lambda < most_negative && lambda < -1e-11;
        if (drop_general) {
          general_active = false;
          continue;
        }
        if (worst >= 0) {
          bound[worst] = 0;
          continue;
        }
        if (lambda_out && general_active) *lambda_out = lambda;
        return p;
      }

      // Step toward the subproblem solution, stopping at the first inactive
      // constraint that blocks.
      double tau = 1.0;
      int block = -1;
      int block_kind = 0;
      for (int i = 0; i < n; ++i) {
        if (bound[i] != 0 || dir[i] == 0.0) continue;
        double limit = dir[i] < 0 ? (lo[i] - p[i]) / dir[i] : (hi[i] - p[i]) / dir[i];
        if (limit < tau) {
          tau = limit;
          block = i;
          block_kind = dir[i] < 0 ? -1 : +1;
        }
      }
      if (a != nullptr && !general_active) {
        double ad = a->dot(dir);
        if (ad > 1e-14) {
          double limit = (feas_b - a->dot(p)) / ad;
          if (limit < tau) {
            tau = limit;
            block = -2;
          }
        }
      }
      tau = std::max(tau, 0.0);
      p += tau * dir;
      if (block == -2) {
        general_active = true;
      } else if (block >= 0) {
        bound[block] = block_kind;
        p[block] = block_kind < 0 ? lo[block] : hi[block];
      } else {
        if (lambda_out && general_active) *lambda_out = lambda;
        return p;  // full step, optimum of working set reached next sweep
      }
    }
    return p;
  }
};

}  // namespace detail

// Maximizes the objective over the box, keeping the correlation matrix PSD
// (smallest eigenvalue >= -1e-8 throughout, via a linearized eigenvalue
// constraint in the quadratic subproblem and rejection in the line search).
// The objective may return NaN to flag an unevaluable probe; such probes fall
// back to one-sided differences. Bounds with lo == hi freeze that coordinate.
inline SqpResult maximize(const std::function<double(const UvmPoint&)>& objective,
                          const ParameterBox& box, const UvmPoint& start,
                          const SqpConfig& cfg = {}) {
  const int d = static_cast<int>(box.sigma_min.size());
  const int np = static_cast<int>(box.rho_min.size());
  if (start.sigma.size() != d || start.rho.size() != np || np != pair_count(d)) {
    throw std::invalid_argument("sqp::maximize: start/box dimension mismatch");
  }
  if ((box.sigma_min.array() > box.sigma_max.array()).any() ||
      (box.rho_min.array() > box.rho_max.array()).any()) {
    throw std::invalid_argument("sqp::maximize: empty box");
  }

  Eigen::VectorXd lo(d + np), hi(d + np), full(d + np);
  lo << box.sigma_min, box.rho_min;
  hi << box.sigma_max, box.rho_max;
  full << start.sigma, start.rho;
  full = full.cwiseMax(lo).cwiseMin(hi);

  std::vector<int> free;
  for (int i = 0; i < d + np; ++i) {
    if (hi[i] - lo[i] > 1e-14) free.push_back(i);
  }
  const int n = static_cast<int>(free.size());

  UvmPoint probe;
  probe.sigma.resize(d);
  probe.rho.resize(np);
  int evals = 0;
  auto eval_full = [&](const Eigen::VectorXd& v) {
    probe.sigma = v.head(d);
    probe.rho = v.tail(np);
    ++evals;
    return objective(probe);
  };

  // Smallest eigenvalue of the correlation matrix and its gradient with
  // respect to the flattened correlations (2 v_i v_j per pair).
  auto eig_min = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad_rho) {
    if (np == 0) {
      if (grad_rho) grad_rho->resize(0);
      return 1.0;
    }
    Eigen::MatrixXd gamma = build_gamma(v.tail(np), d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma);
    int argmin = 0;
    es.eigenvalues().minCoeff(&argmin);
    if (grad_rho) {
      grad_rho->resize(np);
      Eigen::VectorXd vec = es.eigenvectors().col(argmin);
      for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
          (*grad_rho)[pair_index(i, j, d)] = 2.0 * vec[i] * vec[j];
        }
      }
    }
    return es.eigenvalues()[argmin];
  };

  const double kFeasTol = 1e-8;
  if (eig_min(full, nullptr) < -kFeasTol) {
    throw std::invalid_argument("sqp::maximize: start correlation is not PSD");
  }

  SqpResult result;
  double f0 = eval_full(full);
  if (std::isnan(f0)) throw std::invalid_argument("sqp::maximize: objective undefined at start");
  result.point.sigma = full.head(d);
  result.point.rho = full.tail(np);
  result.value = f0;

  if (n == 0) {
    result.converged = true;
    result.objective_evals = evals;
    return result;
  }

  auto record_best = [&](const Eigen::VectorXd& v, double fval) {
    if (fval > result.value) {
      result.value = fval;
      result.point.sigma = v.head(d);
      result.point.rho = v.tail(np);
    }
  };

  // Central differences on the free coordinates, one-sided next to
  // unevaluable probes.
  auto gradient = [&](const Eigen::VectorXd& v, double fv) {
    Eigen::VectorXd g(n);
    Eigen::VectorXd w = v;
    for (int k = 0; k < n; ++k) {
      int i = free[k];
      double h = cfg.fd_step * std::max(1.0, std::abs(v[i]));
      w[i] = v[i] + h;
      double fp = eval_full(w);
      w[i] = v[i] - h;
      double fm = eval_full(w);
      w[i] = v[i];
      if (!std::isnan(fp) && !std::isnan(fm)) {
        g[k] = (fp - fm) / (2.0 * h);
      } else if (!std::isnan(fm)) {
        g[k] = (fv - fm) / h;
      } else if (!std::isnan(fp)) {
        g[k] = (fp - fv) / h;
      } else {
        g[k] = 0.0;
      }
    }
    return g;
  };

  Eigen::VectorXd z = full;
  double fz = f0;
  Eigen::MatrixXd bmat = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad = gradient(z, fz);
  bool have_rho_free = false;
  for (int k = 0; k < n; ++k) {
    if (free[k] >= d) have_rho_free = true;
  }

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    result.iterations = iter + 1;

    Eigen::VectorXd qlo(n), qhi(n);
    for (int k = 0; k < n; ++k) {
      qlo[k] = lo[free[k]] - z[free[k]];
      qhi[k] = hi[free[k]] - z[free[k]];
    }

    Eigen::VectorXd acon;
    double brhs = 0.0;
    bool use_con = false;
    double lam_min = 1.0;
    if (have_rho_free) {
      Eigen::VectorXd grad_rho;
      lam_min = eig_min(z, &grad_rho);
      acon.setZero(n);
      for (int k = 0; k < n; ++k) {
        if (free[k] >= d) acon[k] = -grad_rho[free[k] - d];
      }
      brhs = lam_min;
      use_con = acon.lpNorm<Eigen::Infinity>() > 1e-12;
    }

    double qp_lambda = 0.0;
    Eigen::VectorXd p = detail::SmallQp::solve(bmat, -grad, qlo, qhi,
                                               use_con ? &acon : nullptr, brhs, &qp_lambda);
    if (p.lpNorm<Eigen::Infinity>() < cfg.tol_step) {
      result.converged = true;
      break;
    }

    const double mu = std::max(1.0, 2.0 * std::abs(qp_lambda));
    double viol = std::max(0.0, -lam_min);
    double merit = -fz + mu * viol;
    double descent = -grad.dot(p) - mu * viol;

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial = z;
    double ftrial = fz;
    for (int bt = 0; bt < 22; ++bt) {
      trial = z;
      for (int k = 0; k < n; ++k) {
        int i = free[k];
        trial[i] = std::clamp(z[i] + alpha * p[k], lo[i], hi[i]);
      }
      double lam_trial = have_rho_free ? eig_min(trial, nullptr) : 1.0;
      if (lam_trial >= -kFeasTol) {
        ftrial = eval_full(trial);
        if (!std::isnan(ftrial)) {
          double merit_trial = -ftrial + mu * std::max(0.0, -lam_trial);
          if (merit_trial <= merit + 1e-4 * alpha * descent || merit_trial < merit - 1e-14) {
            accepted = true;
            break;
          }
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) break;

    record_best(trial, ftrial);
    Eigen::VectorXd step(n);
    for (int k = 0; k < n; ++k) step[k] = trial[free[k]] - z[free[k]];

    Eigen::VectorXd grad_new = gradient(trial, ftrial);
    Eigen::VectorXd y = grad - grad_new;  // curvature of the minimized -f
    double sy = step.dot(y);
    Eigen::VectorXd bs = bmat * step;
    double sbs = step.dot(bs);
    if (sbs > 0.0) {
      if (sy < 0.2 * sbs) {
        double theta = 0.8 * sbs / (sbs - sy);
        y = theta * y + (1.0 - theta) * bs;
        sy = step.dot(y);
      }
      if (sy > 1e-14) {
        bmat -= (bs * bs.transpose()) / sbs;
        bmat += (y * y.transpose()) / sy;
      }
    }

    z = trial;
    fz = ftrial;
    grad = grad_new;
    if (step.lpNorm<Eigen::Infinity>() < cfg.tol_step) {
      result.converged = true;
      break;
    }
  }

  result.objective_evals = evals;
  return result;
}

}  // namespace gtu
