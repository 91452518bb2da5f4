#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

#include "gtu/correlation.hpp"
#include "gtu/engine.hpp"
#include "gtu/lowdisc.hpp"
#include "gtu/payoffs.hpp"
#include "gtu/types.hpp"

namespace gtu {

enum class OptionKind { Call, Put };

inline double bs_price(double s0, double strike, double rate, double dividend, double sigma,
                       double maturity, OptionKind kind = OptionKind::Call) {
  if (s0 <= 0.0 || strike <= 0.0 || sigma <= 0.0 || maturity <= 0.0) {
    throw std::invalid_argument("bs_price: spot, strike, volatility and maturity must be positive");
  }
  const double sd = sigma * std::sqrt(maturity);
  const double d1 = (std::log(s0 / strike) + (rate - dividend) * maturity) / sd + 0.5 * sd;
  const double d2 = d1 - sd;
  const double call =
      s0 * std::exp(-dividend * maturity) * norm_cdf(d1) -
      strike * std::exp(-rate * maturity) * norm_cdf(d2);
  if (kind == OptionKind::Call) return call;
  return call - s0 * std::exp(-dividend * maturity) + strike * std::exp(-rate * maturity);
}

// One-asset worst-case pricing problem: geometric dynamics with volatility
// anywhere in [vol_min, vol_max] and a dividend yield that may depend on the
// chosen volatility (div_const + div_vol_slope * vol^2).
struct Reduced1D {
  double y0 = 1.0;
  double vol_min = 0.0;
  double vol_max = 0.0;
  double rate = 0.0;
  double div_const = 0.0;
  double div_vol_slope = 0.0;
  double maturity = 1.0;
  std::function<double(double)> payoff1d;

  void validate() const {
    if (!(y0 > 0.0)) throw std::invalid_argument("Reduced1D: y0 must be positive");
    if (!(vol_min > 0.0) || vol_min > vol_max) {
      throw std::invalid_argument("Reduced1D: need 0 < vol_min <= vol_max");
    }
    if (!(maturity > 0.0)) throw std::invalid_argument("Reduced1D: maturity must be positive");
    if (!payoff1d) throw std::invalid_argument("Reduced1D: payoff is not set");
  }
};

namespace detail {

template <class F>
double golden_max(F&& f, double lo, double hi) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  const double tol = 1e-6 * (hi - lo);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return std::max(fc, fd);
}

}  // namespace detail

// Backward induction on a recombining log-space lattice. Each node moves to
// {up, stay, down} with probabilities matching the exact first and second
// moments of the lognormal step for the chosen volatility, so no
// interpolation is involved and the objective is monotone in the step
// variance wherever the value surface is locally convex/concave in the
// spot: with a constant dividend the best volatility is always an endpoint
// (and ties exactly on locally linear stretches). A volatility-dependent
// dividend breaks that argument, so that case also searches the interior.
inline double uvm_tree_1d(const Reduced1D& prob, int steps) {
  prob.validate();
  if (steps < 1) throw std::invalid_argument("uvm_tree_1d: need at least one step");

  const double dt = prob.maturity / steps;
  const double h = std::sqrt(1.5) * prob.vol_max * std::sqrt(dt);  // keeps stay-put mass positive
  const double x0 = std::log(prob.y0);
  const double disc = std::exp(-prob.rate * dt);
  const double eh = std::exp(h), emh = std::exp(-h);
  const double denom = eh - emh;
  const bool variable_div = prob.div_vol_slope != 0.0;
  const bool pinned = prob.vol_min == prob.vol_max;

  struct Move {
    double up, down;
  };
  auto move_for = [&](double vol) {
    const double div = prob.div_const + prob.div_vol_slope * vol * vol;
    const double growth = std::exp((prob.rate - div) * dt);
    const double a = growth - 1.0;
    const double b = growth * growth * std::exp(vol * vol * dt) - 1.0;
    Move mv;
    mv.up = (b - (emh + 1.0) * a) / ((eh - 1.0) * denom);
    mv.down = (b - (eh + 1.0) * a) / ((1.0 - emh) * denom);
    if (mv.up < 0.0 || mv.down < 0.0 || mv.up + mv.down > 1.0) {
      throw std::domain_error("uvm_tree_1d: step count too small for these drift terms");
    }
    return mv;
  };
  const Move lo_move = move_for(prob.vol_min);
  const Move hi_move = pinned ? lo_move : move_for(prob.vol_max);

  Eigen::VectorXd values(2 * steps + 1);
  for (int j = 0; j <= 2 * steps; ++j) {
    values[j] = prob.payoff1d(std::exp(x0 + (j - steps) * h));
  }

  Eigen::VectorXd next;
  for (int n = steps - 1; n >= 0; --n) {
    next.swap(values);
    values.resize(2 * n + 1);
    for (int j = 0; j <= 2 * n; ++j) {
      // node j of this slice sits under node j+1 of the next
      const double vm = next[j + 1], vu = next[j + 2], vd = next[j];
      auto value_at = [&](const Move& mv) {
        return disc * (vm + mv.up * (vu - vm) + mv.down * (vd - vm));
      };
      double best = value_at(lo_move);
      if (!pinned) {
        best = std::max(best, value_at(hi_move));
        if (variable_div) {
          best = std::max(best, detail::golden_max(
                                    [&](double v) { return value_at(move_for(v)); },
                                    prob.vol_min, prob.vol_max));
        }
      }
      values[j] = best;
    }
  }
  return values[0];
}

// Two-asset outperformance payoffs priced in units of the first asset:
// Y = S2/S1 is driftless with volatility sqrt(s1^2 + s2^2 - 2*rho*s1*s2),
// whose range over the volatility box is spanned by the corners when the
// pinned correlation is nonpositive.
inline Reduced1D numeraire_reduce(const ModelSpec& m, const PayoffSpec& payoff) {
  m.validate();
  payoff.validate(m);
  if (m.d != 2) throw std::invalid_argument("numeraire_reduce: needs exactly two assets");
  if (m.r != 0.0 || m.eta.cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument("numeraire_reduce: requires zero rate and dividends");
  }
  if (m.rho_min[0] != m.rho_max[0]) {
    throw std::invalid_argument("numeraire_reduce: requires a pinned correlation");
  }
  const double rho = m.rho_min[0];
  if (rho > 0.0) {
    throw std::invalid_argument("numeraire_reduce: positive correlation is unsupported");
  }
  if (payoff.kind != PayoffKind::Outperformer && payoff.kind != PayoffKind::OutperformerSpread) {
    throw std::invalid_argument("numeraire_reduce: payoff has no one-asset equivalent");
  }

  auto vol_y = [rho](double s1, double s2) {
    return std::sqrt(s1 * s1 + s2 * s2 - 2.0 * rho * s1 * s2);
  };
  Reduced1D red;
  red.y0 = m.s0[1] / m.s0[0];
  red.vol_min = vol_y(m.sigma_min[0], m.sigma_min[1]);
  red.vol_max = vol_y(m.sigma_max[0], m.sigma_max[1]);
  red.maturity = m.T;
  const double scale = m.s0[0];
  if (payoff.kind == PayoffKind::Outperformer) {
    red.payoff1d = [scale](double y) { return scale * std::max(y - 1.0, 0.0); };
  } else {
    const double lo = payoff.lo, hi = payoff.hi;
    red.payoff1d = [scale, lo, hi](double y) {
      return scale * (std::max(y - lo, 0.0) - std::max(y - hi, 0.0));
    };
  }
  return red;
}

// Geometric-mean call spread under independent assets with a common
// volatility box: the mean is again geometric with volatility sigma/sqrt(d) and
// a volatility-dependent dividend, so the d-asset problem collapses to one.
inline Reduced1D geo_reduce(const ModelSpec& m, double k1, double k2) {
  m.validate();
  if (k1 > k2) throw std::invalid_argument("geo_reduce: need k1 <= k2");
  for (int i = 0; i < pair_count(m.d); ++i) {
    if (m.rho_min[i] != 0.0 || m.rho_max[i] != 0.0) {
      throw std::invalid_argument("geo_reduce: requires all correlations pinned at zero");
    }
  }
  for (int i = 1; i < m.d; ++i) {
    if (m.sigma_min[i] != m.sigma_min[0] || m.sigma_max[i] != m.sigma_max[0]) {
      throw std::invalid_argument("geo_reduce: requires a common volatility box");
    }
  }

  const double rd = std::sqrt(static_cast<double>(m.d));
  Reduced1D red;
  red.y0 = std::exp(m.s0.array().log().mean());
  red.vol_min = m.sigma_min[0] / rd;
  red.vol_max = m.sigma_max[0] / rd;
  red.rate = m.r;
  red.div_const = m.eta.mean();
  red.div_vol_slope = 0.5 * (m.d - 1);
  red.maturity = m.T;
  red.payoff1d = [k1, k2](double y) {
    return std::max(y - k1, 0.0) - std::max(y - k2, 0.0);
  };
  return red;
}

// The correlation corner that spreads the first asset against the rest:
// every pair touching asset one sits at its lower bound, every other pair at
// its upper bound.
inline Eigen::VectorXd geo_outperformer_rho(const ModelSpec& m) {
  Eigen::VectorXd rho(pair_count(m.d));
  for (int i = 0; i < m.d; ++i) {
    for (int j = i + 1; j < m.d; ++j) {
      const int k = pair_index(i, j, m.d);
      rho[k] = i == 0 ? m.rho_min[k] : m.rho_max[k];
    }
  }
  return rho;
}

inline double geo_outperformer_benchmark(const ModelSpec& m, const AlgoParams& algo) {
  m.validate();
  if (m.d < 2) throw std::invalid_argument("geo_outperformer_benchmark: needs at least two assets");
  Eigen::VectorXd rho = geo_outperformer_rho(m);
  if (!is_psd(build_gamma(rho, m.d))) {
    throw std::domain_error("geo_outperformer_benchmark: corner correlation matrix is not PSD");
  }
  ModelSpec fixed = m;
  fixed.rho_min = rho;
  fixed.rho_max = rho;
  return price(fixed, PayoffSpec::geo_outperformer(), algo).value;
}

}  // namespace gtu
