#pragma once

#include <Eigen/Dense>

#include <stdexcept>

#include "gtu/correlation.hpp"

namespace gtu {

// One admissible choice of the uncertain diffusion parameters: a volatility
// per asset and a flattened correlation (pair_index ordering).
struct UvmPoint {
  Eigen::VectorXd sigma;
  Eigen::VectorXd rho;
};

struct ParameterBox {
  Eigen::VectorXd sigma_min, sigma_max;
  Eigen::VectorXd rho_min, rho_max;
};

// Market/model description: spot vector, carry parameters, the uncertainty
// box for volatilities and correlations, and the horizon.
struct ModelSpec {
  int d = 0;
  Eigen::VectorXd s0;
  double r = 0.0;
  Eigen::VectorXd eta;
  Eigen::VectorXd sigma_min, sigma_max;
  Eigen::VectorXd rho_min, rho_max;
  double T = 1.0;

  static ModelSpec symmetric(int d, double s0, double r, double eta,
                             double sigma_lo, double sigma_hi,
                             double rho_lo, double rho_hi, double T) {
    ModelSpec m;
    m.d = d;
    m.s0 = Eigen::VectorXd::Constant(d, s0);
    m.r = r;
    m.eta = Eigen::VectorXd::Constant(d, eta);
    m.sigma_min = Eigen::VectorXd::Constant(d, sigma_lo);
    m.sigma_max = Eigen::VectorXd::Constant(d, sigma_hi);
    m.rho_min = Eigen::VectorXd::Constant(pair_count(d), rho_lo);
    m.rho_max = Eigen::VectorXd::Constant(pair_count(d), rho_hi);
    m.T = T;
    return m;
  }

  void validate() const {
    if (d < 1) throw std::invalid_argument("ModelSpec: d must be >= 1");
    if (T <= 0.0) throw std::invalid_argument("ModelSpec: T must be positive");
    int pc = pair_count(d);
    if (s0.size() != d || eta.size() != d || sigma_min.size() != d || sigma_max.size() != d) {
      throw std::invalid_argument("ModelSpec: per-asset vector has wrong length");
    }
    if (rho_min.size() != pc || rho_max.size() != pc) {
      throw std::invalid_argument("ModelSpec: correlation bound vector has wrong length");
    }
    if ((s0.array() <= 0.0).any()) throw std::invalid_argument("ModelSpec: spots must be positive");
    if ((sigma_min.array() <= 0.0).any() || (sigma_min.array() > sigma_max.array()).any()) {
      throw std::invalid_argument("ModelSpec: need 0 < sigma_min <= sigma_max");
    }
    if ((rho_min.array() < -1.0).any() || (rho_max.array() > 1.0).any() ||
        (rho_min.array() > rho_max.array()).any()) {
      throw std::invalid_argument("ModelSpec: need -1 <= rho_min <= rho_max <= 1");
    }
  }

  Eigen::VectorXd sigma_avg() const { return 0.5 * (sigma_min + sigma_max); }
  Eigen::VectorXd rho_avg() const { return 0.5 * (rho_min + rho_max); }

  // Midpoint correlation matrix, repaired onto the PSD cone if the raw
  // midpoints fall outside it.
  Eigen::MatrixXd gamma_avg() const {
    Eigen::MatrixXd gamma = build_gamma(rho_avg(), d);
    if (!is_psd(gamma)) gamma = nearest_psd(gamma);
    return gamma;
  }

  ParameterBox box() const { return ParameterBox{sigma_min, sigma_max, rho_min, rho_max}; }
};

}  // namespace gtu
