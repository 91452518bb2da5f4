#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace gtu {

inline int pair_count(int d) { return d * (d - 1) / 2; }

// Flat index of the pair (i,j), i < j, in lexicographic order:
// (0,1), (0,2), ..., (0,d-1), (1,2), ... This ordering is the contract for
// every flattened correlation vector in the library.
inline int pair_index(int i, int j, int d) {
  if (i < 0 || j <= i || j >= d) throw std::invalid_argument("pair_index: need 0 <= i < j < d");
  return i * d - i * (i + 1) / 2 + (j - i - 1);
}

inline Eigen::MatrixXd build_gamma(const Eigen::VectorXd& rho, int d) {
  if (rho.size() != pair_count(d)) {
    throw std::invalid_argument("build_gamma: correlation vector has wrong length");
  }
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      double r = rho[pair_index(i, j, d)];
      gamma(i, j) = r;
      gamma(j, i) = r;
    }
  }
  return gamma;
}

inline Eigen::VectorXd gamma_to_rho(const Eigen::MatrixXd& gamma) {
  int d = static_cast<int>(gamma.rows());
  Eigen::VectorXd rho(pair_count(d));
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      rho[pair_index(i, j, d)] = 0.5 * (gamma(i, j) + gamma(j, i));
    }
  }
  return rho;
}

inline double min_eigenvalue(const Eigen::MatrixXd& gamma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Positive semidefiniteness within tol. Cheap Cholesky attempt on the shifted
// matrix first; an exact smallest-eigenvalue check settles the borderline
// cases the factorization rejects for rounding reasons.
inline bool is_psd(const Eigen::MatrixXd& gamma, double tol = 1e-12) {
  Eigen::LLT<Eigen::MatrixXd> llt(gamma + tol * Eigen::MatrixXd::Identity(gamma.rows(), gamma.cols()));
  if (llt.info() == Eigen::Success) return true;
  return min_eigenvalue(gamma) >= -tol;
}

// A square root S with S * S^T = gamma. Lower Cholesky when the matrix is
// numerically positive definite; on the PSD boundary the spectral root with
// negative eigenvalues clamped to zero. Indefinite input beyond tol throws.
inline Eigen::MatrixXd sqrt_gamma(const Eigen::MatrixXd& gamma, double tol = 1e-10) {
  Eigen::LLT<Eigen::MatrixXd> llt(gamma);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma);
  if (es.info() != Eigen::Success) throw std::runtime_error("sqrt_gamma: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < -tol) {
    throw std::domain_error("sqrt_gamma: matrix is not positive semidefinite");
  }
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

// Closest-in-spirit PSD correlation matrix: clamp negative eigenvalues to
// zero, then rescale back to a unit diagonal. Idempotent, and the identity on
// matrices that are already PSD with unit diagonal.
inline Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& gamma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma);
  if (es.info() != Eigen::Success) throw std::runtime_error("nearest_psd: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= 0.0) return gamma;

  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd fixed = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  Eigen::VectorXd scale = fixed.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  fixed = scale.asDiagonal() * fixed * scale.asDiagonal();
  fixed = 0.5 * (fixed + fixed.transpose()).eval();
  fixed.diagonal().setOnes();
  return fixed;
}

}  // namespace gtu
