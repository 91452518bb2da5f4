#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gtu {

// ============================================================================
// Kernels
// ============================================================================

enum class KernelKind { Matern32, Matern32Ard };

// Matern 3/2 family: k(a,b) = sf^2 (1+s) exp(-s) with
// s = sqrt(3 * sum_i ((a_i-b_i)/l_i)^2). The plain variant shares one length
// scale across dimensions; the ARD variant carries one per dimension.
struct KernelSpec {
  KernelKind kind = KernelKind::Matern32;
  double signal_std = 1.0;
  Eigen::VectorXd length_scales = Eigen::VectorXd::Ones(1);

  double length_scale_for(int dim) const {
    return kind == KernelKind::Matern32 ? length_scales[0] : length_scales[dim];
  }

  void validate(int input_dim) const {
    if (signal_std <= 0.0) throw std::invalid_argument("KernelSpec: signal_std must be positive");
    long expected = kind == KernelKind::Matern32 ? 1 : input_dim;
    if (length_scales.size() != expected) {
      throw std::invalid_argument("KernelSpec: wrong number of length scales");
    }
    if ((length_scales.array() <= 0.0).any()) {
      throw std::invalid_argument("KernelSpec: length scales must be positive");
    }
  }
};

inline double kernel_eval(const KernelSpec& k, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double q = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double t = (a[i] - b[i]) / k.length_scale_for(static_cast<int>(i));
    q += t * t;
  }
  double s = std::sqrt(3.0 * q);
  return k.signal_std * k.signal_std * (1.0 + s) * std::exp(-s);
}

// ============================================================================
// Model
// ============================================================================

struct GprFitOptions {
  int max_iters = 60;
  double grad_tol = 1e-5;
  // Lower bound on the fitted noise level, relative to the target standard
  // deviation. Targets that carry systematic per-point error (e.g. values
  // produced by a coarse quadrature) need a floor well above the default, or
  // the likelihood interpolates the error pattern instead of averaging it.
  double noise_floor = 1e-6;
  // Hyperparameters of a related fit (e.g. the previous time slice), used as
  // the primary start instead of the full cold multi-start set.
  std::optional<std::pair<KernelSpec, double>> warm;
  // When non-empty, replaces the built-in start list entirely.
  std::vector<std::pair<KernelSpec, double>> start_override;
};

class GprModel {
 public:
  GprModel() = default;

  // Exact kernel regression on the data as given: no input/output rescaling,
  // hyperparameters interpreted in raw data units.
  static GprModel from_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                            const KernelSpec& kernel, double noise_std) {
    if (X.rows() != Y.size() || X.rows() < 1) {
      throw std::invalid_argument("GprModel: need one target per input row");
    }
    kernel.validate(static_cast<int>(X.cols()));
    if (noise_std < 0.0) throw std::invalid_argument("GprModel: noise_std must be >= 0");
    GprModel m;
    m.in_shift_ = Eigen::VectorXd::Zero(X.cols());
    m.in_scale_ = Eigen::VectorXd::Ones(X.cols());
    m.out_shift_ = 0.0;
    m.out_scale_ = 1.0;
    m.init(X, Y, kernel, noise_std);
    return m;
  }

  // Standardizes inputs per dimension and targets, collapses exactly
  // duplicated rows (averaging their targets), and picks hyperparameters by
  // quasi-Newton ascent of the log marginal likelihood from several starts.
  // Fitted kernel and noise live on the standardized scale.
  static GprModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, KernelKind kind,
                      const GprFitOptions& opts = {});

  double predict_mean(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(1);
    predict_mean_batch(x.transpose(), out);
    return out[0];
  }

  // One query per row of Q; out is resized to Q.rows().
  void predict_mean_batch(const Eigen::MatrixXd& Q, Eigen::VectorXd& out) const {
    Eigen::MatrixXd qs = (Q.rowwise() - in_shift_.transpose()) * comb_scale_.asDiagonal();
    Eigen::MatrixXd w = -2.0 * qs * xs_.transpose();
    w.colwise() += qs.rowwise().squaredNorm();
    w.rowwise() += xs_sq_.transpose();
    Eigen::ArrayXXd s = (3.0 * w.array().max(0.0)).sqrt();
    const double sf2 = kernel_.signal_std * kernel_.signal_std;
    out.noalias() = (sf2 * ((1.0 + s) * (-s).exp()).matrix()) * alpha_;
    out.array() = out_shift_ + out_scale_ * out.array();
  }

  double predict_var(const Eigen::VectorXd& x) const {
    Eigen::RowVectorXd qs = (x - in_shift_).transpose() * comb_scale_.asDiagonal();
    Eigen::ArrayXd w = xs_sq_.array() - 2.0 * (xs_ * qs.transpose()).array() + qs.squaredNorm();
    Eigen::ArrayXd s = (3.0 * w.max(0.0)).sqrt();
    const double sf2 = kernel_.signal_std * kernel_.signal_std;
    Eigen::VectorXd kvec = (sf2 * (1.0 + s) * (-s).exp()).matrix();
    Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(kvec);
    double var = sf2 - v.squaredNorm();
    return std::max(0.0, var) * out_scale_ * out_scale_;
  }

  const KernelSpec& kernel() const { return kernel_; }
  double noise_std() const { return noise_std_; }
  double log_marginal_likelihood() const { return lml_; }
  long sample_count() const { return xs_.rows(); }
  long input_dim() const { return xs_.cols(); }
  const Eigen::VectorXd& input_shift() const { return in_shift_; }
  const Eigen::VectorXd& input_scale() const { return in_scale_; }
  double output_shift() const { return out_shift_; }
  double output_scale() const { return out_scale_; }

 private:
  // Builds the Gram matrix, factors it (bumping a diagonal jitter until the
  // factorization succeeds), and caches alpha and the marginal likelihood.
  // Inputs arrive already mapped to the model's internal scale.
  void init(const Eigen::MatrixXd& Xn, const Eigen::VectorXd& Yn, const KernelSpec& kernel,
            double noise_std) {
    kernel_ = kernel;
    noise_std_ = noise_std;
    comb_scale_ = in_scale_.cwiseInverse();
    for (int j = 0; j < comb_scale_.size(); ++j) comb_scale_[j] /= kernel.length_scale_for(j);
    xs_ = ((Xn.rowwise() - in_shift_.transpose()) * comb_scale_.asDiagonal()).eval();
    xs_sq_ = xs_.rowwise().squaredNorm();
    yn_ = Yn;

    const long p = xs_.rows();
    Eigen::MatrixXd w = -2.0 * xs_ * xs_.transpose();
    w.colwise() += xs_sq_;
    w.rowwise() += xs_sq_.transpose();
    Eigen::ArrayXXd s = (3.0 * w.array().max(0.0)).sqrt();
    const double sf2 = kernel.signal_std * kernel.signal_std;
    Eigen::MatrixXd gram = sf2 * ((1.0 + s) * (-s).exp()).matrix();

    double base = noise_std * noise_std;
    double jitter = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt;
    for (int attempt = 0; attempt <= 7; ++attempt) {
      Eigen::MatrixXd shifted = gram;
      shifted.diagonal().array() += base + jitter;
      llt.compute(shifted);
      if (llt.info() == Eigen::Success) break;
      jitter = (jitter == 0.0) ? 1e-10 * sf2 : 10.0 * jitter;
      if (attempt == 7) throw std::runtime_error("GprModel: Gram factorization failed");
    }
    chol_ = llt.matrixL();
    alpha_ = llt.solve(yn_);
    lml_ = -0.5 * yn_.dot(alpha_) - chol_.diagonal().array().log().sum() -
           0.5 * static_cast<double>(p) * std::log(2.0 * M_PI);
  }

  KernelSpec kernel_;
  double noise_std_ = 0.0;
  Eigen::VectorXd in_shift_, in_scale_, comb_scale_;
  double out_shift_ = 0.0, out_scale_ = 1.0;
  Eigen::MatrixXd xs_;     // standardized inputs, pre-divided by length scales
  Eigen::VectorXd xs_sq_;  // cached row norms of xs_
  Eigen::VectorXd yn_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;

  friend struct GprFitEngine;
};

// ============================================================================
// Hyperparameter fitting
// ============================================================================

namespace detail {

// Log marginal likelihood and its gradient in log-hyperparameter space
// (log sf, log l_1..l_L, log sn) on standardized data.
class LmlObjective {
 public:
  LmlObjective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelKind kind)
      : x_(X), y_(y), kind_(kind) {
    nscales_ = kind == KernelKind::Matern32 ? 1 : static_cast<int>(X.cols());
  }

  int num_params() const { return nscales_ + 2; }

  double value(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd gram;
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd alpha;
    if (!factor(theta, gram, llt, alpha)) return -1e300;
    return lml(llt, alpha);
  }

  double value_and_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    Eigen::MatrixXd gram;
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd alpha;
    grad = Eigen::VectorXd::Zero(num_params());
    if (!factor(theta, gram, llt, alpha)) return -1e300;

    const long p = x_.rows();
    Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    const double sf2 = std::exp(2.0 * theta[0]);
    const double sn2 = std::exp(2.0 * theta[num_params() - 1]);

    // d/dlog sf: dK = 2*gram.
    grad[0] = alpha.dot(gram * alpha) - kinv.cwiseProduct(gram).sum();

    // Exponential factor recovered from the kernel value: exp(-s) and s.
    Eigen::ArrayXXd s = dist_scaled(theta);
    Eigen::ArrayXXd expo = (-s).exp();
    if (kind_ == KernelKind::Matern32) {
      Eigen::MatrixXd dk = (sf2 * s.square() * expo).matrix();
      grad[1] = 0.5 * (alpha.dot(dk * alpha) - kinv.cwiseProduct(dk).sum());
    } else {
      for (int dim = 0; dim < nscales_; ++dim) {
        double inv_l2 = std::exp(-2.0 * theta[1 + dim]);
        Eigen::VectorXd col = x_.col(dim);
        Eigen::MatrixXd diff = col * Eigen::RowVectorXd::Ones(p) -
                               Eigen::VectorXd::Ones(p) * col.transpose();
        Eigen::MatrixXd dk = (3.0 * sf2 * inv_l2 * diff.array().square() * expo).matrix();
        grad[1 + dim] = 0.5 * (alpha.dot(dk * alpha) - kinv.cwiseProduct(dk).sum());
      }
    }

    grad[num_params() - 1] = sn2 * (alpha.squaredNorm() - kinv.trace());
    return lml(llt, alpha);
  }

  KernelSpec kernel_at(const Eigen::VectorXd& theta) const {
    KernelSpec k;
    k.kind = kind_;
    k.signal_std = std::exp(theta[0]);
    k.length_scales = theta.segment(1, nscales_).array().exp();
    return k;
  }
  double noise_at(const Eigen::VectorXd& theta) const {
    return std::exp(theta[num_params() - 1]);
  }

 private:
  Eigen::ArrayXXd dist_scaled(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd xs = x_;
    for (int dim = 0; dim < static_cast<int>(x_.cols()); ++dim) {
      xs.col(dim) *= std::exp(-theta[1 + std::min(dim, nscales_ - 1)]);
    }
    Eigen::VectorXd sq = xs.rowwise().squaredNorm();
    Eigen::MatrixXd w = -2.0 * xs * xs.transpose();
    w.colwise() += sq;
    w.rowwise() += sq.transpose();
    return (3.0 * w.array().max(0.0)).sqrt();
  }

  bool factor(const Eigen::VectorXd& theta, Eigen::MatrixXd& gram,
              Eigen::LLT<Eigen::MatrixXd>& llt, Eigen::VectorXd& alpha) const {
    const double sf2 = std::exp(2.0 * theta[0]);
    const double sn2 = std::exp(2.0 * theta[num_params() - 1]);
    Eigen::ArrayXXd s = dist_scaled(theta);
    gram = (sf2 * (1.0 + s) * (-s).exp()).matrix();
    Eigen::MatrixXd shifted = gram;
    shifted.diagonal().array() += sn2 + 1e-10 * sf2;
    llt.compute(shifted);
    if (llt.info() != Eigen::Success) return false;
    alpha = llt.solve(y_);
    return true;
  }

  double lml(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& alpha) const {
    return -0.5 * y_.dot(alpha) -
           Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum() -
           0.5 * static_cast<double>(x_.rows()) * std::log(2.0 * M_PI);
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  KernelKind kind_;
  int nscales_;
};

// BFGS ascent with backtracking; parameters clamped to a broad log box and a
// noise floor that keeps the Gram matrix factorable. Stops early once the
// likelihood gain per accepted step stays negligible, which cuts short the
// long flat ridges this surface develops for nearly noiseless targets.
inline Eigen::VectorXd maximize_lml(const LmlObjective& obj, Eigen::VectorXd theta,
                                    int max_iters, double grad_tol, double ftol,
                                    double noise_log_lo, double* best_value) {
  const int n = obj.num_params();
  const double log_lo = std::log(1e-6), log_hi = std::log(1e6);
  auto clamp = [&](Eigen::VectorXd t) {
    for (int i = 0; i < n - 1; ++i) t[i] = std::clamp(t[i], log_lo, log_hi);
    t[n - 1] = std::clamp(t[n - 1], std::max(log_lo, noise_log_lo), log_hi);
    return t;
  };
  theta = clamp(theta);

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad(n);
  double f = obj.value_and_grad(theta, grad);
  int stalled = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < grad_tol) break;
    Eigen::VectorXd dir = h * grad;
    if (dir.dot(grad) <= 0.0) {
      h.setIdentity();
      dir = grad;
    }
    double step = 1.0;
    Eigen::VectorXd trial;
    double ftrial = -1e300;
    bool accepted = false;
    for (int bt = 0; bt < 15; ++bt) {
      trial = clamp(theta + step * dir);
      ftrial = obj.value(trial);
      if (ftrial >= f + 1e-4 * grad.dot(trial - theta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || (trial - theta).lpNorm<Eigen::Infinity>() < 1e-10) break;
    stalled = (ftrial - f < ftol) ? stalled + 1 : 0;
    if (stalled >= 2) {
      theta = trial;
      f = ftrial;
      break;
    }

    Eigen::VectorXd grad_new(n);
    double fnew = obj.value_and_grad(trial, grad_new);
    Eigen::VectorXd s = trial - theta;
    Eigen::VectorXd y = grad - grad_new;  // gradient of -f decreases along ascent
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      Eigen::VectorXd hy = h * y;
      double yhy = y.dot(hy);
      h += ((sy + yhy) / (sy * sy)) * (s * s.transpose());
      h -= (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    theta = trial;
    f = fnew;
    grad = grad_new;
  }
  *best_value = f;
  return theta;
}

}  // namespace detail

inline GprModel GprModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              KernelKind kind, const GprFitOptions& opts) {
  if (X.rows() != Y.size() || X.rows() < 1) {
    throw std::invalid_argument("GprModel::fit: need one target per input row");
  }
  const long d = X.cols();

  // Collapse rows that are bitwise duplicates, averaging their targets.
  std::vector<long> order(X.rows());
  for (long i = 0; i < X.rows(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    for (long j = 0; j < d; ++j) {
      if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
    }
    return false;
  });
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> targets;
  for (long k = 0; k < X.rows();) {
    long j = k;
    double sum = 0.0;
    while (j < X.rows() && X.row(order[j]) == X.row(order[k])) sum += Y[order[j++]];
    rows.push_back(X.row(order[k]).transpose());
    targets.push_back(sum / static_cast<double>(j - k));
    k = j;
  }
  const long p = static_cast<long>(rows.size());
  Eigen::MatrixXd xr(p, d);
  Eigen::VectorXd yr(p);
  for (long i = 0; i < p; ++i) {
    xr.row(i) = rows[i].transpose();
    yr[i] = targets[i];
  }

  GprModel m;
  m.in_shift_ = xr.colwise().mean().transpose();
  Eigen::VectorXd var =
      (xr.rowwise() - m.in_shift_.transpose()).array().square().colwise().mean().transpose();
  m.in_scale_ = var.cwiseSqrt();
  for (long j = 0; j < d; ++j) {
    if (m.in_scale_[j] < 1e-10) m.in_scale_[j] = 1.0;
  }
  m.out_shift_ = yr.mean();
  double ysd = std::sqrt((yr.array() - m.out_shift_).square().mean());
  m.out_scale_ = (ysd < 1e-12) ? 1.0 : ysd;

  Eigen::MatrixXd xn = (xr.rowwise() - m.in_shift_.transpose()) * m.in_scale_.cwiseInverse().asDiagonal();
  Eigen::VectorXd ynorm = (yr.array() - m.out_shift_) / m.out_scale_;

  detail::LmlObjective obj(xn, ynorm, kind);
  const int nscales = obj.num_params() - 2;

  // Median-distance start, one value per length scale.
  const long sub = std::min<long>(p, 512);
  Eigen::VectorXd med = Eigen::VectorXd::Ones(nscales);
  {
    std::vector<double> dist;
    dist.reserve(sub * (sub - 1) / 2);
    for (int axis = 0; axis < nscales; ++axis) {
      dist.clear();
      for (long i = 0; i < sub; ++i) {
        for (long j = i + 1; j < sub; ++j) {
          double v = (kind == KernelKind::Matern32) ? (xn.row(i) - xn.row(j)).norm()
                                                    : std::abs(xn(i, axis) - xn(j, axis));
          if (v > 0.0) dist.push_back(v);
        }
      }
      if (!dist.empty()) {
        auto mid = dist.begin() + dist.size() / 2;
        std::nth_element(dist.begin(), mid, dist.end());
        med[axis] = *mid;
      }
      if (kind == KernelKind::Matern32) break;
    }
  }

  const double noise_lo = std::max(opts.noise_floor, 1e-6);
  auto make_theta = [&](const KernelSpec& k, double noise) {
    Eigen::VectorXd t(obj.num_params());
    t[0] = std::log(k.signal_std);
    for (int i = 0; i < nscales; ++i) t[1 + i] = std::log(k.length_scale_for(i));
    t[obj.num_params() - 1] = std::log(std::max(noise, noise_lo));
    return t;
  };
  KernelSpec base;
  base.kind = kind;
  base.signal_std = 1.0;
  base.length_scales = med;
  if (kind == KernelKind::Matern32) base.length_scales = med.head(1);

  std::vector<Eigen::VectorXd> starts;
  if (!opts.start_override.empty()) {
    for (const auto& [k, nz] : opts.start_override) starts.push_back(make_theta(k, nz));
  } else if (opts.warm) {
    starts.push_back(make_theta(opts.warm->first, opts.warm->second));
  } else {
    starts.push_back(make_theta(base, 1e-3));
    KernelSpec tight = base, wide = base;
    tight.length_scales /= 3.0;
    wide.length_scales *= 3.0;
    starts.push_back(make_theta(tight, 1e-3));
    starts.push_back(make_theta(wide, 1e-3));
  }

  double best_val = -1e301;
  Eigen::VectorXd best_theta;
  const double ftol = 1e-4 * std::max<double>(1.0, static_cast<double>(p));
  for (const auto& t0 : starts) {
    double val = 0.0;
    Eigen::VectorXd t = detail::maximize_lml(obj, t0, opts.max_iters, opts.grad_tol, ftol,
                                             std::log(noise_lo), &val);
    if (val > best_val) {
      best_val = val;
      best_theta = t;
    }
  }
  if (best_val <= -1e300) throw std::runtime_error("GprModel::fit: likelihood evaluation failed");

  m.init(xr, ynorm, obj.kernel_at(best_theta), obj.noise_at(best_theta));
  return m;
}

}  // namespace gtu
