#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hifm/errors.hpp"
#include "hifm/rng.hpp"

namespace hifm {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double log_gamma_pdf(double x, double shape, double rate) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_dirichlet_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& alpha) {
  double lp = std::lgamma(alpha.sum());
  for (Eigen::Index h = 0; h < x.size(); ++h) {
    if (x[h] <= 0.0) return -std::numeric_limits<double>::infinity();
    lp += (alpha[h] - 1.0) * std::log(x[h]) - std::lgamma(alpha[h]);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Gamma / inverse gamma / Dirichlet
// ---------------------------------------------------------------------------

namespace detail {

// Marsaglia-Tsang squeeze sampler, shape >= 1, rate 1.
inline double gamma_mt(double shape, Rng& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace detail

// Gamma(shape, rate). Shapes well below 1 are handled by sampling
// Gamma(shape+1) and applying the U^(1/shape) power correction in log space,
// so draws stay strictly positive down to the smallest magnitudes.
inline double sample_gamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw ParameterError("sample_gamma: shape and rate must be positive");
  }
  if (shape >= 1.0) return detail::gamma_mt(shape, rng) / rate;
  const double g = detail::gamma_mt(shape + 1.0, rng);
  const double log_draw = std::log(g) + std::log(rng.uniform()) / shape - std::log(rate);
  const double draw = std::exp(log_draw);
  return draw > 0.0 ? draw : std::numeric_limits<double>::min();
}

// Reciprocal of a Gamma(shape, rate) draw.
inline double sample_inverse_gamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw ParameterError("sample_inverse_gamma: shape and rate must be positive");
  }
  return 1.0 / sample_gamma(shape, rate, rng);
}

// Dirichlet via normalized independent Gamma(alpha_h, 1) draws.
inline Eigen::VectorXd sample_dirichlet_via_gamma(const Eigen::VectorXd& alphas, Rng& rng) {
  if (alphas.size() == 0) throw ParameterError("sample_dirichlet_via_gamma: empty alphas");
  Eigen::VectorXd draw(alphas.size());
  for (Eigen::Index h = 0; h < alphas.size(); ++h) {
    if (!(alphas[h] > 0.0)) {
      throw ParameterError("sample_dirichlet_via_gamma: alphas must be positive");
    }
    draw[h] = sample_gamma(alphas[h], 1.0, rng);
  }
  return draw / draw.sum();
}

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian
// ---------------------------------------------------------------------------

// Density proportional to x^(p-1) exp(-(a x + b/x)/2) on x > 0.
struct GigParams {
  double p = 0.0;
  double a = 0.0;
  double b = 0.0;

  bool valid() const {
    if (!std::isfinite(p) || !std::isfinite(a) || !std::isfinite(b)) return false;
    return (a > 0.0 && b > 0.0) || (a > 0.0 && b == 0.0 && p > 0.0);
  }
};

// Ratio-of-uniforms sampler with the rejection region shifted to the mode.
// Valid for every admissible (p, a, b) with b > 0; b == 0 falls back to the
// exact Gamma(p, a/2) representation. The envelope is computed once per
// parameter set, so repeated draws at fixed parameters amortize the setup.
class GigSampler {
 public:
  explicit GigSampler(GigParams params) : params_(params) {
    if (!params_.valid()) {
      throw ParameterError("sample_gig: invalid (p, a, b) combination");
    }
    if (params_.b == 0.0) {
      gamma_path_ = true;
      return;
    }
    mode_ = mode(params_);
    log_f_mode_ = log_density_unnorm(params_, mode_);
    // v bounds solve d/dx [(x - m)^2 f(x)] = 0 on either side of the mode;
    // clearing denominators turns that into a cubic with sign changes at
    // exactly the two positive roots: C(0) = bm > 0, C(m) = -4m^2 < 0,
    // C(inf) > 0.
    const double left = bisect_cubic(0.0, mode_);
    double hi = 2.0 * mode_ + 2.0 * (std::abs(params_.p) + 2.0) / params_.a;
    while (stationary_cubic(hi) <= 0.0) hi *= 2.0;
    const double right = bisect_cubic(mode_, hi);
    v_lo_ = (left - mode_) * std::exp(0.5 * (log_density_unnorm(params_, left) - log_f_mode_));
    v_hi_ = (right - mode_) * std::exp(0.5 * (log_density_unnorm(params_, right) - log_f_mode_));
  }

  double draw(Rng& rng) const {
    if (gamma_path_) return sample_gamma(params_.p, 0.5 * params_.a, rng);
    for (;;) {
      const double u = rng.uniform();
      const double v = rng.uniform(v_lo_, v_hi_);
      const double x = mode_ + v / u;
      if (x <= 0.0) continue;
      if (2.0 * std::log(u) <= log_density_unnorm(params_, x) - log_f_mode_) return x;
    }
  }

  static double log_density_unnorm(const GigParams& q, double x) {
    return (q.p - 1.0) * std::log(x) - 0.5 * (q.a * x + q.b / x);
  }

  // Mode of the density; the p < 1 branch avoids cancellation when b is tiny.
  static double mode(const GigParams& q) {
    const double pm1 = q.p - 1.0;
    const double disc = std::sqrt(pm1 * pm1 + q.a * q.b);
    if (pm1 >= 0.0) return (pm1 + disc) / q.a;
    return q.b / (disc - pm1);
  }

 private:
  // a x^3 - (2p + 2 + a m) x^2 + (2(p-1)m - b) x + b m, the numerator of
  // d/dx log[(x-m)^2 f(x)] after clearing 2 x^2 (x - m).
  double stationary_cubic(double x) const {
    const double c2 = -(2.0 * params_.p + 2.0 + params_.a * mode_);
    const double c1 = 2.0 * (params_.p - 1.0) * mode_ - params_.b;
    const double c0 = params_.b * mode_;
    return ((params_.a * x + c2) * x + c1) * x + c0;
  }

  // Root of the stationary cubic in (lo, hi), bracketed by a sign change from
  // positive at lo to negative... the cubic flips sign exactly once on each
  // bracket, so plain bisection keyed on C(lo)'s sign converges.
  double bisect_cubic(double lo, double hi) const {
    const bool lo_positive = lo == 0.0 ? true : stationary_cubic(lo) > 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if ((stationary_cubic(mid) > 0.0) == lo_positive) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  GigParams params_;
  bool gamma_path_ = false;
  double mode_ = 0.0;
  double log_f_mode_ = 0.0;
  double v_lo_ = 0.0;
  double v_hi_ = 0.0;
};

inline double sample_gig(const GigParams& params, Rng& rng) {
  return GigSampler(params).draw(rng);
}

// ---------------------------------------------------------------------------
// Truncated normal
// ---------------------------------------------------------------------------

enum class TruncSide { above_zero, below_zero };

namespace detail {

// Standard normal truncated to (alpha, inf). Plain rejection while the
// acceptance rate is decent; Robert's shifted-exponential envelope in the
// tail, which stays exact and finite out to alpha of several hundred.
inline double std_normal_lower_trunc(double alpha, Rng& rng) {
  if (alpha < 0.45) {
    for (;;) {
      const double z = rng.normal();
      if (z >= alpha) return z;
    }
  }
  const double lambda = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
  for (;;) {
    const double z = alpha - std::log(rng.uniform()) / lambda;
    const double diff = z - lambda;
    if (std::log(rng.uniform()) <= -0.5 * diff * diff) return z;
  }
}

}  // namespace detail

// N(mean, sd^2) conditioned to (0, inf) or (-inf, 0].
inline double sample_truncated_normal(double mean, double sd, TruncSide side, Rng& rng) {
  if (!(sd > 0.0)) throw ParameterError("sample_truncated_normal: sd must be positive");
  if (side == TruncSide::above_zero) {
    const double alpha = -mean / sd;
    return mean + sd * detail::std_normal_lower_trunc(alpha, rng);
  }
  const double alpha = mean / sd;
  return mean - sd * detail::std_normal_lower_trunc(alpha, rng);
}

// ---------------------------------------------------------------------------
// Multivariate normal
// ---------------------------------------------------------------------------

// Cholesky factor with the SPD jitter policy: one shot of 1e-10 * (trace/k)
// added to the diagonal if the first factorization fails, then hard error
// carrying the minimum eigenvalue. Conditional covariances in the sampler are
// SPD in exact arithmetic, so the jitter only absorbs roundoff.
class MvnSampler {
 public:
  explicit MvnSampler(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      const double jitter = 1e-10 * cov.trace() / static_cast<double>(cov.rows());
      Eigen::MatrixXd bumped = cov;
      bumped.diagonal().array() += jitter;
      llt.compute(bumped);
      if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
        const double min_eig = es.eigenvalues().minCoeff();
        throw NumericalError(
            "sample_mvn: covariance not SPD after jitter (min eigenvalue " +
                std::to_string(min_eig) + ")",
            min_eig);
      }
    }
    chol_lower_ = llt.matrixL();
  }

  const Eigen::MatrixXd& chol_lower() const { return chol_lower_; }

  Eigen::VectorXd draw(const Eigen::VectorXd& mean, Rng& rng) const {
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean + chol_lower_ * z;
  }

 private:
  Eigen::MatrixXd chol_lower_;
};

inline Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                  Rng& rng) {
  return MvnSampler(cov).draw(mean, rng);
}

}  // namespace hifm
