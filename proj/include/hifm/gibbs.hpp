#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hifm/data.hpp"
#include "hifm/distributions.hpp"
#include "hifm/errors.hpp"
#include "hifm/model.hpp"
#include "hifm/parallel.hpp"
#include "hifm/rng.hpp"

namespace hifm {

/***********************************************************************************/
/* Conditional-posterior algebra (pure, oracle-checkable)                           */
/***********************************************************************************/

struct GammaPosterior {
  double shape = 0.0;
  double rate = 0.0;
};

// Factor scores: f_i ~ N(Sigma_f Lambda' Sigma^-1 (z_i - lambda_int), Sigma_f)
// with Sigma_f = (I + Lambda' Sigma^-1 Lambda)^-1. The intercept column enters
// as a fixed offset, never as a random coordinate.
struct FactorConditional {
  Eigen::MatrixXd cov;        // Sigma_f, k x k
  Eigen::MatrixXd projector;  // Sigma_f Lambda' Sigma^-1, k x p
  Eigen::MatrixXd sampler;    // B with B B' = Sigma_f
  Eigen::VectorXd offset;     // intercept column
};

inline FactorConditional factor_conditional(const GroupState& g) {
  const int k = g.k_star();
  const auto lambda = g.lambda.leftCols(k);
  const Eigen::VectorXd inv_sigma2 = g.sigma2.cwiseInverse();
  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(k, k);
  precision.selfadjointView<Eigen::Lower>().rankUpdate(
      (lambda.array().colwise() * inv_sigma2.array().sqrt()).matrix().transpose());
  precision = precision.selfadjointView<Eigen::Lower>();
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("factor_conditional: precision not SPD");
  }
  FactorConditional fc;
  fc.cov = llt.solve(Eigen::MatrixXd::Identity(k, k));
  fc.projector = llt.solve(lambda.transpose() * inv_sigma2.asDiagonal());
  fc.sampler = llt.matrixL().transpose().solve(Eigen::MatrixXd::Identity(k, k));
  fc.offset = g.lambda.col(k);
  return fc;
}

// One loadings row: lambda_lj ~ N(Sigma F' z / sigma2, Sigma) with
// Sigma = (D^-1 + F'F / sigma2)^-1, F carrying the appended 1s column and
// D^-1 the per-coordinate prior precisions (phi/w, then 1 for the intercept).
struct LoadingsConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd sampler;  // B with B B' = cov
};

inline LoadingsConditional loadings_conditional(const Eigen::MatrixXd& faug_gram,
                                                const Eigen::VectorXd& faug_t_z,
                                                double sigma2_j,
                                                const Eigen::VectorXd& prior_precision) {
  const Eigen::Index m = prior_precision.size();
  Eigen::MatrixXd precision = faug_gram / sigma2_j;
  precision.diagonal() += prior_precision;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("loadings_conditional: precision not SPD");
  }
  LoadingsConditional lc;
  lc.mean = llt.solve(faug_t_z / sigma2_j);
  lc.cov = llt.solve(Eigen::MatrixXd::Identity(m, m));
  lc.sampler = llt.matrixL().transpose().solve(Eigen::MatrixXd::Identity(m, m));
  return lc;
}

// Idiosyncratic precision: 1/sigma2_lj ~ Gamma(a + n_l/2, b + rss/2). With the
// default a = b = v/2 this is the conjugate IG(v/2, v/2) update.
inline GammaPosterior sigma2_conditional(double prior_shape, double prior_rate, long n_l,
                                         double rss) {
  return {prior_shape + 0.5 * static_cast<double>(n_l), prior_rate + 0.5 * rss};
}

// Local precision phi_jh ~ Gamma(tau/2 + L/2, tau/2 + sum_l lambda^2/(2 w)).
// The squared loading is required by normal-gamma conjugacy.
inline GammaPosterior phi_conditional(double tau, int n_groups, double sum_lambda2_over_w) {
  return {0.5 * tau + 0.5 * static_cast<double>(n_groups), 0.5 * tau + 0.5 * sum_lambda2_over_w};
}

// Stick weight w_lh ~ GIG(alpha_l pi0_h - p/2, 2, lambda_lh' Phi_h lambda_lh).
// A zero quadratic form with nonpositive index would be improper; the floor
// produces the intended near-degenerate draw at tiny w instead.
inline GigParams weight_conditional(double alpha_l, double pi0_h, int p_rows, double b_w) {
  GigParams q;
  q.p = alpha_l * pi0_h - 0.5 * static_cast<double>(p_rows);
  q.a = 2.0;
  q.b = b_w;
  if (q.b < 1e-12 && q.p <= 0.0) q.b = 1e-12;
  return q;
}

// log P(pi0 | w) up to an additive constant: Dirichlet(alpha0/k) prior plus
// the Gamma(alpha_l pi0_h, 1) likelihood of every unnormalized weight.
inline double pi0_log_posterior(const Eigen::VectorXd& pi0,
                                const std::vector<Eigen::VectorXd>& w_groups, double alpha0,
                                const std::vector<double>& alpha_per_group) {
  const int k = static_cast<int>(pi0.size());
  double lp = 0.0;
  for (int h = 0; h < k; ++h) {
    if (!(pi0[h] > 0.0)) return -std::numeric_limits<double>::infinity();
    lp += (alpha0 / k - 1.0) * std::log(pi0[h]);
  }
  for (std::size_t l = 0; l < w_groups.size(); ++l) {
    const double alpha_l = alpha_per_group.at(l);
    for (int h = 0; h < k; ++h) {
      const double shape = alpha_l * pi0[h];
      lp += shape * std::log(w_groups[l][h]) - std::lgamma(shape);
    }
  }
  return lp;
}

// Log acceptance ratio for the pi0 move: posterior ratio times the proposal
// density ratio. persist_theta evaluates the componentwise Gamma proposal on
// the raw theta vectors; renormalize evaluates the induced Dirichlet proposal
// on the simplex.
inline double pi0_mh_log_ratio(const Eigen::VectorXd& theta_cur, const Eigen::VectorXd& pi_cur,
                               const Eigen::VectorXd& theta_prop, const Eigen::VectorXd& pi_prop,
                               const std::vector<Eigen::VectorXd>& w_groups, double alpha0,
                               const std::vector<double>& alpha_per_group, double c,
                               Pi0Anchor anchor) {
  double log_accept = pi0_log_posterior(pi_prop, w_groups, alpha0, alpha_per_group) -
                      pi0_log_posterior(pi_cur, w_groups, alpha0, alpha_per_group);
  if (anchor == Pi0Anchor::persist_theta) {
    for (Eigen::Index h = 0; h < theta_cur.size(); ++h) {
      log_accept += log_gamma_pdf(theta_cur[h], theta_prop[h] * c, c) -
                    log_gamma_pdf(theta_prop[h], theta_cur[h] * c, c);
    }
  } else {
    const double kd = static_cast<double>(pi_cur.size());
    log_accept += log_dirichlet_pdf(pi_cur, c * kd * pi_prop) -
                  log_dirichlet_pdf(pi_prop, c * kd * pi_cur);
  }
  return log_accept;
}

/***********************************************************************************/
/* Full kernel                                                                     */
/***********************************************************************************/

class GibbsSampler {
 public:
  GibbsSampler(const Dataset& data, Hyperparameters hyper, RngHandle rng, int threads = 1)
      : data_(&data), hyper_(std::move(hyper)), rng_(rng), threads_(threads) {
    hyper_.validate(data.n_groups());
    k_ = hyper_.resolve_k_star(data.p());
    row_local_.resize(data.n());
    for (int l = 0; l < data.n_groups(); ++l) {
      const auto& rows = data.rows_of_group(l);
      for (std::size_t i = 0; i < rows.size(); ++i) row_local_[rows[i]] = static_cast<int>(i);
    }
    binary_cols_.clear();
    continuous_cols_.clear();
    for (int j = 0; j < data.p(); ++j) {
      (data.is_binary(j) ? binary_cols_ : continuous_cols_).push_back(j);
    }
  }

  int k_star() const { return k_; }
  const MhDiagnostics& diagnostics() const { return mh_; }

  ChainState init() const { return init_from_prior(hyper_, *data_, rng_); }

  // Binary cells: z ~ N(lambda_lj . [f_i, 1], 1) truncated to the side of the
  // observed value. Rows are independent and keyed by global row index.
  void update_probit_latents(ChainState& state, long iter) const {
    if (binary_cols_.empty()) return;
    const Eigen::MatrixXd& z_obs = data_->z();
    parallel_for(data_->n(), threads_, [&](std::size_t row) {
      const int gi = static_cast<int>(row);
      const GroupState& g = state.groups[data_->group()[gi] - 1];
      Rng rng = substream_rng(rng_, kBlockProbit, iter, row);
      Eigen::VectorXd faug(k_ + 1);
      faug.head(k_) = g.factors.row(row_local_[gi]).transpose();
      faug[k_] = 1.0;
      for (int j : binary_cols_) {
        const double m = g.lambda.row(j).dot(faug);
        const TruncSide side =
            z_obs(gi, j) > 0.5 ? TruncSide::above_zero : TruncSide::below_zero;
        state.z_latent(gi, j) = sample_truncated_normal(m, 1.0, side, rng);
      }
    });
  }

  void update_factors(ChainState& state, long iter) const {
    for (int l = 0; l < data_->n_groups(); ++l) {
      GroupState& g = state.groups[l];
      const FactorConditional fc = factor_conditional(g);
      const auto& rows = data_->rows_of_group(l);
      parallel_for(rows.size(), threads_, [&](std::size_t i) {
        const int gi = rows[i];
        Rng rng = substream_rng(rng_, kBlockFactors, iter, static_cast<std::uint64_t>(gi));
        const Eigen::VectorXd resid = state.z_latent.row(gi).transpose() - fc.offset;
        Eigen::VectorXd noise(k_);
        for (int h = 0; h < k_; ++h) noise[h] = rng.normal();
        g.factors.row(i) = (fc.projector * resid + fc.sampler * noise).transpose();
      });
    }
  }

  void update_loadings(ChainState& state, long iter) const {
    for (int l = 0; l < data_->n_groups(); ++l) {
      GroupState& g = state.groups[l];
      const auto& rows = data_->rows_of_group(l);
      const Eigen::MatrixXd faug = augmented_factors(g);
      const Eigen::MatrixXd gram = faug.transpose() * faug;
      Eigen::VectorXd z_col(rows.size());
      Eigen::VectorXd prior_precision(k_ + 1);
      for (int j = 0; j < data_->p(); ++j) {
        for (std::size_t i = 0; i < rows.size(); ++i) z_col[i] = state.z_latent(rows[i], j);
        for (int h = 0; h < k_; ++h) prior_precision[h] = state.shared.phi(j, h) / g.w[h];
        prior_precision[k_] = 1.0;  // intercept coordinate
        const LoadingsConditional lc = loadings_conditional(
            gram, faug.transpose() * z_col, g.sigma2[j], prior_precision);
        Rng rng = substream_rng(rng_, kBlockLoadings, iter, static_cast<std::uint64_t>(l),
                                static_cast<std::uint64_t>(j));
        Eigen::VectorXd noise(k_ + 1);
        for (int h = 0; h <= k_; ++h) noise[h] = rng.normal();
        g.lambda.row(j) = (lc.mean + lc.sampler * noise).transpose();
      }
    }
  }

  // Continuous columns only; binary variances stay pinned at 1.
  void update_sigma2(ChainState& state, long iter) const {
    for (int l = 0; l < data_->n_groups(); ++l) {
      GroupState& g = state.groups[l];
      const auto& rows = data_->rows_of_group(l);
      const Eigen::MatrixXd faug = augmented_factors(g);
      Rng rng = substream_rng(rng_, kBlockSigma, iter, static_cast<std::uint64_t>(l));
      Eigen::VectorXd z_col(rows.size());
      for (int j : continuous_cols_) {
        for (std::size_t i = 0; i < rows.size(); ++i) z_col[i] = state.z_latent(rows[i], j);
        const double rss = (z_col - faug * g.lambda.row(j).transpose()).squaredNorm();
        const GammaPosterior post = sigma2_conditional(
            hyper_.sigma_shape, hyper_.sigma_rate, static_cast<long>(rows.size()), rss);
        g.sigma2[j] = 1.0 / sample_gamma(post.shape, post.rate, rng);
      }
    }
  }

  void update_phi(ChainState& state, long iter) const {
    Rng rng = substream_rng(rng_, kBlockPhi, iter);
    const int L = data_->n_groups();
    for (int j = 0; j < data_->p(); ++j) {
      for (int h = 0; h < k_; ++h) {
        double s = 0.0;
        for (int l = 0; l < L; ++l) {
          const double lam = state.groups[l].lambda(j, h);
          s += lam * lam / state.groups[l].w[h];
        }
        const GammaPosterior post = phi_conditional(hyper_.tau, L, s);
        state.shared.phi(j, h) = sample_gamma(post.shape, post.rate, rng);
      }
    }
  }

  void update_weights(ChainState& state, long iter) const {
    Rng rng = substream_rng(rng_, kBlockWeights, iter);
    for (int l = 0; l < data_->n_groups(); ++l) {
      GroupState& g = state.groups[l];
      for (int h = 0; h < k_; ++h) {
        double b_w = 0.0;
        for (int j = 0; j < data_->p(); ++j) {
          const double lam = g.lambda(j, h);
          b_w += state.shared.phi(j, h) * lam * lam;
        }
        const GigParams q =
            weight_conditional(hyper_.alpha(l), state.shared.pi0[h], data_->p(), b_w);
        g.w[h] = sample_gig(q, rng);
      }
    }
  }

  // Metropolis-Hastings on pi0: componentwise Gamma(theta_h C, C) proposal,
  // normalized. In renormalize mode the anchor is reset to k* pi0 after every
  // step, making the induced simplex proposal an exact Dirichlet(C theta).
  void update_pi0(ChainState& state, long iter) {
    Rng rng = substream_rng(rng_, kBlockPi0, iter);
    const double C = hyper_.mh_tuning_c;
    const Eigen::VectorXd& theta = state.shared.theta0;
    Eigen::VectorXd theta_prop(k_);
    bool degenerate = false;
    for (int h = 0; h < k_; ++h) {
      theta_prop[h] = sample_gamma(theta[h] * C, C, rng);
      if (!(theta_prop[h] > 0.0) || !std::isfinite(theta_prop[h])) degenerate = true;
    }
    const double accept_u = rng.uniform();
    ++mh_.proposals;
    if (degenerate) return;

    std::vector<Eigen::VectorXd> w_groups;
    std::vector<double> alphas;
    w_groups.reserve(state.groups.size());
    for (std::size_t l = 0; l < state.groups.size(); ++l) {
      w_groups.push_back(state.groups[l].w);
      alphas.push_back(hyper_.alpha(static_cast<int>(l)));
    }
    const Eigen::VectorXd pi_prop = theta_prop / theta_prop.sum();
    const double log_accept =
        pi0_mh_log_ratio(theta, state.shared.pi0, theta_prop, pi_prop, w_groups, hyper_.alpha0,
                         alphas, C, hyper_.pi0_anchor);
    if (std::log(accept_u) < log_accept) {
      state.shared.pi0 = pi_prop;
      state.shared.theta0 = hyper_.pi0_anchor == Pi0Anchor::persist_theta
                                ? theta_prop
                                : Eigen::VectorXd(pi_prop * static_cast<double>(k_));
      ++mh_.accepts;
    }
  }

  void sweep(ChainState& state, long iter) {
    run_block(iter, "probit_latents", [&] { update_probit_latents(state, iter); });
    run_block(iter, "factors", [&] { update_factors(state, iter); });
    run_block(iter, "loadings", [&] { update_loadings(state, iter); });
    run_block(iter, "sigma2", [&] { update_sigma2(state, iter); });
    run_block(iter, "phi", [&] { update_phi(state, iter); });
    run_block(iter, "weights", [&] { update_weights(state, iter); });
    run_block(iter, "pi0", [&] { update_pi0(state, iter); });
  }

  PosteriorChain run(std::ostream* progress = nullptr) {
    ChainState state = init();
    PosteriorChain chain;
    chain.hyper = hyper_;
    chain.k_star = k_;
    chain.dataset_fingerprint = data_->fingerprint(rng_.seed);
    chain.draws.reserve(hyper_.n_retained());
    const bool keep_latents = data_->any_binary();
    for (long iter = 0; iter < hyper_.n_iter; ++iter) {
      sweep(state, iter);
      const long r = iter - hyper_.n_burnin;
      if (r >= 0 && r % hyper_.thin == 0) {
        audit_retained(state);
        ChainState draw = state;
        if (!keep_latents) draw.z_latent.resize(0, 0);
        chain.draws.push_back(std::move(draw));
      }
      if (progress && hyper_.progress_every > 0 && (iter + 1) % hyper_.progress_every == 0) {
        (*progress) << "iteration " << (iter + 1) << "/" << hyper_.n_iter
                    << "  mh_acceptance=" << mh_.acceptance_rate() << "\n";
      }
    }
    chain.mh = mh_;
    return chain;
  }

  // Sign agreement between observed binary values and the latent matrix.
  void audit_retained(const ChainState& state) {
    for (int j : binary_cols_) {
      for (int i = 0; i < data_->n(); ++i) {
        ++mh_.checked_binary_cells;
        const bool observed_one = data_->z()(i, j) > 0.5;
        const bool latent_positive = state.z_latent(i, j) > 0.0;
        if (observed_one != latent_positive) ++mh_.sign_violations;
      }
    }
  }

 private:
  static constexpr std::uint64_t kBlockProbit = 0x11;
  static constexpr std::uint64_t kBlockFactors = 0x12;
  static constexpr std::uint64_t kBlockLoadings = 0x13;
  static constexpr std::uint64_t kBlockSigma = 0x14;
  static constexpr std::uint64_t kBlockPhi = 0x15;
  static constexpr std::uint64_t kBlockWeights = 0x16;
  static constexpr std::uint64_t kBlockPi0 = 0x17;

  Eigen::MatrixXd augmented_factors(const GroupState& g) const {
    Eigen::MatrixXd faug(g.factors.rows(), k_ + 1);
    faug.leftCols(k_) = g.factors;
    faug.col(k_).setOnes();
    return faug;
  }

  template <typename Fn>
  void run_block(long iter, const char* name, Fn&& fn) {
    try {
      fn();
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(iter) + ", block " + name + ": " +
                               e.what(),
                           e.min_eigenvalue());
    }
  }

  const Dataset* data_;
  Hyperparameters hyper_;
  RngHandle rng_;
  int threads_;
  int k_;
  MhDiagnostics mh_;
  std::vector<int> row_local_;
  std::vector<int> binary_cols_;
  std::vector<int> continuous_cols_;
};

inline PosteriorChain run_chain(const Dataset& data, const Hyperparameters& hyper, RngHandle rng,
                                int threads = 1, std::ostream* progress = nullptr) {
  GibbsSampler sampler(data, hyper, rng, threads);
  return sampler.run(progress);
}

}  // namespace hifm
