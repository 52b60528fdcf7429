#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hifm/data.hpp"
#include "hifm/distributions.hpp"
#include "hifm/errors.hpp"
#include "hifm/rng.hpp"

namespace hifm {

// Truncation default: round(5 log p), floored at 2.
inline int default_k_star(int p) {
  if (p < 2) throw ParameterError("default_k_star: p must be >= 2");
  const int k = static_cast<int>(std::lround(5.0 * std::log(static_cast<double>(p))));
  return std::max(k, 2);
}

// How the unnormalized pi0 anchor evolves across Metropolis-Hastings steps.
// persist_theta keeps the raw accepted theta vector between iterations;
// renormalize re-anchors theta = k* pi0 after every step, which makes the
// proposal an exact Dirichlet kernel on the simplex.
enum class Pi0Anchor { persist_theta, renormalize };

struct Hyperparameters {
  double alpha0 = 15.0;
  std::vector<double> alpha_l = {15.0};  // broadcast to every population if length 1
  double tau = 3.0;
  double sigma_shape = 1.5;  // IG(a, b) on idiosyncratic variances; v = 2a
  double sigma_rate = 1.5;
  int k_star = 0;  // 0 resolves to default_k_star(p) at fit time
  double mh_tuning_c = 50.0;
  long n_iter = 2000;
  long n_burnin = 1000;
  long thin = 5;
  double weight_threshold = 0.05;
  long progress_every = 0;
  Pi0Anchor pi0_anchor = Pi0Anchor::renormalize;

  void validate(int n_groups) const {
    if (!(alpha0 > 0.0)) throw ParameterError("hyperparameters: alpha0 must be positive");
    if (alpha_l.empty()) throw ParameterError("hyperparameters: alpha_l must be nonempty");
    for (double a : alpha_l) {
      if (!(a > 0.0)) throw ParameterError("hyperparameters: alpha_l entries must be positive");
    }
    if (alpha_l.size() != 1 && static_cast<int>(alpha_l.size()) != n_groups) {
      throw ParameterError("hyperparameters: alpha_l must have one entry or one per population");
    }
    if (!(tau > 0.0)) throw ParameterError("hyperparameters: tau must be positive");
    if (!(sigma_shape > 0.0) || !(sigma_rate > 0.0)) {
      throw ParameterError("hyperparameters: sigma prior shape/rate must be positive");
    }
    if (k_star < 0) throw ParameterError("hyperparameters: k_star must be >= 1 (or 0 for default)");
    if (!(mh_tuning_c > 0.0)) throw ParameterError("hyperparameters: mh_tuning_c must be positive");
    if (n_iter < 1 || n_burnin < 0 || n_burnin >= n_iter) {
      throw ParameterError("hyperparameters: need 0 <= n_burnin < n_iter");
    }
    if (thin < 1) throw ParameterError("hyperparameters: thin must be >= 1");
    if (!(weight_threshold > 0.0)) {
      throw ParameterError("hyperparameters: weight_threshold must be positive");
    }
  }

  double alpha(int l) const { return alpha_l.size() == 1 ? alpha_l[0] : alpha_l.at(l); }

  int resolve_k_star(int p) const { return k_star > 0 ? k_star : default_k_star(p); }

  long n_retained() const { return (n_iter - n_burnin) / thin; }
};

// Quantities shared across populations: the top-level stick proportions and
// the local precisions. theta0 is the unnormalized anchor the pi0 proposal is
// centered on; pi0 is always theta0 normalized.
struct SharedState {
  Eigen::VectorXd pi0;    // k*
  Eigen::VectorXd theta0; // k*
  Eigen::MatrixXd phi;    // p x k*
};

// Per-population state. lambda's last column is the intercept column: prior
// N(0,1) per entry, excluded from the stick weights and the factor count.
struct GroupState {
  Eigen::MatrixXd lambda;   // p x (k*+1)
  Eigen::VectorXd w;        // k*
  Eigen::VectorXd sigma2;   // p; pinned to 1 for binary columns
  Eigen::MatrixXd factors;  // n_l x k*

  int k_star() const { return static_cast<int>(w.size()); }
};

struct ChainState {
  SharedState shared;
  std::vector<GroupState> groups;
  // Probit-augmented copy of the data: binary cells hold the latent reals,
  // continuous cells always mirror the observed values.
  Eigen::MatrixXd z_latent;
};

struct MhDiagnostics {
  long proposals = 0;
  long accepts = 0;
  // Binary-cell sign agreement audited at every retained draw.
  long checked_binary_cells = 0;
  long sign_violations = 0;

  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepts) / proposals;
  }
};

struct PosteriorChain {
  std::vector<ChainState> draws;
  Hyperparameters hyper;
  std::uint64_t dataset_fingerprint = 0;
  MhDiagnostics mh;
  int k_star = 0;
};

// One draw from the full prior, including the probit initialization of the
// latent matrix (one-sided truncated normal at mean 0 for binary cells).
inline ChainState init_from_prior(const Hyperparameters& hyper, const Dataset& data,
                                  RngHandle rng) {
  hyper.validate(data.n_groups());
  const int p = data.p();
  const int L = data.n_groups();
  const int k = hyper.resolve_k_star(p);

  ChainState state;
  Rng shared_rng = substream_rng(rng, 0x101);
  state.shared.pi0 = sample_dirichlet_via_gamma(
      Eigen::VectorXd::Constant(k, hyper.alpha0 / k), shared_rng);
  state.shared.theta0 = state.shared.pi0 * static_cast<double>(k);
  state.shared.phi.resize(p, k);
  for (int j = 0; j < p; ++j) {
    for (int h = 0; h < k; ++h) {
      state.shared.phi(j, h) = sample_gamma(hyper.tau / 2.0, hyper.tau / 2.0, shared_rng);
    }
  }

  state.groups.resize(L);
  for (int l = 0; l < L; ++l) {
    GroupState& g = state.groups[l];
    Rng grng = substream_rng(rng, 0x102, static_cast<std::uint64_t>(l));
    g.w.resize(k);
    for (int h = 0; h < k; ++h) {
      g.w[h] = sample_gamma(hyper.alpha(l) * state.shared.pi0[h], 1.0, grng);
    }
    g.lambda.resize(p, k + 1);
    for (int j = 0; j < p; ++j) {
      for (int h = 0; h < k; ++h) {
        g.lambda(j, h) = grng.normal() * std::sqrt(g.w[h] / state.shared.phi(j, h));
      }
      g.lambda(j, k) = grng.normal();  // intercept column
    }
    g.sigma2.resize(p);
    for (int j = 0; j < p; ++j) {
      g.sigma2[j] = data.is_binary(j)
                        ? 1.0
                        : sample_inverse_gamma(hyper.sigma_shape, hyper.sigma_rate, grng);
    }
    const int n_l = static_cast<int>(data.rows_of_group(l).size());
    g.factors.resize(n_l, k);
    for (int i = 0; i < n_l; ++i) {
      for (int h = 0; h < k; ++h) g.factors(i, h) = grng.normal();
    }
  }

  state.z_latent = data.z();
  for (int i = 0; i < data.n(); ++i) {
    Rng row_rng = substream_rng(rng, 0x103, static_cast<std::uint64_t>(i));
    for (int j = 0; j < p; ++j) {
      if (!data.is_binary(j)) continue;
      const TruncSide side =
          data.z()(i, j) > 0.5 ? TruncSide::above_zero : TruncSide::below_zero;
      state.z_latent(i, j) = sample_truncated_normal(0.0, 1.0, side, row_rng);
    }
  }
  return state;
}

// Marginal covariance Omega = Lambda Lambda^T + diag(sigma2) for one
// population. The intercept column contributes a mean, not covariance, and is
// excluded. The result is exactly symmetric by construction.
inline Eigen::MatrixXd assemble_covariance(const GroupState& g) {
  const int p = static_cast<int>(g.lambda.rows());
  const int k = g.k_star();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(p, p);
  omega.selfadjointView<Eigen::Lower>().rankUpdate(g.lambda.leftCols(k));
  omega = omega.selfadjointView<Eigen::Lower>();
  omega.diagonal() += g.sigma2;
  return omega;
}

}  // namespace hifm
