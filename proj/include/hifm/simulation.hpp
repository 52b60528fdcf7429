#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "hifm/data.hpp"
#include "hifm/distributions.hpp"
#include "hifm/errors.hpp"
#include "hifm/model.hpp"
#include "hifm/regression.hpp"
#include "hifm/rng.hpp"

namespace hifm {

// Two-population synthetic generator. Column 0 is the outcome; its loadings
// row is zeroed and then planted with +1/-1 at two distinct factor positions,
// shared by both populations and resampled per replication.
struct SimConfig {
  int p = 50;        // total variables including the outcome
  int k = 10;        // true number of factors
  int n = 1000;      // rows, population 1 first
  int n_target = 400;
  std::vector<int> binary_cols;  // 0-based; include 0 to dichotomize the outcome
  double tau = 3.0;
  double alpha0 = 15.0;
  double alpha_l = 15.0;
  // Idiosyncratic variances: literal IG(1, 0.33) draw (reciprocal of a
  // Gamma(1, rate 0.33)); note this prior has no finite mean.
  double sigma_shape = 1.0;
  double sigma_rate = 0.33;

  void validate() const {
    if (p < 3) throw ValidationError("simulation: p must be >= 3");
    if (k < 1 || k >= p) throw ValidationError("simulation: need 1 <= k < p");
    if (n_target < 1 || n_target >= n) throw ValidationError("simulation: need 1 <= n_target < n");
    for (int j : binary_cols) {
      if (j < 0 || j >= p) {
        throw ValidationError("simulation: binary column index " + std::to_string(j) +
                              " out of range");
      }
    }
  }
};

struct SyntheticTruth {
  std::vector<Eigen::MatrixXd> lambda;   // per population, p x k
  std::vector<Eigen::VectorXd> w;        // per population, k
  std::vector<Eigen::VectorXd> sigma2;   // per population, p
  std::vector<Eigen::MatrixXd> omega;    // per population, p x p
  std::vector<Eigen::VectorXd> theta;    // per population, (p-1) outcome coefficients
  std::vector<Eigen::MatrixXd> factors;  // factor scores of the generated rows
  Eigen::VectorXd pi0;
  Eigen::MatrixXd phi;                   // p x k
  SimConfig config;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<ColumnSpec> sim_schema(const SimConfig& config) {
  std::vector<ColumnSpec> schema(config.p);
  for (int j = 0; j < config.p; ++j) {
    schema[j].name = j == 0 ? "y" : "x" + std::to_string(j);
    schema[j].role = j == 0 ? ColumnRole::outcome : ColumnRole::covariate;
    schema[j].type = ColumnType::continuous;
  }
  for (int j : config.binary_cols) schema[j].type = ColumnType::binary;
  return schema;
}

}  // namespace detail

// Additional rows from an existing truth (held-out test sets). Rows are drawn
// as z = Lambda_l f + eps, which retains the true factor scores; binary
// columns threshold the latent Gaussian at zero.
inline Dataset sample_rows(const SyntheticTruth& truth, int n, int n_target, RngHandle rng,
                           std::vector<Eigen::MatrixXd>* factors_out = nullptr) {
  const SimConfig& config = truth.config;
  if (n_target < 1 || n_target >= n) throw ValidationError("sample_rows: need 1 <= n_target < n");
  Eigen::MatrixXd z(n, config.p);
  Eigen::VectorXi group(n);
  if (factors_out) factors_out->assign(2, Eigen::MatrixXd());
  for (int l = 0; l < 2; ++l) {
    const int lo = l == 0 ? 0 : n_target;
    const int hi = l == 0 ? n_target : n;
    if (factors_out) (*factors_out)[l].resize(hi - lo, config.k);
    for (int i = lo; i < hi; ++i) {
      Rng row_rng = substream_rng(rng, 0x21, static_cast<std::uint64_t>(i));
      Eigen::VectorXd f(config.k);
      for (int h = 0; h < config.k; ++h) f[h] = row_rng.normal();
      if (factors_out) (*factors_out)[l].row(i - lo) = f.transpose();
      for (int j = 0; j < config.p; ++j) {
        z(i, j) = truth.lambda[l].row(j).dot(f) +
                  std::sqrt(truth.sigma2[l][j]) * row_rng.normal();
      }
      group[i] = l + 1;
    }
  }
  for (int j : config.binary_cols) {
    z.col(j) = (z.col(j).array() > 0.0).cast<double>();
  }
  return Dataset(std::move(z), detail::sim_schema(config), std::move(group));
}

inline std::pair<Dataset, SyntheticTruth> generate(const SimConfig& config, RngHandle rng) {
  config.validate();
  SyntheticTruth truth;
  truth.config = config;
  truth.seed = rng.seed;

  Rng top_rng = substream_rng(rng, 0x10);
  truth.pi0 = sample_dirichlet_via_gamma(
      Eigen::VectorXd::Constant(config.k, config.alpha0 / config.k), top_rng);
  truth.phi.resize(config.p, config.k);
  for (int j = 0; j < config.p; ++j) {
    for (int h = 0; h < config.k; ++h) {
      truth.phi(j, h) = sample_gamma(config.tau / 2.0, config.tau / 2.0, top_rng);
    }
  }

  // Outcome-row planting: two distinct factor positions, +1 then -1.
  const int pos1 = static_cast<int>(top_rng.uniform() * config.k) % config.k;
  int pos2 = static_cast<int>(top_rng.uniform() * (config.k - 1)) % (config.k - 1);
  if (pos2 >= pos1) ++pos2;

  truth.lambda.resize(2);
  truth.w.resize(2);
  truth.sigma2.resize(2);
  truth.omega.resize(2);
  truth.theta.resize(2);
  for (int l = 0; l < 2; ++l) {
    Rng pop_rng = substream_rng(rng, 0x11, static_cast<std::uint64_t>(l));
    truth.w[l].resize(config.k);
    for (int h = 0; h < config.k; ++h) {
      truth.w[l][h] = sample_gamma(config.alpha_l * truth.pi0[h], 1.0, pop_rng);
    }
    truth.lambda[l].resize(config.p, config.k);
    for (int j = 0; j < config.p; ++j) {
      for (int h = 0; h < config.k; ++h) {
        truth.lambda[l](j, h) =
            pop_rng.normal() * std::sqrt(truth.w[l][h] / truth.phi(j, h));
      }
    }
    truth.lambda[l].row(0).setZero();
    truth.lambda[l](0, pos1) = 1.0;
    truth.lambda[l](0, pos2) = -1.0;
    truth.sigma2[l].resize(config.p);
    for (int j = 0; j < config.p; ++j) {
      truth.sigma2[l][j] = sample_inverse_gamma(config.sigma_shape, config.sigma_rate, pop_rng);
    }

    GroupState g;
    g.lambda.resize(config.p, config.k + 1);
    g.lambda.leftCols(config.k) = truth.lambda[l];
    g.lambda.col(config.k).setZero();
    g.w = truth.w[l];
    g.sigma2 = truth.sigma2[l];
    truth.omega[l] = assemble_covariance(g);
    truth.theta[l] = coefficients_from_draw(g, 1).col(0);
  }

  Dataset data = sample_rows(truth, config.n, config.n_target, substream(rng, 0x12),
                             &truth.factors);
  return {std::move(data), std::move(truth)};
}

// Comparison baseline for count_active_factors: true weights over threshold.
inline std::vector<int> true_factor_count(const SyntheticTruth& truth, double threshold = 0.05) {
  std::vector<int> counts;
  for (const auto& w : truth.w) {
    counts.push_back(static_cast<int>((w.array() > threshold).count()));
  }
  return counts;
}

}  // namespace hifm
