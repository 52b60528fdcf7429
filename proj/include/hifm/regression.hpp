#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "hifm/data.hpp"
#include "hifm/distributions.hpp"
#include "hifm/errors.hpp"
#include "hifm/gibbs.hpp"
#include "hifm/model.hpp"
#include "hifm/rng.hpp"

namespace hifm {

// Everything prediction needs from a finished fit: the retained draws, the
// training schema, and the training standardization constants.
struct FittedModel {
  PosteriorChain chain;
  std::vector<ColumnSpec> schema;
  Scaling scaling;
};

// Group-specific regression coefficients from one draw's marginal covariance:
// theta = Omega_XX^-1 Omega_XY, solved column-wise per outcome, never by
// explicit inverse. Returns p_x x p_y (one coefficient column per outcome).
inline Eigen::MatrixXd coefficients_from_draw(const GroupState& g, int n_outcomes) {
  const Eigen::MatrixXd omega = assemble_covariance(g);
  const int p = static_cast<int>(omega.rows());
  const int p_y = n_outcomes;
  const int p_x = p - p_y;
  if (p_x <= 0) throw ParameterError("coefficients_from_draw: no covariate block");
  const Eigen::MatrixXd omega_xx = omega.bottomRightCorner(p_x, p_x);
  const Eigen::MatrixXd omega_xy = omega.bottomLeftCorner(p_x, p_y);
  Eigen::LLT<Eigen::MatrixXd> llt(omega_xx);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("coefficients_from_draw: Omega_XX not SPD");
  }
  return llt.solve(omega_xy);
}

// Map standardized-scale coefficients back to the original data scale:
// theta_raw[j][m] = theta_std[j][m] * scale_y[m] / scale_x[j].
inline Eigen::MatrixXd destandardize_coefficients(const Eigen::MatrixXd& theta,
                                                  const Scaling& scaling, int n_outcomes) {
  Eigen::MatrixXd out = theta;
  for (Eigen::Index j = 0; j < theta.rows(); ++j) {
    for (Eigen::Index m = 0; m < theta.cols(); ++m) {
      out(j, m) *= scaling.scale[n_outcomes + j] > 0.0
                       ? scaling.scale[m] / scaling.scale[n_outcomes + j]
                       : scaling.scale[m];
    }
  }
  return out;
}

// Per-population coefficient draws with posterior mean and equal-tailed 95%
// bands, on the original data scale.
struct CoefficientDraws {
  std::vector<std::vector<Eigen::MatrixXd>> per_draw;  // [pop][draw] p_x x p_y
  std::vector<Eigen::MatrixXd> mean;                   // [pop]
  std::vector<Eigen::MatrixXd> lo95;
  std::vector<Eigen::MatrixXd> hi95;
};

namespace detail {

// Type-7 empirical quantile (linear interpolation between order statistics).
inline double empirical_quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ParameterError("empirical_quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

inline CoefficientDraws coefficient_draws(const FittedModel& model) {
  int n_outcomes = 0;
  for (const auto& c : model.schema) {
    if (c.role == ColumnRole::outcome) ++n_outcomes;
  }
  const auto& draws = model.chain.draws;
  if (draws.empty()) throw ValidationError("coefficient_draws: empty chain");
  const int L = static_cast<int>(draws.front().groups.size());
  CoefficientDraws out;
  out.per_draw.resize(L);
  for (int l = 0; l < L; ++l) {
    out.per_draw[l].reserve(draws.size());
    for (const auto& state : draws) {
      out.per_draw[l].push_back(destandardize_coefficients(
          coefficients_from_draw(state.groups[l], n_outcomes), model.scaling, n_outcomes));
    }
    const auto& first = out.per_draw[l].front();
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(first.rows(), first.cols());
    Eigen::MatrixXd lo(first.rows(), first.cols()), hi(first.rows(), first.cols());
    for (const auto& d : out.per_draw[l]) mean += d;
    mean /= static_cast<double>(out.per_draw[l].size());
    std::vector<double> cell(out.per_draw[l].size());
    for (Eigen::Index r = 0; r < first.rows(); ++r) {
      for (Eigen::Index c = 0; c < first.cols(); ++c) {
        for (std::size_t d = 0; d < cell.size(); ++d) cell[d] = out.per_draw[l][d](r, c);
        lo(r, c) = detail::empirical_quantile(cell, 0.025);
        hi(r, c) = detail::empirical_quantile(cell, 0.975);
      }
    }
    out.mean.push_back(std::move(mean));
    out.lo95.push_back(std::move(lo));
    out.hi95.push_back(std::move(hi));
  }
  return out;
}

// Posterior-mean predictions with equal-tailed 95% intervals. Binary outcomes
// are probabilities; continuous outcomes are on the original data scale.
struct PredictionResult {
  Eigen::MatrixXd mean;  // n_test x p_y
  Eigen::MatrixXd lo95;
  Eigen::MatrixXd hi95;
  Eigen::VectorXi group;
  std::vector<std::string> outcome_names;
};

// Posterior predictive for held-out rows. Per retained draw: binary covariates
// get one truncated-normal latent draw from their marginal Gaussian, factor
// scores are drawn from the covariate-block conditional, and each binary
// outcome integrates the factor Gaussian analytically through
// Phi(m / sqrt(1 + v_f)).
inline PredictionResult predict(const FittedModel& model, const Dataset& test, RngHandle rng) {
  const auto& chain = model.chain;
  if (chain.draws.empty()) throw ValidationError("predict: empty chain");
  const int k = chain.k_star;
  const int L = static_cast<int>(chain.draws.front().groups.size());

  std::vector<int> outcome_cols, covariate_cols;
  for (int j = 0; j < static_cast<int>(model.schema.size()); ++j) {
    (model.schema[j].role == ColumnRole::outcome ? outcome_cols : covariate_cols).push_back(j);
  }
  const int p_y = static_cast<int>(outcome_cols.size());
  const int p_x = static_cast<int>(covariate_cols.size());

  // Test columns must carry every training covariate with matching type, in
  // training order. Extra test columns (e.g. observed outcomes) are ignored.
  std::vector<int> test_col(p_x, -1);
  {
    int cursor = 0;
    for (int jx = 0; jx < p_x; ++jx) {
      const ColumnSpec& want = model.schema[covariate_cols[jx]];
      int found = -1;
      for (int t = cursor; t < static_cast<int>(test.schema().size()); ++t) {
        if (test.schema()[t].name == want.name) {
          found = t;
          break;
        }
      }
      if (found < 0) {
        throw ValidationError("predict: test data missing covariate '" + want.name + "'");
      }
      if (test.schema()[found].type != want.type) {
        throw ValidationError("predict: covariate '" + want.name + "' type differs from training");
      }
      test_col[jx] = found;
      cursor = found + 1;
    }
  }
  for (int i = 0; i < test.n(); ++i) {
    if (test.group()[i] < 1 || test.group()[i] > L) {
      throw ValidationError("predict: unknown population label " +
                            std::to_string(test.group()[i]) + " in test row " + std::to_string(i));
    }
  }

  // Standardize test covariates with the training constants.
  Eigen::MatrixXd x(test.n(), p_x);
  std::vector<bool> covariate_binary(p_x);
  for (int jx = 0; jx < p_x; ++jx) {
    const int src = test_col[jx];
    const int train_j = covariate_cols[jx];
    covariate_binary[jx] = model.schema[train_j].type == ColumnType::binary;
    if (covariate_binary[jx]) {
      x.col(jx) = test.z().col(src);
    } else {
      x.col(jx) = (test.z().col(src).array() - model.scaling.center[train_j]) /
                  model.scaling.scale[train_j];
    }
  }

  const std::size_t n_draws = chain.draws.size();
  PredictionResult result;
  result.group = test.group();
  for (int m : outcome_cols) result.outcome_names.push_back(model.schema[m].name);
  result.mean.setZero(test.n(), p_y);
  result.lo95.resize(test.n(), p_y);
  result.hi95.resize(test.n(), p_y);

  // accum[m] is n_test x n_draws of per-draw predictive values.
  std::vector<Eigen::MatrixXd> accum(p_y, Eigen::MatrixXd(test.n(), n_draws));

  for (std::size_t d = 0; d < n_draws; ++d) {
    const ChainState& state = chain.draws[d];
    for (int l = 0; l < L; ++l) {
      const GroupState& g = state.groups[l];
      // Covariate-block view of this population's parameters.
      GroupState gx;
      gx.lambda.resize(p_x, k + 1);
      gx.sigma2.resize(p_x);
      for (int jx = 0; jx < p_x; ++jx) {
        gx.lambda.row(jx) = g.lambda.row(covariate_cols[jx]);
        gx.sigma2[jx] = g.sigma2[covariate_cols[jx]];
      }
      gx.w = g.w;
      const FactorConditional fc = factor_conditional(gx);

      // Per-outcome predictive pieces.
      Eigen::MatrixXd lambda_y(p_y, k);
      Eigen::VectorXd intercept_y(p_y), var_f(p_y);
      for (int m = 0; m < p_y; ++m) {
        lambda_y.row(m) = g.lambda.row(outcome_cols[m]).head(k);
        intercept_y[m] = g.lambda(outcome_cols[m], k);
        var_f[m] = lambda_y.row(m) * fc.cov * lambda_y.row(m).transpose();
      }

      for (int i = 0; i < test.n(); ++i) {
        if (test.group()[i] - 1 != l) continue;
        Rng row_rng = substream_rng(rng, 0x77, d, static_cast<std::uint64_t>(i));
        Eigen::VectorXd z_x = x.row(i).transpose();
        for (int jx = 0; jx < p_x; ++jx) {
          if (!covariate_binary[jx]) continue;
          // Marginal latent scale: loadings variance plus the unit probit noise.
          const double sd = std::sqrt(1.0 + gx.lambda.row(jx).head(k).squaredNorm());
          const TruncSide side =
              z_x[jx] > 0.5 ? TruncSide::above_zero : TruncSide::below_zero;
          z_x[jx] = sample_truncated_normal(gx.lambda(jx, k), sd, side, row_rng);
        }
        const Eigen::VectorXd mu_f = fc.projector * (z_x - fc.offset);
        for (int m = 0; m < p_y; ++m) {
          const double raw = lambda_y.row(m).dot(mu_f) + intercept_y[m];
          const int train_j = outcome_cols[m];
          if (model.schema[train_j].type == ColumnType::binary) {
            accum[m](i, d) = norm_cdf(raw / std::sqrt(1.0 + var_f[m]));
          } else {
            accum[m](i, d) =
                model.scaling.center[train_j] + model.scaling.scale[train_j] * raw;
          }
        }
      }
    }
  }

  std::vector<double> cell(n_draws);
  for (int m = 0; m < p_y; ++m) {
    for (int i = 0; i < test.n(); ++i) {
      for (std::size_t d = 0; d < n_draws; ++d) cell[d] = accum[m](i, d);
      const double mean =
          std::accumulate(cell.begin(), cell.end(), 0.0) / static_cast<double>(n_draws);
      double lo = detail::empirical_quantile(cell, 0.025);
      double hi = detail::empirical_quantile(cell, 0.975);
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
      result.mean(i, m) = mean;
      result.lo95(i, m) = lo;
      result.hi95(i, m) = hi;
    }
  }
  return result;
}

// Count of factor columns whose posterior-mean weight clears the threshold
// (intercept excluded), plus per-draw counts for sensitivity checks.
struct FactorCount {
  int active = 0;
  Eigen::VectorXd mean_w;
  std::vector<int> per_draw;
};

inline FactorCount count_active_factors(const PosteriorChain& chain, int l, double threshold) {
  if (!(threshold > 0.0)) throw ParameterError("count_active_factors: threshold must be positive");
  if (chain.draws.empty()) throw ValidationError("count_active_factors: empty chain");
  const int k = chain.k_star;
  FactorCount out;
  out.mean_w = Eigen::VectorXd::Zero(k);
  out.per_draw.reserve(chain.draws.size());
  for (const auto& state : chain.draws) {
    const Eigen::VectorXd& w = state.groups.at(l).w;
    out.mean_w += w;
    out.per_draw.push_back(static_cast<int>((w.array() > threshold).count()));
  }
  out.mean_w /= static_cast<double>(chain.draws.size());
  out.active = static_cast<int>((out.mean_w.array() > threshold).count());
  return out;
}

}  // namespace hifm
