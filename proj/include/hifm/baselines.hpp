#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hifm/errors.hpp"
#include "hifm/rng.hpp"

namespace hifm {

enum class EnetFamily { linear, binary };

struct EnetConfig {
  std::vector<double> alpha_grid = {1.0};
  std::vector<double> lambda_grid;  // empty: 30 log-spaced points on [1e-5, 0.1]
  int folds = 10;
  EnetFamily family = EnetFamily::linear;
  double tol = 1e-7;
  int max_passes = 10000;
  int irls_iters = 30;

  void validate() const {
    if (alpha_grid.empty()) throw ParameterError("enet: alpha grid must be nonempty");
    for (double a : alpha_grid) {
      if (a < 0.0 || a > 1.0) throw ParameterError("enet: alpha must lie in [0,1]");
    }
    if (folds < 2) throw ParameterError("enet: folds must be >= 2");
  }
};

inline std::vector<double> log_spaced_grid(double lo, double hi, int count) {
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid[i] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
  }
  return grid;
}

struct EnetFit {
  Eigen::VectorXd beta;  // original covariate scale
  double intercept = 0.0;
  double alpha = 1.0;
  double lambda = 0.0;
  double cv_loss = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct StandardizedDesign {
  Eigen::MatrixXd x;        // centered/scaled columns; degenerate columns zeroed
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<bool> active; // false for constant columns
};

inline StandardizedDesign standardize_design(const Eigen::MatrixXd& x, bool warn_constant) {
  const Eigen::Index n = x.rows(), p = x.cols();
  StandardizedDesign d;
  d.x.resize(n, p);
  d.center.resize(p);
  d.scale.resize(p);
  d.active.assign(p, true);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / n);
    d.center[j] = mean;
    if (sd > 0.0) {
      d.scale[j] = sd;
      d.x.col(j) = (x.col(j).array() - mean) / sd;
    } else {
      d.scale[j] = 1.0;
      d.x.col(j).setZero();
      d.active[j] = false;
      if (warn_constant) {
        std::cerr << "enet: column " << j << " is constant; coefficient forced to 0\n";
      }
    }
  }
  return d;
}

// Coordinate descent on standardized columns; 'weights' empty means the
// unweighted linear problem. Updates beta in place, returns the intercept on
// the standardized scale.
inline double coordinate_descent(const StandardizedDesign& design, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& weights, double lambda, double alpha,
                                 Eigen::VectorXd& beta, double tol, int max_passes) {
  const Eigen::Index n = design.x.rows(), p = design.x.cols();
  const bool weighted = weights.size() > 0;
  const double n_d = static_cast<double>(n);

  Eigen::VectorXd wsum_col(p);  // (1/n) sum_i w_i x_ij^2
  double wtot = weighted ? weights.sum() / n_d : 1.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    wsum_col[j] = weighted ? (weights.array() * design.x.col(j).array().square()).sum() / n_d
                           : 1.0;
  }

  // Residual tracks y - intercept - X beta.
  double intercept = weighted ? (weights.array() * y.array()).sum() / (wtot * n_d) : y.mean();
  Eigen::VectorXd resid = y - design.x * beta;
  resid.array() -= intercept;

  for (int pass = 0; pass < max_passes; ++pass) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!design.active[j]) continue;
      const double old = beta[j];
      double rho;
      if (weighted) {
        rho = (weights.array() * design.x.col(j).array() * resid.array()).sum() / n_d +
              wsum_col[j] * old;
      } else {
        rho = design.x.col(j).dot(resid) / n_d + old;
      }
      const double denom = wsum_col[j] + lambda * (1.0 - alpha);
      const double updated = soft_threshold(rho, lambda * alpha) / denom;
      if (updated != old) {
        resid -= design.x.col(j) * (updated - old);
        beta[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    // Refresh intercept (weighted mean of current residual plus intercept).
    const double shift = weighted
                             ? (weights.array() * resid.array()).sum() / (wtot * n_d)
                             : resid.mean();
    if (shift != 0.0) {
      intercept += shift;
      resid.array() -= shift;
      max_change = std::max(max_change, std::abs(shift));
    }
    if (max_change < tol) break;
  }
  return intercept;
}

struct StandardizedFit {
  Eigen::VectorXd beta;  // standardized scale
  double intercept = 0.0;
};

inline StandardizedFit fit_linear_std(const StandardizedDesign& design, const Eigen::VectorXd& y,
                                      double lambda, double alpha, const EnetConfig& config,
                                      Eigen::VectorXd warm) {
  StandardizedFit fit;
  fit.beta = warm.size() == design.x.cols() ? std::move(warm)
                                            : Eigen::VectorXd::Zero(design.x.cols());
  fit.intercept = coordinate_descent(design, y, Eigen::VectorXd(), lambda, alpha, fit.beta,
                                     config.tol, config.max_passes);
  return fit;
}

inline double clamp_prob(double p) { return std::min(1.0 - 1e-6, std::max(1e-6, p)); }

// Penalized logistic regression by iteratively reweighted least squares with
// a weighted coordinate-descent inner solve.
inline StandardizedFit fit_logistic_std(const StandardizedDesign& design,
                                        const Eigen::VectorXd& y, double lambda, double alpha,
                                        const EnetConfig& config, Eigen::VectorXd warm) {
  const Eigen::Index n = design.x.rows();
  StandardizedFit fit;
  fit.beta = warm.size() == design.x.cols() ? std::move(warm)
                                            : Eigen::VectorXd::Zero(design.x.cols());
  fit.intercept = 0.0;
  for (int outer = 0; outer < config.irls_iters; ++outer) {
    Eigen::VectorXd eta = design.x * fit.beta;
    eta.array() += fit.intercept;
    Eigen::VectorXd weights(n), working(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = clamp_prob(1.0 / (1.0 + std::exp(-eta[i])));
      weights[i] = p * (1.0 - p);
      working[i] = eta[i] + (y[i] - p) / weights[i];
    }
    const Eigen::VectorXd beta_before = fit.beta;
    const double intercept_before = fit.intercept;
    fit.intercept = coordinate_descent(design, working, weights, lambda, alpha, fit.beta,
                                       config.tol, config.max_passes);
    const double delta = std::max((fit.beta - beta_before).cwiseAbs().maxCoeff(),
                                  std::abs(fit.intercept - intercept_before));
    if (delta < 10.0 * config.tol) break;
  }
  return fit;
}

inline StandardizedFit fit_std(const StandardizedDesign& design, const Eigen::VectorXd& y,
                               double lambda, double alpha, const EnetConfig& config,
                               Eigen::VectorXd warm = {}) {
  return config.family == EnetFamily::linear
             ? fit_linear_std(design, y, lambda, alpha, config, std::move(warm))
             : fit_logistic_std(design, y, lambda, alpha, config, std::move(warm));
}

inline double validation_loss(const EnetConfig& config, const Eigen::VectorXd& eta,
                              const Eigen::VectorXd& y) {
  if (config.family == EnetFamily::linear) {
    return (eta - y).squaredNorm() / static_cast<double>(y.size());
  }
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = clamp_prob(1.0 / (1.0 + std::exp(-eta[i])));
    dev += y[i] != 0.0 ? -std::log(p) : -std::log(1.0 - p);
  }
  return 2.0 * dev / static_cast<double>(y.size());
}

}  // namespace detail

// Elastic net with k-fold cross-validation over the (alpha, lambda) grid.
// Minimizes (1/2n)||y - b0 - X b||^2 + lambda (alpha |b|_1 + (1-alpha)/2 |b|_2^2)
// for the linear family, penalized logistic deviance for the binary family.
// CV picks the grid point with minimal mean validation loss; ties go to the
// smallest lambda. Coefficients are reported on the original scale.
inline EnetFit fit_enet(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const EnetConfig& config_in, RngHandle rng) {
  EnetConfig config = config_in;
  config.validate();
  if (x.rows() != y.size() || x.rows() < 2) {
    throw ParameterError("fit_enet: design and response sizes disagree");
  }
  if (config.lambda_grid.empty()) config.lambda_grid = log_spaced_grid(1e-5, 0.1, 30);
  if (config.family == EnetFamily::binary) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw ParameterError("fit_enet: binary family requires y in {0,1}");
      }
    }
  }

  const Eigen::Index n = x.rows();
  const int folds = std::min<int>(config.folds, static_cast<int>(n));

  // Seed-deterministic fold assignment via Fisher-Yates.
  std::vector<int> fold_of(n);
  {
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng = substream_rng(rng, 0x30);
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const Eigen::Index j = static_cast<Eigen::Index>(shuffle_rng.uniform() * (i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    for (Eigen::Index i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % folds);
  }

  // Mean validation loss per grid point.
  Eigen::MatrixXd loss_sum =
      Eigen::MatrixXd::Zero(config.alpha_grid.size(), config.lambda_grid.size());
  std::vector<std::size_t> lam_order(config.lambda_grid.size());
  std::iota(lam_order.begin(), lam_order.end(), 0);
  std::sort(lam_order.begin(), lam_order.end(), [&](std::size_t a, std::size_t b) {
    return config.lambda_grid[a] > config.lambda_grid[b];
  });
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train_rows, valid_rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      (fold_of[i] == f ? valid_rows : train_rows).push_back(i);
    }
    Eigen::MatrixXd x_train(train_rows.size(), x.cols());
    Eigen::VectorXd y_train(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      x_train.row(i) = x.row(train_rows[i]);
      y_train[i] = y[train_rows[i]];
    }
    Eigen::MatrixXd x_valid(valid_rows.size(), x.cols());
    Eigen::VectorXd y_valid(valid_rows.size());
    for (std::size_t i = 0; i < valid_rows.size(); ++i) {
      x_valid.row(i) = x.row(valid_rows[i]);
      y_valid[i] = y[valid_rows[i]];
    }
    const detail::StandardizedDesign design = detail::standardize_design(x_train, false);
    for (std::size_t ai = 0; ai < config.alpha_grid.size(); ++ai) {
      Eigen::VectorXd warm;  // warm start down the lambda path (largest first)
      for (std::size_t li : lam_order) {
        const detail::StandardizedFit fit = detail::fit_std(
            design, y_train, config.lambda_grid[li], config.alpha_grid[ai], config, warm);
        warm = fit.beta;
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(valid_rows.size(), fit.intercept);
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
          if (fit.beta[j] == 0.0) continue;
          eta += ((x_valid.col(j).array() - design.center[j]) / design.scale[j]).matrix() *
                 fit.beta[j];
        }
        loss_sum(ai, li) += detail::validation_loss(config, eta, y_valid);
      }
    }
  }
  double best_loss = std::numeric_limits<double>::infinity();
  double best_alpha = config.alpha_grid.front();
  double best_lambda = config.lambda_grid.front();
  for (std::size_t ai = 0; ai < config.alpha_grid.size(); ++ai) {
    for (std::size_t li = 0; li < config.lambda_grid.size(); ++li) {
      const double loss = loss_sum(ai, li) / folds;
      const bool better =
          loss < best_loss - 1e-12 ||
          (std::abs(loss - best_loss) <= 1e-12 && config.lambda_grid[li] < best_lambda);
      if (better) {
        best_loss = loss;
        best_alpha = config.alpha_grid[ai];
        best_lambda = config.lambda_grid[li];
      }
    }
  }

  // Refit on the full data at the selected grid point.
  const detail::StandardizedDesign design = detail::standardize_design(x, true);
  const detail::StandardizedFit fit =
      detail::fit_std(design, y, best_lambda, best_alpha, config);

  EnetFit out;
  out.alpha = best_alpha;
  out.lambda = best_lambda;
  out.cv_loss = best_loss;
  out.beta = fit.beta.array() / design.scale.array();
  out.intercept = fit.intercept - out.beta.dot(design.center);
  return out;
}

// Hierarchical design expansion: main effects, then per-population interaction
// blocks for populations 2..L, then population indicator columns for 2..L.
inline Eigen::MatrixXd expand_hierarchical(const Eigen::MatrixXd& x,
                                           const Eigen::VectorXi& group) {
  if (x.rows() != group.size()) {
    throw ParameterError("expand_hierarchical: row/label count mismatch");
  }
  const int L = group.size() > 0 ? group.maxCoeff() : 0;
  if (L <= 1) return x;
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, p + (L - 1) * p + (L - 1));
  out.leftCols(p) = x;
  for (int l = 2; l <= L; ++l) {
    const Eigen::Index block = p + (l - 2) * p;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (group[i] != l) continue;
      out.block(i, block, 1, p) = x.row(i);
      out(i, p + (L - 1) * p + (l - 2)) = 1.0;
    }
  }
  return out;
}

// Per-population slopes implied by a fit on the expanded design.
inline std::vector<Eigen::VectorXd> hierarchical_group_slopes(const Eigen::VectorXd& beta,
                                                              int p_x, int n_groups) {
  std::vector<Eigen::VectorXd> slopes;
  slopes.push_back(beta.head(p_x));
  for (int l = 2; l <= n_groups; ++l) {
    slopes.push_back(beta.head(p_x) + beta.segment(p_x + (l - 2) * p_x, p_x));
  }
  return slopes;
}

}  // namespace hifm
