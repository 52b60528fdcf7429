#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "hifm/baselines.hpp"
#include "hifm/data.hpp"
#include "hifm/gibbs.hpp"
#include "hifm/metrics.hpp"
#include "hifm/parallel.hpp"
#include "hifm/regression.hpp"
#include "hifm/simulation.hpp"

namespace hifm {

enum class Method { hifm, lasso, enet, hlasso };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::hifm: return "hifm";
    case Method::lasso: return "lasso";
    case Method::enet: return "enet";
    case Method::hlasso: return "hlasso";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::hifm, Method::lasso, Method::enet, Method::hlasso}) {
    if (method_name(m) == name) return m;
  }
  throw ValidationError("unknown method '" + name + "' (want hifm|lasso|enet|hlasso)");
}

// Replicated simulation study: generate train/test pairs from fresh truths,
// fit each requested method, and collect prediction, coefficient, and
// factor-count measurements per replication.
struct StudyConfig {
  int replications = 10;
  std::uint64_t seed = 20260801;
  std::vector<Method> methods = {Method::hifm, Method::lasso, Method::enet, Method::hlasso};
  SimConfig sim;
  int n_test = 500;
  int n_test_target = 200;
  Hyperparameters hyper;
  EnetConfig enet;  // family is set from the outcome type per run
  int threads = 1;

  void validate() const {
    if (replications < 1) throw ValidationError("study: replications must be >= 1");
    if (methods.empty()) throw ValidationError("study: at least one method required");
    if (n_test_target < 1 || n_test_target >= n_test) {
      throw ValidationError("study: need 1 <= n_test_target < n_test");
    }
    sim.validate();
  }
};

struct RepRecord {
  int rep = -1;
  std::map<std::string, double> values;
  std::vector<std::string> failures;  // "method: message"
};

struct StudyResult {
  bool outcome_binary = false;
  std::string primary_metric;  // "mse" or "auc"
  std::vector<RepRecord> reps;
  int n_tasks = 0;
  int n_failed = 0;

  std::vector<double> collect(const std::string& key) const {
    std::vector<double> out;
    for (const auto& r : reps) {
      const auto it = r.values.find(key);
      if (it != r.values.end()) out.push_back(it->second);
    }
    return out;
  }
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> linear_scores(const EnetFit& fit, const Eigen::MatrixXd& x) {
  std::vector<double> scores(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    scores[i] = fit.intercept + x.row(i).dot(fit.beta);
  }
  return scores;
}

}  // namespace detail

inline StudyResult run_study(const StudyConfig& config, std::ostream* progress = nullptr) {
  config.validate();
  const bool outcome_binary =
      std::find(config.sim.binary_cols.begin(), config.sim.binary_cols.end(), 0) !=
      config.sim.binary_cols.end();

  StudyResult result;
  result.outcome_binary = outcome_binary;
  result.primary_metric = outcome_binary ? "auc" : "mse";
  result.reps.resize(config.replications);

  std::mutex progress_mutex;
  const RngHandle master{config.seed, 0};

  parallel_for(config.replications, config.threads, [&](std::size_t rep) {
    RepRecord& record = result.reps[rep];
    record.rep = static_cast<int>(rep);
    const RngHandle rep_rng = substream(master, 0x57, rep);

    Dataset train, test;
    SyntheticTruth truth;
    try {
      auto generated = generate(config.sim, substream(rep_rng, 0x1));
      train = std::move(generated.first);
      truth = std::move(generated.second);
      test = sample_rows(truth, config.n_test, config.n_test_target, substream(rep_rng, 0x2));
      for (int l = 0; l < 2; ++l) {
        record.values["factors.true.pop" + std::to_string(l + 1)] =
            true_factor_count(truth, config.hyper.weight_threshold)[l];
      }
    } catch (const std::exception& e) {
      for (Method m : config.methods) {
        record.failures.push_back(method_name(m) + ": data generation: " + e.what());
      }
      return;
    }

    const int p_x = train.p() - 1;
    const Eigen::MatrixXd x_train = train.z().rightCols(p_x);
    const Eigen::VectorXd y_train = train.z().col(0);
    const Eigen::MatrixXd x_test = test.z().rightCols(p_x);
    std::vector<double> y_test(test.n());
    std::vector<int> y_test_binary(test.n());
    for (int i = 0; i < test.n(); ++i) {
      y_test[i] = test.z()(i, 0);
      y_test_binary[i] = test.z()(i, 0) > 0.5 ? 1 : 0;
    }

    auto score_predictions = [&](const std::vector<double>& scores) {
      return outcome_binary ? auc(scores, y_test_binary) : mse(scores, y_test);
    };

    for (Method method : config.methods) {
      try {
        if (method == Method::hifm) {
          // The synthetic data are fitted on their native scale: columns are
          // zero-mean by construction, and rescaling them would divide the
          // stick weights by the per-column variances, detaching the fixed
          // 0.05 activity threshold from the generative weights it is
          // compared against.
          const PosteriorChain chain =
              run_chain(train, config.hyper, substream(rep_rng, 0x10), 1);
          FittedModel model{chain, train.schema(), train.scaling()};
          const PredictionResult pred = predict(model, test, substream(rep_rng, 0x11));
          std::vector<double> scores(test.n());
          for (int i = 0; i < test.n(); ++i) scores[i] = pred.mean(i, 0);
          record.values[result.primary_metric + ".hifm"] = score_predictions(scores);
          record.values["mh.acceptance"] = chain.mh.acceptance_rate();

          const CoefficientDraws coef = coefficient_draws(model);
          for (int l = 0; l < 2; ++l) {
            const Eigen::VectorXd est = coef.mean[l].col(0);
            record.values["coefmse.hifm.pop" + std::to_string(l + 1)] =
                coefficient_mse({est.data(), est.data() + est.size()},
                                {truth.theta[l].data(), truth.theta[l].data() + p_x});
            record.values["factors.est.pop" + std::to_string(l + 1)] =
                count_active_factors(chain, l, config.hyper.weight_threshold).active;
          }
        } else {
          EnetConfig enet_config = config.enet;
          enet_config.family = outcome_binary ? EnetFamily::binary : EnetFamily::linear;
          if (method == Method::lasso || method == Method::hlasso) {
            enet_config.alpha_grid = {1.0};
          } else if (enet_config.alpha_grid.size() <= 1) {
            enet_config.alpha_grid.clear();
            for (int a = 0; a <= 10; ++a) enet_config.alpha_grid.push_back(a / 10.0);
          }
          const std::string name = method_name(method);
          if (method == Method::hlasso) {
            const Eigen::MatrixXd expanded = expand_hierarchical(x_train, train.group());
            const EnetFit fit =
                fit_enet(expanded, y_train, enet_config, substream(rep_rng, 0x20));
            const Eigen::MatrixXd expanded_test = expand_hierarchical(x_test, test.group());
            record.values[result.primary_metric + "." + name] =
                score_predictions(detail::linear_scores(fit, expanded_test));
            const auto slopes = hierarchical_group_slopes(fit.beta, p_x, 2);
            for (int l = 0; l < 2; ++l) {
              record.values["coefmse." + name + ".pop" + std::to_string(l + 1)] =
                  coefficient_mse({slopes[l].data(), slopes[l].data() + p_x},
                                  {truth.theta[l].data(), truth.theta[l].data() + p_x});
            }
          } else {
            const EnetFit fit = fit_enet(x_train, y_train, enet_config,
                                         substream(rep_rng, method == Method::lasso ? 0x21 : 0x22));
            record.values[result.primary_metric + "." + name] =
                score_predictions(detail::linear_scores(fit, x_test));
            for (int l = 0; l < 2; ++l) {
              record.values["coefmse." + name + ".pop" + std::to_string(l + 1)] =
                  coefficient_mse({fit.beta.data(), fit.beta.data() + p_x},
                                  {truth.theta[l].data(), truth.theta[l].data() + p_x});
            }
            record.values["lambda." + name] = fit.lambda;
            record.values["alpha." + name] = fit.alpha;
          }
        }
      } catch (const std::exception& e) {
        record.failures.push_back(method_name(method) + ": " + e.what());
      }
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        (*progress) << "replication " << rep + 1 << "/" << config.replications << " "
                    << method_name(method) << " done\n";
      }
    }
  });

  result.n_tasks = config.replications * static_cast<int>(config.methods.size());
  for (const auto& r : result.reps) result.n_failed += static_cast<int>(r.failures.size());
  return result;
}

// Table-style aggregations.
struct StudyTables {
  // metric,method -> (median, min, max)
  std::vector<std::array<std::string, 5>> predictive;   // metric, method, median, min, max
  std::vector<std::array<std::string, 5>> coefficients; // population, method, median, min, max (x1e3)
  std::vector<std::array<std::string, 3>> factors;      // population, mean estimated, mean true
};

inline StudyTables tabulate(const StudyResult& result, const std::vector<Method>& methods) {
  StudyTables tables;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };
  for (Method m : methods) {
    const auto v = result.collect(result.primary_metric + "." + method_name(m));
    if (v.empty()) continue;
    tables.predictive.push_back({result.primary_metric, method_name(m),
                                 fmt(detail::median_of(v)),
                                 fmt(*std::min_element(v.begin(), v.end())),
                                 fmt(*std::max_element(v.begin(), v.end()))});
  }
  for (int l = 1; l <= 2; ++l) {
    for (Method m : methods) {
      auto v = result.collect("coefmse." + method_name(m) + ".pop" + std::to_string(l));
      if (v.empty()) continue;
      for (double& x : v) x *= 1e3;
      tables.coefficients.push_back({"pop" + std::to_string(l), method_name(m),
                                     fmt(detail::median_of(v)),
                                     fmt(*std::min_element(v.begin(), v.end())),
                                     fmt(*std::max_element(v.begin(), v.end()))});
    }
    const auto est = result.collect("factors.est.pop" + std::to_string(l));
    const auto tru = result.collect("factors.true.pop" + std::to_string(l));
    if (!est.empty() && !tru.empty()) {
      const double est_mean =
          std::accumulate(est.begin(), est.end(), 0.0) / static_cast<double>(est.size());
      const double tru_mean =
          std::accumulate(tru.begin(), tru.end(), 0.0) / static_cast<double>(tru.size());
      tables.factors.push_back({"pop" + std::to_string(l), fmt(est_mean), fmt(tru_mean)});
    }
  }
  return tables;
}

}  // namespace hifm
