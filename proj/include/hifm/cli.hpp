#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hifm/config.hpp"
#include "hifm/csv.hpp"
#include "hifm/errors.hpp"
#include "hifm/gibbs.hpp"
#include "hifm/metrics.hpp"
#include "hifm/parallel.hpp"
#include "hifm/regression.hpp"
#include "hifm/serialize.hpp"
#include "hifm/simulation.hpp"
#include "hifm/study.hpp"

namespace hifm::cli {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 runtime/numerical, 2 validation, 3 partial study failure.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;
constexpr int kExitPartialStudy = 3;

namespace detail {

class StageClock {
 public:
  void start(const std::string& stage) {
    stage_ = stage;
    t0_ = std::chrono::steady_clock::now();
  }
  void stop() {
    const auto dt = std::chrono::steady_clock::now() - t0_;
    seconds_[stage_] += std::chrono::duration<double>(dt).count();
  }
  const std::map<std::string, double>& seconds() const { return seconds_; }

 private:
  std::string stage_;
  std::chrono::steady_clock::time_point t0_;
  std::map<std::string, double> seconds_;
};

inline nlohmann::json config_echo(const Config& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config.entries()) j[k] = v;
  return j;
}

inline void write_manifest(const std::string& dir, const std::string& command,
                           const Config& config, std::uint64_t seed, const StageClock& clock,
                           const std::vector<std::string>& output_files,
                           const nlohmann::json& extra = {}) {
  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["version"] = kVersion;
  manifest["build"] = std::string("cxx-") + std::to_string(__cplusplus);
  manifest["seed"] = seed;
  manifest["config"] = config_echo(config);
  manifest["stage_seconds"] = clock.seconds();
  nlohmann::json files = nlohmann::json::object();
  for (const auto& f : output_files) files[f] = io::file_checksum(dir + "/" + f);
  manifest["checksums"] = files;
  if (!extra.is_null()) {
    for (const auto& [k, v] : extra.items()) manifest[k] = v;
  }
  io::atomic_write(dir + "/manifest.json", manifest.dump(2) + "\n");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config loading with presets
// ---------------------------------------------------------------------------

// Named hyperparameter presets: "simulation" matches the synthetic-study
// settings (alpha0 = alpha_l = 15, tau = 3, 2000/1000/5, k* by the 5 log p
// rule); "application" matches the clinical-scale settings (alpha0 = 10,
// alpha_l = 15, C = 50, k* = 25, 3000/1500/6).
inline Hyperparameters preset_hyper(const std::string& preset) {
  Hyperparameters hyper;
  if (preset.empty() || preset == "simulation") return hyper;
  if (preset == "application") {
    hyper.alpha0 = 10.0;
    hyper.alpha_l = {15.0};
    hyper.k_star = 25;
    hyper.mh_tuning_c = 50.0;
    hyper.n_iter = 3000;
    hyper.n_burnin = 1500;
    hyper.thin = 6;
    return hyper;
  }
  throw ValidationError("unknown preset '" + preset + "' (want simulation|application)");
}

inline Hyperparameters hyper_from_config(const Config& config, const std::string& preset = "") {
  Hyperparameters hyper = preset_hyper(preset);
  hyper.alpha0 = config.get_double("model.alpha0", hyper.alpha0);
  const std::vector<double> alpha_l = config.get_list("model.alpha_l", hyper.alpha_l);
  hyper.alpha_l = alpha_l;
  hyper.tau = config.get_double("model.tau", hyper.tau);
  hyper.sigma_shape = config.get_double("model.sigma_shape", hyper.sigma_shape);
  hyper.sigma_rate = config.get_double("model.sigma_rate", hyper.sigma_rate);
  hyper.k_star = static_cast<int>(config.get_long("model.k_star", hyper.k_star));
  hyper.weight_threshold = config.get_double("model.weight_threshold", hyper.weight_threshold);
  hyper.mh_tuning_c = config.get_double("gibbs.mh_tuning_c", hyper.mh_tuning_c);
  hyper.n_iter = config.get_long("gibbs.n_iter", hyper.n_iter);
  hyper.n_burnin = config.get_long("gibbs.n_burnin", hyper.n_burnin);
  hyper.thin = config.get_long("gibbs.thin", hyper.thin);
  hyper.progress_every = config.get_long("gibbs.progress_every", hyper.progress_every);
  const std::string anchor = config.get("gibbs.pi0_anchor", "renormalize");
  if (anchor == "renormalize") {
    hyper.pi0_anchor = Pi0Anchor::renormalize;
  } else if (anchor == "persist_theta") {
    hyper.pi0_anchor = Pi0Anchor::persist_theta;
  } else {
    throw ValidationError("gibbs.pi0_anchor must be renormalize|persist_theta");
  }
  return hyper;
}

inline SimConfig sim_from_config(const Config& config) {
  SimConfig sim;
  sim.p = static_cast<int>(config.get_long("simulate.p", sim.p));
  sim.k = static_cast<int>(config.get_long("simulate.k", sim.k));
  sim.n = static_cast<int>(config.get_long("simulate.n", sim.n));
  sim.n_target = static_cast<int>(config.get_long("simulate.n_target", sim.n_target));
  sim.tau = config.get_double("simulate.tau", sim.tau);
  sim.alpha0 = config.get_double("simulate.alpha0", sim.alpha0);
  sim.alpha_l = config.get_double("simulate.alpha_l", sim.alpha_l);
  sim.binary_cols.clear();
  for (double v : config.get_list("simulate.binary_cols", {})) {
    sim.binary_cols.push_back(static_cast<int>(v));
  }
  return sim;
}

inline EnetConfig enet_from_config(const Config& config) {
  EnetConfig enet;
  enet.alpha_grid = config.get_list("enet.alpha_grid", {0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                        0.6, 0.7, 0.8, 0.9, 1.0});
  const double lo = config.get_double("enet.lambda_min", 1e-5);
  const double hi = config.get_double("enet.lambda_max", 0.1);
  const int count = static_cast<int>(config.get_long("enet.n_lambda", 30));
  enet.lambda_grid = log_spaced_grid(lo, hi, count);
  enet.folds = static_cast<int>(config.get_long("enet.folds", 10));
  return enet;
}

inline StudyConfig study_from_config(const Config& config) {
  StudyConfig study;
  study.replications = static_cast<int>(config.get_long("study.replications", 10));
  study.seed = config.get_u64("study.seed", study.seed);
  study.threads = static_cast<int>(config.get_long("study.threads", max_threads()));
  study.n_test = static_cast<int>(config.get_long("study.n_test", study.n_test));
  study.n_test_target =
      static_cast<int>(config.get_long("study.n_test_target", study.n_test_target));
  const std::string methods = config.get("study.methods", "hifm,lasso,enet,hlasso");
  study.methods.clear();
  std::stringstream ss(methods);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) study.methods.push_back(parse_method(item));
  }
  study.sim = sim_from_config(config);
  study.hyper = hyper_from_config(config);
  study.enet = enet_from_config(config);
  return study;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::string config_path;
  std::string out_dir;
};

inline int cmd_simulate(const SimulateOptions& options) {
  namespace fs = std::filesystem;
  const Config config = Config::parse_file(options.config_path);
  const SimConfig sim = sim_from_config(config);
  const int reps = static_cast<int>(config.get_long("simulate.replications", 1));
  const std::uint64_t seed = config.get_u64("simulate.seed", 1);
  if (reps < 1) throw ValidationError("simulate.replications must be >= 1");

  detail::StageClock clock;
  clock.start("simulate");
  fs::create_directories(options.out_dir);
  std::vector<std::string> outputs;
  for (int r = 0; r < reps; ++r) {
    char name[32];
    std::snprintf(name, sizeof(name), "rep_%03d", r);
    const std::string rep_dir = options.out_dir + "/" + name;
    fs::create_directories(rep_dir);
    auto [data, truth] = generate(sim, substream({seed, 0}, 0x51, r));
    io::write_dataset(data, rep_dir + "/data.csv", rep_dir + "/schema.csv");
    io::write_truth(truth, rep_dir + "/truth.csv");
    for (const char* f : {"/data.csv", "/schema.csv", "/truth.csv"}) {
      outputs.push_back(std::string(name) + f);
    }
  }
  clock.stop();
  detail::write_manifest(options.out_dir, "simulate", config, seed, clock, outputs);
  std::cout << "wrote " << reps << " replication(s) under " << options.out_dir << "\n";
  return kExitOk;
}

struct FitOptions {
  std::string data_path;
  std::string schema_path;
  std::string config_path;  // optional
  std::string out_dir;
  std::string preset;       // optional
  std::string format = "csv";
  std::uint64_t seed = 1;
  bool seed_set = false;
  int threads = 0;  // 0: max_threads()
};

inline int cmd_fit(const FitOptions& options) {
  const Config config = options.config_path.empty() ? Config::parse_string("")
                                                    : Config::parse_file(options.config_path);
  Hyperparameters hyper = hyper_from_config(config, options.preset);
  const std::uint64_t seed =
      options.seed_set ? options.seed : config.get_u64("gibbs.seed", options.seed);
  const int threads = options.threads > 0 ? options.threads : max_threads();
  io::ChainFormat format;
  if (options.format == "csv") {
    format = io::ChainFormat::csv;
  } else if (options.format == "binary") {
    format = io::ChainFormat::binary;
  } else {
    throw ValidationError("fit: format must be csv|binary");
  }

  detail::StageClock clock;
  clock.start("ingest");
  Dataset data = io::read_dataset(options.data_path, options.schema_path);
  data.standardize();
  clock.stop();

  clock.start("fit");
  GibbsSampler sampler(data, hyper, {seed, 0}, threads);
  PosteriorChain chain = sampler.run(hyper.progress_every > 0 ? &std::cerr : nullptr);
  clock.stop();

  if (chain.mh.acceptance_rate() < 0.10 || chain.mh.acceptance_rate() > 0.70) {
    std::cerr << "warning: pi0 MH acceptance rate " << chain.mh.acceptance_rate()
              << " is outside [0.10, 0.70]; consider rescaling mh_tuning_c ("
              << (chain.mh.acceptance_rate() < 0.10 ? "increase" : "decrease") << " C)\n";
  }

  clock.start("serialize");
  FittedModel model{std::move(chain), data.schema(), data.scaling()};
  const std::vector<std::string> files = io::write_chain(model, options.out_dir, format);
  clock.stop();

  nlohmann::json extra;
  extra["mh"] = {{"proposals", model.chain.mh.proposals},
                 {"accepts", model.chain.mh.accepts},
                 {"acceptance_rate", model.chain.mh.acceptance_rate()}};
  extra["dims"] = {{"n", data.n()},
                   {"p", data.p()},
                   {"populations", data.n_groups()},
                   {"k_star", model.chain.k_star},
                   {"draws", model.chain.draws.size()}};
  detail::write_manifest(options.out_dir, "fit", config, seed, clock, files, extra);
  std::cout << "retained " << model.chain.draws.size() << " draws (k*=" << model.chain.k_star
            << ", acceptance " << model.chain.mh.acceptance_rate() << ") in " << options.out_dir
            << "\n";
  return kExitOk;
}

struct PredictOptions {
  std::string chain_dir;
  std::string data_path;
  std::string schema_path;
  std::string out_path;
  std::uint64_t seed = 1;
};

inline int cmd_predict(const PredictOptions& options) {
  const FittedModel model = io::read_chain(options.chain_dir);
  const Dataset test = io::read_dataset(options.data_path, options.schema_path);
  const PredictionResult pred = predict(model, test, {options.seed, 0});

  std::ostringstream out;
  out << "row,group";
  for (const auto& name : pred.outcome_names) {
    out << "," << name << "_mean," << name << "_lo95," << name << "_hi95";
  }
  out << "\n";
  for (int i = 0; i < pred.mean.rows(); ++i) {
    out << i << "," << pred.group[i];
    for (int m = 0; m < pred.mean.cols(); ++m) {
      out << "," << csv::format_double(pred.mean(i, m)) << ","
          << csv::format_double(pred.lo95(i, m)) << "," << csv::format_double(pred.hi95(i, m));
    }
    out << "\n";
  }
  io::atomic_write(options.out_path, out.str());
  std::cout << "wrote " << pred.mean.rows() << " predictions to " << options.out_path << "\n";
  return kExitOk;
}

struct EvaluateOptions {
  std::string predictions_path;
  std::string data_path;
  std::string schema_path;
  std::string out_dir;
  std::vector<std::string> metrics = {"auc"};
  std::string subset;  // empty or "group==<int>"
};

inline int cmd_evaluate(const EvaluateOptions& options) {
  namespace fs = std::filesystem;
  const Dataset truth = io::read_dataset(options.data_path, options.schema_path);
  const auto rows = csv::read_rows(options.predictions_path);
  if (rows.size() < 2) throw ValidationError("predictions file has no rows");
  const auto& header = rows[0];
  if (static_cast<int>(rows.size()) - 1 != truth.n()) {
    throw ValidationError("predictions have " + std::to_string(rows.size() - 1) +
                          " rows, truth data has " + std::to_string(truth.n()));
  }

  int subset_group = 0;  // 0 = all rows
  std::string subset_label = "all";
  if (!options.subset.empty()) {
    const std::string prefix = "group==";
    if (options.subset.rfind(prefix, 0) != 0) {
      throw ValidationError("subset filter must look like group==<int>");
    }
    subset_group = static_cast<int>(csv::parse_double(options.subset.substr(prefix.size()),
                                                      "subset filter"));
    subset_label = "group" + std::to_string(subset_group);
  }

  std::vector<int> keep;
  for (int i = 0; i < truth.n(); ++i) {
    if (subset_group == 0 || truth.group()[i] == subset_group) keep.push_back(i);
  }
  if (keep.empty()) {
    std::cerr << "warning: subset '" << options.subset << "' matched no rows\n";
  }

  fs::create_directories(options.out_dir);
  std::ostringstream metrics_out;
  metrics_out << "outcome,subset,metric,value,status\n";
  std::vector<std::string> outputs = {"metrics.csv"};

  for (int j = 0; j < truth.p(); ++j) {
    if (!truth.is_outcome(j)) continue;
    const std::string& name = truth.schema()[j].name;
    int mean_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name + "_mean") mean_col = static_cast<int>(c);
    }
    if (mean_col < 0) {
      throw ValidationError("predictions file lacks column '" + name + "_mean'");
    }
    std::vector<double> scores;
    std::vector<double> actual;
    std::vector<int> labels;
    for (int i : keep) {
      scores.push_back(csv::parse_double(rows[i + 1][mean_col], name + "_mean"));
      actual.push_back(truth.z()(i, j));
      labels.push_back(truth.z()(i, j) > 0.5 ? 1 : 0);
    }

    for (const std::string& metric : options.metrics) {
      std::string value, status = "ok";
      try {
        if (keep.empty()) throw UndefinedMetricError("empty subset");
        if (metric == "mse") {
          value = csv::format_double(mse(scores, actual));
        } else if (metric == "auc") {
          value = csv::format_double(auc(scores, labels));
        } else if (metric == "auprc") {
          value = csv::format_double(auprc(scores, labels));
        } else if (metric == "roc") {
          const auto points = roc_curve(scores, labels);
          std::ostringstream curve;
          curve << "fpr,tpr\n";
          for (const auto& [x, y] : points) {
            curve << csv::format_double(x) << "," << csv::format_double(y) << "\n";
          }
          const std::string file = "roc_" + name + "_" + subset_label + ".csv";
          io::atomic_write(options.out_dir + "/" + file, curve.str());
          outputs.push_back(file);
          value = csv::format_double(trapezoid_area(points));
        } else if (metric == "pr") {
          const auto points = pr_curve(scores, labels);
          std::ostringstream curve;
          curve << "recall,precision\n";
          for (const auto& [x, y] : points) {
            curve << csv::format_double(x) << "," << csv::format_double(y) << "\n";
          }
          const std::string file = "pr_" + name + "_" + subset_label + ".csv";
          io::atomic_write(options.out_dir + "/" + file, curve.str());
          outputs.push_back(file);
          value = csv::format_double(auprc(scores, labels));
        } else if (metric.rfind("sens_spec@", 0) == 0) {
          const double threshold =
              csv::parse_double(metric.substr(std::string("sens_spec@").size()), metric);
          const auto [sens, spec] = sens_spec_at(scores, labels, threshold);
          value = csv::format_double(sens) + ";" + csv::format_double(spec);
        } else {
          throw ValidationError("unknown metric '" + metric + "'");
        }
      } catch (const UndefinedMetricError& e) {
        status = "undefined";
        std::cerr << "warning: " << name << "/" << metric << ": " << e.what() << "\n";
      }
      metrics_out << name << "," << subset_label << "," << metric << "," << value << ","
                  << status << "\n";
    }
  }
  io::atomic_write(options.out_dir + "/metrics.csv", metrics_out.str());
  std::cout << "wrote " << options.out_dir << "/metrics.csv\n";
  return kExitOk;
}

struct StudyOptions {
  std::string config_path;
  std::string out_dir;
  bool quiet = false;
};

inline int cmd_study(const StudyOptions& options) {
  namespace fs = std::filesystem;
  const Config config = Config::parse_file(options.config_path);
  const StudyConfig study = study_from_config(config);

  detail::StageClock clock;
  clock.start("study");
  const StudyResult result = run_study(study, options.quiet ? nullptr : &std::cerr);
  clock.stop();

  fs::create_directories(options.out_dir);
  const StudyTables tables = tabulate(result, study.methods);

  std::ostringstream t1;
  t1 << "metric,method,median,min,max\n";
  for (const auto& row : tables.predictive) {
    t1 << row[0] << "," << row[1] << "," << row[2] << "," << row[3] << "," << row[4] << "\n";
  }
  io::atomic_write(options.out_dir + "/table1_prediction.csv", t1.str());

  std::ostringstream t2;
  t2 << "population,method,median_x1000,min_x1000,max_x1000\n";
  for (const auto& row : tables.coefficients) {
    t2 << row[0] << "," << row[1] << "," << row[2] << "," << row[3] << "," << row[4] << "\n";
  }
  io::atomic_write(options.out_dir + "/table2_coefficients.csv", t2.str());

  std::ostringstream t3;
  t3 << "population,mean_selected,mean_true\n";
  for (const auto& row : tables.factors) {
    t3 << row[0] << "," << row[1] << "," << row[2] << "\n";
  }
  io::atomic_write(options.out_dir + "/table3_factor_counts.csv", t3.str());

  std::ostringstream per_rep;
  per_rep << "rep,key,value\n";
  for (const auto& rep : result.reps) {
    for (const auto& [key, value] : rep.values) {
      per_rep << rep.rep << "," << key << "," << csv::format_double(value) << "\n";
    }
  }
  io::atomic_write(options.out_dir + "/per_rep.csv", per_rep.str());

  std::ostringstream failures;
  failures << "rep,failure\n";
  for (const auto& rep : result.reps) {
    for (const auto& f : rep.failures) failures << rep.rep << "," << f << "\n";
  }
  io::atomic_write(options.out_dir + "/failures.csv", failures.str());

  nlohmann::json extra;
  extra["tasks"] = result.n_tasks;
  extra["failed"] = result.n_failed;
  extra["primary_metric"] = result.primary_metric;
  detail::write_manifest(options.out_dir, "study", config, study.seed, clock,
                         {"table1_prediction.csv", "table2_coefficients.csv",
                          "table3_factor_counts.csv", "per_rep.csv", "failures.csv"},
                         extra);

  std::cout << "study: " << result.n_tasks - result.n_failed << "/" << result.n_tasks
            << " tasks succeeded; tables under " << options.out_dir << "\n";
  for (const auto& row : tables.predictive) {
    std::cout << "  " << row[0] << " " << row[1] << ": median " << row[2] << " (min " << row[3]
              << ", max " << row[4] << ")\n";
  }
  if (result.n_failed * 5 > result.n_tasks) return kExitPartialStudy;
  return kExitOk;
}

}  // namespace hifm::cli
