// Command-line front end: simulate / fit / predict / evaluate / study.

#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "hifm/cli.hpp"

namespace {

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const hifm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hifm::cli::kExitValidation;
  } catch (const hifm::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hifm::cli::kExitValidation;
  } catch (const hifm::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return hifm::cli::kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hifm::cli::kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical infinite factor model: fit, predict, evaluate, simulate"};
  app.set_version_flag("--version", std::string("hifm ") + hifm::cli::kVersion);
  app.require_subcommand(1);

  hifm::cli::SimulateOptions simulate;
  CLI::App* sim = app.add_subcommand("simulate", "generate synthetic replications");
  sim->add_option("--config", simulate.config_path, "config file")->required();
  sim->add_option("--out", simulate.out_dir, "output directory")->required();

  hifm::cli::FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "run the Gibbs sampler on a dataset");
  fit_cmd->add_option("--data", fit.data_path, "data.csv")->required();
  fit_cmd->add_option("--schema", fit.schema_path, "schema.csv")->required();
  fit_cmd->add_option("--config", fit.config_path, "config file");
  fit_cmd->add_option("--out", fit.out_dir, "chain output directory")->required();
  fit_cmd->add_option("--preset", fit.preset, "simulation|application");
  fit_cmd->add_option("--format", fit.format, "chain format: csv|binary");
  fit_cmd->add_option("--seed", fit.seed, "rng seed")->each([&](const std::string&) {
    fit.seed_set = true;
  });
  fit_cmd->add_option("--threads", fit.threads, "worker threads (default HIFM_THREADS)");

  hifm::cli::PredictOptions predict;
  CLI::App* predict_cmd = app.add_subcommand("predict", "posterior predictive for new rows");
  predict_cmd->add_option("--chain", predict.chain_dir, "fitted chain directory")->required();
  predict_cmd->add_option("--data", predict.data_path, "test data.csv")->required();
  predict_cmd->add_option("--schema", predict.schema_path, "test schema.csv")->required();
  predict_cmd->add_option("--out", predict.out_path, "predictions.csv path")->required();
  predict_cmd->add_option("--seed", predict.seed, "rng seed for covariate augmentation");

  hifm::cli::EvaluateOptions evaluate;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score predictions against labels");
  eval_cmd->add_option("--predictions", evaluate.predictions_path, "predictions.csv")->required();
  eval_cmd->add_option("--data", evaluate.data_path, "truth data.csv")->required();
  eval_cmd->add_option("--schema", evaluate.schema_path, "truth schema.csv")->required();
  eval_cmd->add_option("--out", evaluate.out_dir, "output directory")->required();
  eval_cmd->add_option("--metrics", evaluate.metrics,
                       "metric list: mse auc auprc roc pr sens_spec@<t>");
  eval_cmd->add_option("--subset", evaluate.subset, "row filter, e.g. group==1");

  hifm::cli::StudyOptions study;
  CLI::App* study_cmd = app.add_subcommand("study", "replicated simulation study");
  study_cmd->add_option("--config", study.config_path, "study config file")->required();
  study_cmd->add_option("--out", study.out_dir, "output directory")->required();
  study_cmd->add_flag("--quiet", study.quiet, "suppress progress lines");

  CLI11_PARSE(app, argc, argv);

  if (*sim) return guarded([&] { return hifm::cli::cmd_simulate(simulate); });
  if (*fit_cmd) return guarded([&] { return hifm::cli::cmd_fit(fit); });
  if (*predict_cmd) return guarded([&] { return hifm::cli::cmd_predict(predict); });
  if (*eval_cmd) return guarded([&] { return hifm::cli::cmd_evaluate(evaluate); });
  if (*study_cmd) return guarded([&] { return hifm::cli::cmd_study(study); });
  return hifm::cli::kExitValidation;
}
