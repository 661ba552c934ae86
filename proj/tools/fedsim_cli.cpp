// Experiment driver: run sweeps, validate configs, and execute the built-in
// property suites.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/oracles.hpp"

namespace {

int print_reports(const std::vector<fedsim::OracleReport>& reports) {
  bool all_pass = true;
  for (const auto& r : reports) {
    std::printf("[%s] %-28s value=%.3e  %s\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.value, r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: federated learning simulator for heterogeneous and "
               "private label sets"};
  app.require_subcommand(1);

  std::string config_path;

  auto* run = app.add_subcommand("run", "run the experiment sweep in a config");
  run->add_option("config", config_path, "config file")->required();

  auto* validate =
      app.add_subcommand("validate", "parse and echo a config, then exit");
  validate->add_option("config", config_path, "config file")->required();

  auto* oracle = app.add_subcommand(
      "oracle", "run the restriction-identity, perfect-combination and "
                "missing-label property suites");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks for both encoders and both "
                   "tuning losses");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const fedsim::ExperimentConfig config =
          fedsim::load_config_file(config_path);
      const fedsim::ExperimentOutput output = fedsim::run_experiment(config);
      for (const auto& f : output.failures)
        std::cerr << "[failed] " << f << "\n";
      std::printf("wrote %zu per-seed rows, %zu aggregate rows to %s\n",
                  output.table.rows.size(), output.table.aggregates.size(),
                  config.output_dir.c_str());
      return output.failures.empty() ? 0 : 1;
    }
    if (validate->parsed()) {
      const fedsim::ExperimentConfig config =
          fedsim::load_config_file(config_path);
      std::cout << config.echo();
      std::printf("config ok: %zu sweep points x %zu seeds\n",
                  config.labels_per_client.size() * config.local_epochs.size(),
                  config.seeds.size());
      return 0;
    }
    if (oracle->parsed()) {
      return print_reports({
          fedsim::eq2_identity_suite(),
          fedsim::prop1_fixed_case(),
          fedsim::prop1_random_tasks(),
          fedsim::appendix_b_suite(),
      });
    }
    if (gradcheck->parsed()) {
      return print_reports({
          fedsim::gradcheck_mlp(),
          fedsim::gradcheck_cnn(),
          fedsim::gradcheck_classifier_only(),
          fedsim::gradcheck_tuning(fedsim::TuneLoss::Pairwise),
          fedsim::gradcheck_tuning(fedsim::TuneLoss::Mse),
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
