#pragma once

#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/synthetic.hpp"

namespace fedsim {

struct SeedRow {
  std::string dataset, method, label_mode;
  int labels_per_client = 0;
  int local_epochs = 0;
  std::uint64_t seed = 0;
  double best_test_acc = 0.0;
  int best_round = -1;
};

struct AggRow {
  std::string dataset, method, label_mode;
  int labels_per_client = 0;
  int local_epochs = 0;
  double mean = 0.0, ci_low = 0.0, ci_high = 0.0;
};

struct ResultsTable {
  std::vector<SeedRow> rows;
  std::vector<AggRow> aggregates;
};

// Source data shared by every cell of an experiment.
struct ExperimentData {
  Dataset train;       // image datasets only
  Dataset test;        // image datasets only
  SyntheticTask task;  // synthetic only
  bool synthetic = false;
};

// Loads the dataset named by the config (FEDSIM_DATA_DIR overrides data_dir),
// or builds the synthetic task.
ExperimentData load_experiment_data(const ExperimentConfig& config);

EncoderSpec make_encoder_spec(const ExperimentConfig& config,
                              const ExperimentData& data);

// One (labels-per-client, local-epochs, seed) cell: partition, federate,
// record. Pure given its arguments.
RunResult run_single_cell(const ExperimentConfig& config,
                          const ExperimentData& data, int labels_per_client,
                          int local_epochs, std::uint64_t seed);

struct ExperimentOutput {
  ResultsTable table;
  std::vector<std::string> failures;  // "cell L=.. E=.. seed=..: reason"
};

// Runs the full sweep, writes results.csv / results_agg.csv / results.json
// plus per-run history files into config.output_dir.
ExperimentOutput run_experiment(const ExperimentConfig& config);

void emit_csv(const ResultsTable& table, const std::string& rows_path,
              const std::string& agg_path);
void emit_json(const ResultsTable& table, const std::string& path);
ResultsTable read_results_json(const std::string& path);

}  // namespace fedsim
