#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct RoundRecord {
  int round = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double tuning_loss = 0.0;                // final pool loss; NaN when no tuning
  std::vector<double> tuning_epoch_losses; // pool loss before + after each epoch
  double wall_seconds = 0.0;
};

struct RunResult {
  std::string config_echo;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> history;
  int best_round = -1;
  double best_test_acc = 0.0;
};

// Top-1 accuracy; argmax ties go to the lowest label id.
double accuracy(const ParameterSet& params, const EncoderSpec& spec,
                const Dataset& dataset, int batch_size = 256);

// Round with the highest validation accuracy (earliest on ties) and the test
// accuracy recorded there.
std::pair<int, double> select_best_snapshot(
    const std::vector<RoundRecord>& history);

struct BootstrapCi {
  double low = 0.0;
  double high = 0.0;
  double mean = 0.0;
};

// Percentile bootstrap over resampled means.
BootstrapCi bootstrap_ci(const std::vector<double>& values, double level,
                         int resamples, Rng& rng);

}  // namespace fedsim
