#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/federation.hpp"

namespace fedsim {

// One experiment: a sweep over labels-per-client and local-epochs values,
// each point run once per seed.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // fashion-mnist | cifar10 | synthetic
  std::string data_dir = "data";
  std::string output_dir = "results";

  Method method = Method::FedAvg;
  LabelMode label_mode = LabelMode::Public;
  int num_clients = 10;
  std::vector<int> labels_per_client{5};
  std::vector<int> local_epochs{1};
  int samples_per_client = 2000;
  int unlabeled_pool_size = -1;  // -1 = dataset default (5000/6000)
  int rounds = 100;
  int batch_size = 64;
  double lr = 1e-3;
  double fedprox_mu = 1e-2;
  double fedrs_alpha = 0.5;
  int tuning_epochs = 3;
  OptKind tuning_optimizer = OptKind::Adam;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool parallel_cells = true;

  // Encoder: "auto" picks cnn for image datasets, mlp for synthetic.
  std::string encoder = "auto";
  std::vector<int> mlp_hidden{64, 32};

  // Synthetic task knobs.
  int synth_classes = 10;
  int synth_input_dim = 16;
  double synth_center_scale = 3.0;
  double synth_sharpness = 1.0;
  double synth_noise = 1.0;
  int synth_test_size = 5000;

  int pool_size_or_default() const;
  void validate() const;
  std::string echo() const;  // canonical key=value rendering
};

// Line-oriented `key = value` text; '#' starts a comment; lists are
// comma-separated. Unknown keys are hard errors.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

}  // namespace fedsim
