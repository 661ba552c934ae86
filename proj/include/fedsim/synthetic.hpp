#pragma once

#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// Synthetic classification task with a closed-form conditional: inputs are a
// mixture of per-class Gaussians and labels are drawn from a linear-softmax
// conditional, so every client's label distribution given x is exactly the
// global conditional renormalized onto the client's label set.
struct SyntheticTask {
  int num_classes = 0;
  int input_dim = 0;
  Tensor weight;             // num_classes x input_dim
  std::vector<double> bias;  // num_classes
  Tensor centers;            // num_classes x input_dim (mixture components)
  double noise_std = 1.0;

  std::vector<double> conditional(const double* x) const;
  std::vector<double> conditional_restricted(const double* x,
                                             const LabelSet& set) const;
  void sample_input(Rng& rng, double* out) const;
  int sample_label(Rng& rng, const std::vector<double>& conditional) const;
};

// Random centers on a scaled sphere; conditional weight rows point at the
// centers with the given sharpness (higher = less label noise).
SyntheticTask make_synthetic_task(int num_classes, int input_dim,
                                  double center_scale, double sharpness,
                                  double noise_std, Rng& rng);

// n samples with labels from the full conditional (test sets).
Dataset synth_dataset_global(const SyntheticTask& task, int n, Rng& rng);

// n samples for one client: inputs from the global marginal, labels from the
// conditional renormalized onto the client's label set.
Dataset synth_dataset_client(const SyntheticTask& task, const LabelSet& set,
                             int n, Rng& rng);

// n unlabeled inputs from the global marginal (server pool).
Tensor synth_pool(const SyntheticTask& task, int n, Rng& rng);

}  // namespace fedsim
