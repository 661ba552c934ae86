#include "fedsim/synthetic.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

std::vector<double> SyntheticTask::conditional(const double* x) const {
  std::vector<double> logits(num_classes);
  for (int y = 0; y < num_classes; ++y) {
    double z = bias[y];
    const double* w = weight.row_ptr(y);
    for (int d = 0; d < input_dim; ++d) z += w[d] * x[d];
    logits[y] = z;
  }
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - mx);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return logits;
}

std::vector<double> SyntheticTask::conditional_restricted(
    const double* x, const LabelSet& set) const {
  const auto p = conditional(x);
  std::vector<double> out(set.size());
  double mass = 0.0;
  for (int i = 0; i < set.size(); ++i) mass += p[set.labels[i]];
  for (int i = 0; i < set.size(); ++i) out[i] = p[set.labels[i]] / mass;
  return out;
}

void SyntheticTask::sample_input(Rng& rng, double* out) const {
  const int comp = rng.uniform_int(num_classes);
  const double* mu = centers.row_ptr(comp);
  for (int d = 0; d < input_dim; ++d) out[d] = mu[d] + noise_std * rng.normal();
}

int SyntheticTask::sample_label(Rng& rng,
                                const std::vector<double>& conditional) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t y = 0; y < conditional.size(); ++y) {
    acc += conditional[y];
    if (u < acc) return int(y);
  }
  return int(conditional.size()) - 1;
}

SyntheticTask make_synthetic_task(int num_classes, int input_dim,
                                  double center_scale, double sharpness,
                                  double noise_std, Rng& rng) {
  if (num_classes < 2 || input_dim < 1)
    throw ConfigError("synthetic task needs >= 2 classes and >= 1 dimension");
  SyntheticTask t;
  t.num_classes = num_classes;
  t.input_dim = input_dim;
  t.noise_std = noise_std;
  t.centers = Tensor({std::size_t(num_classes), std::size_t(input_dim)});
  for (int y = 0; y < num_classes; ++y) {
    double norm = 0.0;
    double* mu = t.centers.row_ptr(y);
    for (int d = 0; d < input_dim; ++d) {
      mu[d] = rng.normal();
      norm += mu[d] * mu[d];
    }
    norm = std::sqrt(norm);
    for (int d = 0; d < input_dim; ++d) mu[d] *= center_scale / norm;
  }
  t.weight = Tensor({std::size_t(num_classes), std::size_t(input_dim)});
  for (int y = 0; y < num_classes; ++y)
    for (int d = 0; d < input_dim; ++d)
      t.weight.at(y, d) = sharpness * t.centers.at(y, d);
  t.bias.assign(num_classes, 0.0);
  return t;
}

namespace {

Dataset sample_dataset(const SyntheticTask& task, const LabelSet* set, int n,
                       Rng& rng) {
  Dataset d;
  d.provenance = "synthetic";
  d.num_classes = task.num_classes;
  d.images = Tensor({std::size_t(n), std::size_t(task.input_dim)});
  d.labels.resize(n);
  std::vector<double> x(task.input_dim);
  for (int i = 0; i < n; ++i) {
    task.sample_input(rng, x.data());
    for (int dd = 0; dd < task.input_dim; ++dd)
      d.images[std::size_t(i) * task.input_dim + dd] = x[dd];
    if (set) {
      const auto p = task.conditional_restricted(x.data(), *set);
      d.labels[i] = set->labels[task.sample_label(rng, p)];
    } else {
      d.labels[i] = task.sample_label(rng, task.conditional(x.data()));
    }
  }
  return d;
}

}  // namespace

Dataset synth_dataset_global(const SyntheticTask& task, int n, Rng& rng) {
  return sample_dataset(task, nullptr, n, rng);
}

Dataset synth_dataset_client(const SyntheticTask& task, const LabelSet& set,
                             int n, Rng& rng) {
  return sample_dataset(task, &set, n, rng);
}

Tensor synth_pool(const SyntheticTask& task, int n, Rng& rng) {
  Tensor pool({std::size_t(n), std::size_t(task.input_dim)});
  std::vector<double> x(task.input_dim);
  for (int i = 0; i < n; ++i) {
    task.sample_input(rng, x.data());
    for (int d = 0; d < task.input_dim; ++d)
      pool[std::size_t(i) * task.input_dim + d] = x[d];
  }
  return pool;
}

}  // namespace fedsim
