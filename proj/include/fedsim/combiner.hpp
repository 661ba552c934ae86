#pragma once

#include <functional>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optimizer.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/synthetic.hpp"

namespace fedsim {

enum class TuneLoss { Pairwise, Mse };

// One client's probabilistic predictions over its own label set for a batch
// of inputs, plus its combination weight.
struct ClientPrediction {
  int client = -1;
  double weight = 0.0;
  LabelSet labels;
  Tensor probs;  // batch x |labels|, rows on the simplex
};

// Mean over the batch of sum_k w_k sum_{unordered y != y' in Y_k}
// (h_k(y)h(y') - h_k(y')h(y))^2. Each unordered pair is counted once.
double pairwise_loss(const Tensor& central_probs,
                     const std::vector<ClientPrediction>& preds);

// Mean over the batch of sum_k w_k sum_{y in Y_k} (h_k(y) - h(y))^2.
double mse_loss(const Tensor& central_probs,
                const std::vector<ClientPrediction>& preds);

// Gradients of the losses above w.r.t. the central probabilities.
Tensor pairwise_loss_grad(const Tensor& central_probs,
                          const std::vector<ClientPrediction>& preds);
Tensor mse_loss_grad(const Tensor& central_probs,
                     const std::vector<ClientPrediction>& preds);

// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::vector<double> v);

struct SimplexPgdOptions {
  int max_iters = 500;
  double step = 0.1;
  double tol = 1e-8;
};

// Minimizes the fixed-input pairwise objective over the simplex by projected
// gradient descent from the uniform point. Each prediction holds exactly one
// row. Throws if some label is covered by no client (the minimizer is
// underdetermined there).
std::vector<double> combine_fixed_x(const std::vector<ClientPrediction>& preds,
                                    int num_labels,
                                    const SimplexPgdOptions& opts = {});

// The fixed-input pairwise objective value itself (shared by the solver and
// the grid oracle).
double pairwise_objective_at(const std::vector<double>& h,
                             const std::vector<ClientPrediction>& preds);

// Exhaustive minimizer over the simplex lattice with spacing 1/steps.
// Validation oracle for small label counts.
std::vector<double> grid_search_simplex(
    int num_labels, int steps,
    const std::function<double(const std::vector<double>&)>& objective);

// Variant of the pairwise objective whose pairs range over the central label
// set rather than each client's subset; client probabilities are extended by
// zero outside their label sets. Reproduces the missing-label pathology.
double pairwise_loss_central_pairs(const std::vector<double>& central_probs,
                                   const std::vector<ClientPrediction>& preds);

// Analytic d(pairwise_loss_central_pairs)/d central_probs[label].
double central_pairs_gradient(const std::vector<double>& central_probs,
                              const std::vector<ClientPrediction>& preds,
                              int label);

// Frozen client model handle used during central tuning. When restricted is
// true the classifier already has |Y_k| rows (private mode); otherwise the
// full softmax is restricted to Y_k and renormalized.
struct ClientModel {
  ParameterSet params;
  LabelSet labels;
  double weight = 0.0;
  bool restricted = true;
};

ClientPrediction predict_client(const ClientModel& model,
                                const EncoderSpec& spec, const Tensor& inputs);

// Pool loss and its gradient w.r.t. the classifier, for frozen
// representations. dw/db may be null to compute the loss only.
double tuning_loss_and_grad(const Tensor& reps, const Tensor& classifier_w,
                            const Tensor& classifier_b,
                            const std::vector<ClientPrediction>& preds,
                            TuneLoss kind, Tensor* dw, Tensor* db);

struct TuneResult {
  std::vector<double> epoch_losses;  // pool loss before + after each epoch
  bool applied = true;               // false when rolled back
};

// Tunes only the classifier parameters of `server` against the frozen client
// models on the unlabeled pool. Rolls back (and reports applied=false) on a
// non-finite loss or when the final pool loss exceeds the initial one by
// more than 1%.
TuneResult central_tune(ParameterSet& server, const EncoderSpec& spec,
                        const std::vector<ClientModel>& clients,
                        const Tensor& pool, TuneLoss kind, int epochs,
                        OptKind optimizer, double lr, int batch_size,
                        Rng& rng);

// Builds exact restricted conditionals from the task, combines them at
// sampled inputs, and returns the max l-infinity deviation from the global
// conditional.
double perfect_combination_check(const SyntheticTask& task,
                                 const std::vector<LabelSet>& client_sets,
                                 int num_inputs, Rng& rng,
                                 const SimplexPgdOptions& opts = {});

}  // namespace fedsim
