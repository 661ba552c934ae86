#pragma once

#include "fedsim/model.hpp"

namespace fedsim {

enum class OptKind { Adam, Sgd };

// Moment buffers follow ParameterSet::all_tensors() order and stay
// shape-congruent with the parameters they track.
struct OptimizerState {
  OptKind kind = OptKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  ParameterSet m, v;  // Adam moments; unused for SGD
};

OptimizerState make_optimizer(OptKind kind, double lr,
                              const ParameterSet& params);

// In-place update. Refuses the whole step on any non-finite gradient.
void optimizer_step(OptimizerState& state, ParameterSet& params,
                    const ParameterSet& grads);

}  // namespace fedsim
