#include "fedsim/optimizer.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

OptimizerState make_optimizer(OptKind kind, double lr,
                              const ParameterSet& params) {
  OptimizerState s;
  s.kind = kind;
  s.lr = lr;
  if (kind == OptKind::Adam) {
    s.m = zeros_like(params);
    s.v = zeros_like(params);
  }
  return s;
}

void optimizer_step(OptimizerState& state, ParameterSet& params,
                    const ParameterSet& grads) {
  if (!params.congruent_with(grads))
    throw UsageError("gradient shapes do not match parameters");
  if (!grads.all_finite())
    throw NumericalError("non-finite gradient: optimizer step refused");

  state.step_count += 1;
  auto ps = params.all_tensors();
  auto gs = grads.all_tensors();

  if (state.kind == OptKind::Sgd) {
    for (std::size_t t = 0; t < ps.size(); ++t)
      for (std::size_t i = 0; i < ps[t]->numel(); ++i)
        (*ps[t])[i] -= state.lr * (*gs[t])[i];
    return;
  }

  if (!state.m.congruent_with(params))
    throw UsageError("optimizer state not congruent with parameters");
  auto ms = state.m.all_tensors();
  auto vs = state.v.all_tensors();
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t i = 0; i < ps[t]->numel(); ++i) {
      const double g = (*gs[t])[i];
      double& m = (*ms[t])[i];
      double& v = (*vs[t])[i];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      (*ps[t])[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace fedsim
