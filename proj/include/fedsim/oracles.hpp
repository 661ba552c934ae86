#pragma once

#include <string>

#include "fedsim/combiner.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Classifier rows [theta_psi(y) : y in set] in the set's order, full encoder.
ParameterSet restrict_classifier(const ParameterSet& params,
                                 const LabelSet& set);

// Property-suite results. `value` is the suite's headline number (a maximum
// deviation or error); pass reflects the suite's own threshold.
struct OracleReport {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;
};

// Softmax restriction identity: restricted softmax equals the renormalized
// full softmax within 1e-9, over random models, inputs and label subsets.
OracleReport eq2_identity_suite(int cases = 100);

// Fixed-input combiner recovers the global conditional from the two-client
// three-label construction within 1e-3.
OracleReport prop1_fixed_case();

// Fixed-input combiner agrees with the exhaustive grid oracle within twice
// the grid resolution on random subset-consistent tasks with <= 4 labels.
OracleReport prop1_random_tasks(int tasks = 20);

// Missing-label pathology of the central-pairs pairwise loss: the gradient
// w.r.t. the absent label's probability is non-negative and matches finite
// differences in sign.
OracleReport appendix_b_suite(int instances = 1000);

// Finite-difference gradient checks, reporting the max relative error.
OracleReport gradcheck_mlp();
OracleReport gradcheck_cnn();
OracleReport gradcheck_classifier_only();
OracleReport gradcheck_tuning(TuneLoss kind);

}  // namespace fedsim
