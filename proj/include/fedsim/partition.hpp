#pragma once

#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Client/server assignment over one source dataset. All index lists point
// into the source dataset that produced the plan.
struct PartitionPlan {
  std::vector<LabelSet> client_labels;
  std::vector<std::vector<int>> client_samples;  // train+val, per client
  std::vector<std::vector<int>> client_train;    // 80%
  std::vector<std::vector<int>> client_val;      // 20%
  std::vector<int> pool;                         // server unlabeled pool
};

bool operator==(const PartitionPlan& a, const PartitionPlan& b);

// Uniform label subsets of size labels_per_client, redrawn until their union
// covers all num_global labels (hard error after 1000 attempts).
std::vector<LabelSet> draw_label_sets(int num_global, int num_clients,
                                      int labels_per_client, Rng& rng);

// Draws label sets, then per client samples_per_client samples over its
// labels as class-balanced as divisibility allows, without replacement within
// the client. The pool is drawn from the samples no client uses.
PartitionPlan partition(const Dataset& dataset, int num_clients,
                        int labels_per_client, int samples_per_client,
                        int unlabeled_pool_size, Rng& rng);

}  // namespace fedsim
