#include "fedsim/partition.hpp"

#include <algorithm>

namespace fedsim {

bool operator==(const PartitionPlan& a, const PartitionPlan& b) {
  return a.client_labels == b.client_labels &&
         a.client_samples == b.client_samples &&
         a.client_train == b.client_train && a.client_val == b.client_val &&
         a.pool == b.pool;
}

std::vector<LabelSet> draw_label_sets(int num_global, int num_clients,
                                      int labels_per_client, Rng& rng) {
  if (labels_per_client < 2 || labels_per_client > num_global)
    throw ConfigError("partition: labels_per_client must be in [2, " +
                      std::to_string(num_global) + "]");
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<LabelSet> sets;
    std::vector<bool> covered(num_global, false);
    for (int k = 0; k < num_clients; ++k) {
      auto ids = rng.sample_without_replacement(num_global, labels_per_client);
      for (int y : ids) covered[y] = true;
      sets.push_back(LabelSet::of(std::move(ids), num_global));
    }
    if (std::all_of(covered.begin(), covered.end(), [](bool c) { return c; }))
      return sets;
  }
  throw ConfigError(
      "partition: could not cover all labels after 1000 label draws");
}

PartitionPlan partition(const Dataset& dataset, int num_clients,
                        int labels_per_client, int samples_per_client,
                        int unlabeled_pool_size, Rng& rng) {
  const int Y = dataset.num_classes;
  if (num_clients < 1) throw ConfigError("partition: need at least one client");
  if (samples_per_client < 1)
    throw ConfigError("partition: samples_per_client must be positive");

  std::vector<std::vector<int>> by_label(Y);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_label[dataset.labels[i]].push_back(int(i));

  PartitionPlan plan;
  plan.client_labels = draw_label_sets(Y, num_clients, labels_per_client, rng);

  // Per-client draws: equal per-label counts, remainder spread round-robin
  // over the client's label order. Without replacement within a client.
  for (int k = 0; k < num_clients; ++k) {
    const auto& ls = plan.client_labels[k];
    const int base = samples_per_client / labels_per_client;
    const int rem = samples_per_client % labels_per_client;
    std::vector<int> samples;
    samples.reserve(samples_per_client);
    for (int i = 0; i < labels_per_client; ++i) {
      const int y = ls.labels[i];
      const int need = base + (i < rem ? 1 : 0);
      if (need > int(by_label[y].size()))
        throw ConfigError("partition: client " + std::to_string(k) + " needs " +
                          std::to_string(need) + " samples of label " +
                          std::to_string(y) + " but only " +
                          std::to_string(by_label[y].size()) + " exist");
      for (int j : rng.sample_without_replacement(int(by_label[y].size()), need))
        samples.push_back(by_label[y][j]);
    }
    std::vector<int> shuffled = samples;
    rng.shuffle(shuffled);
    const int n_val = samples_per_client / 5;  // 80/20 split
    plan.client_val.emplace_back(shuffled.begin(), shuffled.begin() + n_val);
    plan.client_train.emplace_back(shuffled.begin() + n_val, shuffled.end());
    plan.client_samples.push_back(std::move(samples));
  }

  // Unlabeled pool: drawn from samples no client touches.
  std::vector<bool> used(dataset.size(), false);
  for (const auto& s : plan.client_samples)
    for (int i : s) used[i] = true;
  std::vector<int> remaining;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!used[i]) remaining.push_back(int(i));
  if (unlabeled_pool_size > int(remaining.size()))
    throw ConfigError("partition: unlabeled pool wants " +
                      std::to_string(unlabeled_pool_size) + " samples but only " +
                      std::to_string(remaining.size()) +
                      " remain outside client data");
  for (int j :
       rng.sample_without_replacement(int(remaining.size()), unlabeled_pool_size))
    plan.pool.push_back(remaining[j]);

  return plan;
}

}  // namespace fedsim
