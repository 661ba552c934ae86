#include <doctest.h>

#include <algorithm>
#include <set>

#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

// Balanced toy dataset: `per_class` samples of each of `classes` labels.
Dataset toy_dataset(int classes, int per_class) {
  Dataset d;
  d.num_classes = classes;
  d.provenance = "synthetic";
  const int n = classes * per_class;
  d.images = Tensor({std::size_t(n), 2});
  d.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    d.labels[i] = i % classes;
    d.images[std::size_t(i) * 2] = double(i);
    d.images[std::size_t(i) * 2 + 1] = double(i % classes);
  }
  return d;
}

}  // namespace

TEST_CASE("full label sets make private and public structurally identical") {
  const Dataset d = toy_dataset(4, 100);
  Rng rng(1);
  const PartitionPlan plan = partition(d, 3, 4, 40, 10, rng);
  for (const auto& set : plan.client_labels) CHECK(set.size() == 4);
}

TEST_CASE("per-label balance at the paper's settings") {
  const Dataset d = toy_dataset(10, 600);
  Rng rng(2);
  const PartitionPlan plan = partition(d, 10, 5, 2000, 100, rng);
  for (int k = 0; k < 10; ++k) {
    CHECK(plan.client_samples[k].size() == 2000);
    std::vector<int> counts(10, 0);
    for (int idx : plan.client_samples[k]) ++counts[d.labels[idx]];
    for (int y = 0; y < 10; ++y) {
      if (plan.client_labels[k].contains(y))
        CHECK(counts[y] == 400);  // 2000 / 5
      else
        CHECK(counts[y] == 0);
    }
    CHECK(plan.client_train[k].size() == 1600);
    CHECK(plan.client_val[k].size() == 400);
  }
}

TEST_CASE("remainders spread round-robin over the client's label order") {
  const Dataset d = toy_dataset(5, 500);
  Rng rng(3);
  const PartitionPlan plan = partition(d, 2, 3, 2000, 0, rng);
  for (int k = 0; k < 2; ++k) {
    std::vector<int> counts(5, 0);
    for (int idx : plan.client_samples[k]) ++counts[d.labels[idx]];
    const auto& order = plan.client_labels[k].labels;
    CHECK(counts[order[0]] == 667);
    CHECK(counts[order[1]] == 667);
    CHECK(counts[order[2]] == 666);
  }
}

TEST_CASE("label sets jointly cover all labels") {
  const Dataset d = toy_dataset(10, 300);
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const PartitionPlan plan = partition(d, 10, 2, 10, 0, rng);
    std::set<int> covered;
    for (const auto& s : plan.client_labels)
      covered.insert(s.labels.begin(), s.labels.end());
    CHECK(covered.size() == 10);
  }
}

TEST_CASE("identical seeds give identical plans") {
  const Dataset d = toy_dataset(6, 200);
  Rng a(42), b(42), c(43);
  const PartitionPlan pa = partition(d, 4, 3, 120, 50, a);
  const PartitionPlan pb = partition(d, 4, 3, 120, 50, b);
  const PartitionPlan pc = partition(d, 4, 3, 120, 50, c);
  CHECK(pa == pb);
  CHECK_FALSE(pa == pc);
}

TEST_CASE("no client sample's label lies outside its label set") {
  const Dataset d = toy_dataset(8, 250);
  Rng rng(7);
  const PartitionPlan plan = partition(d, 6, 3, 300, 200, rng);
  for (int k = 0; k < 6; ++k)
    for (int idx : plan.client_samples[k])
      CHECK(plan.client_labels[k].contains(d.labels[idx]));
}

TEST_CASE("pool is disjoint from every client and has the requested size") {
  const Dataset d = toy_dataset(5, 400);
  Rng rng(8);
  const PartitionPlan plan = partition(d, 3, 2, 100, 150, rng);
  CHECK(plan.pool.size() == 150);
  std::set<int> used;
  for (const auto& s : plan.client_samples) used.insert(s.begin(), s.end());
  for (int idx : plan.pool) CHECK(used.count(idx) == 0);
}

TEST_CASE("train and val are disjoint and partition the client samples") {
  const Dataset d = toy_dataset(5, 400);
  Rng rng(9);
  const PartitionPlan plan = partition(d, 3, 2, 100, 0, rng);
  for (int k = 0; k < 3; ++k) {
    std::set<int> train(plan.client_train[k].begin(),
                        plan.client_train[k].end());
    for (int idx : plan.client_val[k]) CHECK(train.count(idx) == 0);
    std::set<int> all(plan.client_samples[k].begin(),
                      plan.client_samples[k].end());
    CHECK(train.size() + plan.client_val[k].size() == all.size());
  }
}

TEST_CASE("infeasible requests are configuration errors") {
  const Dataset d = toy_dataset(4, 10);
  Rng rng(10);
  CHECK_THROWS_AS(partition(d, 2, 2, 1000, 0, rng), ConfigError);
  Rng rng2(11);
  CHECK_THROWS_AS(partition(d, 2, 1, 10, 0, rng2), ConfigError);  // L < 2
  Rng rng3(12);
  CHECK_THROWS_AS(partition(d, 2, 4, 20, 1000, rng3), ConfigError);  // pool
}

TEST_CASE("labels subset via reverse index round trips") {
  LabelSet set = LabelSet::of({7, 2, 5}, 10);
  CHECK(set.local(7) == 0);
  CHECK(set.local(2) == 1);
  CHECK(set.local(5) == 2);
  CHECK(set.local(3) == -1);
  for (int i = 0; i < set.size(); ++i) CHECK(set.local(set.labels[i]) == i);
  CHECK_THROWS_AS(LabelSet::of({1, 1}, 4), ConfigError);
}
