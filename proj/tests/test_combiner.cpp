#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedsim/combiner.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/oracles.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

ClientPrediction make_pred(std::vector<int> labels, int num_global,
                           std::vector<double> rows, double weight) {
  ClientPrediction cp;
  cp.weight = weight;
  cp.labels = LabelSet::of(std::move(labels), num_global);
  const std::size_t width = std::size_t(cp.labels.size());
  cp.probs = Tensor({rows.size() / width, width});
  std::copy(rows.begin(), rows.end(), cp.probs.data.begin());
  return cp;
}

std::vector<double> random_simplex(Rng& rng, int n) {
  std::vector<double> v(n);
  double sum = 0.0;
  for (double& x : v) {
    x = -std::log(std::max(rng.uniform(), 1e-300));
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

// Independent recomputation: ordered pairs, halved.
double pairwise_naive(const Tensor& central,
                      const std::vector<ClientPrediction>& preds) {
  double total = 0.0;
  for (std::size_t i = 0; i < central.rows(); ++i)
    for (const auto& cp : preds) {
      double acc = 0.0;
      for (int a = 0; a < cp.labels.size(); ++a)
        for (int b = 0; b < cp.labels.size(); ++b) {
          if (a == b) continue;
          const double r =
              cp.probs.at(i, std::size_t(a)) *
                  central.at(i, std::size_t(cp.labels.labels[b])) -
              cp.probs.at(i, std::size_t(b)) *
                  central.at(i, std::size_t(cp.labels.labels[a]));
          acc += 0.5 * r * r;
        }
      total += cp.weight * acc;
    }
  return total / double(central.rows());
}

double mse_naive(const Tensor& central,
                 const std::vector<ClientPrediction>& preds) {
  double total = 0.0;
  for (std::size_t i = 0; i < central.rows(); ++i)
    for (const auto& cp : preds)
      for (int a = 0; a < cp.labels.size(); ++a) {
        const double d = cp.probs.at(i, std::size_t(a)) -
                         central.at(i, std::size_t(cp.labels.labels[a]));
        total += cp.weight * d * d;
      }
  return total / double(central.rows());
}

}  // namespace

TEST_CASE("projection onto the simplex") {
  const auto p = project_simplex({0.4, 0.3, 0.3});
  CHECK(p[0] == doctest::Approx(0.4));
  const auto q = project_simplex({2.0, -1.0, 0.5});
  double sum = 0.0;
  for (double v : q) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q[1] == 0.0);
}

TEST_CASE("combine_fixed_x recovers the global conditional (prop 1)") {
  const auto report = prop1_fixed_case();
  CHECK(report.pass);
  CHECK(report.value < 1e-3);
}

TEST_CASE("single full-label client: combination equals its prediction") {
  const std::vector<double> truth{0.2, 0.3, 0.5};
  const auto preds = std::vector<ClientPrediction>{
      make_pred({0, 1, 2}, 3, truth, 1.0)};
  const auto h = combine_fixed_x(preds, 3);
  for (int y = 0; y < 3; ++y) CHECK(std::abs(h[y] - truth[y]) < 1e-9);
}

TEST_CASE("uniform clients over the full set combine to uniform") {
  const std::vector<double> u{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto preds = std::vector<ClientPrediction>{
      make_pred({0, 1, 2}, 3, u, 0.5), make_pred({0, 1, 2}, 3, u, 0.5)};
  const auto h = combine_fixed_x(preds, 3);
  for (int y = 0; y < 3; ++y) CHECK(h[y] == doctest::Approx(1.0 / 3));
}

TEST_CASE("uncovered labels make the combination undetermined") {
  const auto preds = std::vector<ClientPrediction>{
      make_pred({0, 1}, 3, {0.5, 0.5}, 1.0)};
  CHECK_THROWS_AS(combine_fixed_x(preds, 3), UsageError);
}

TEST_CASE("pairwise loss closed forms") {
  // Perfect subset-consistent clients at the exact combination: zero loss.
  Rng rng(3);
  const int B = 4, L = 5;
  Tensor central({std::size_t(B), std::size_t(L)});
  for (int i = 0; i < B; ++i) {
    const auto p = random_simplex(rng, L);
    std::copy(p.begin(), p.end(), central.row_ptr(std::size_t(i)));
  }
  std::vector<ClientPrediction> preds;
  for (auto ids : {std::vector<int>{0, 1, 2}, {2, 3, 4}, {1, 4}}) {
    ClientPrediction cp;
    cp.weight = 1.0 / 3.0;
    cp.labels = LabelSet::of(ids, L);
    cp.probs = Tensor({std::size_t(B), ids.size()});
    for (int i = 0; i < B; ++i) {
      double mass = 0.0;
      for (int y : ids) mass += central.at(std::size_t(i), std::size_t(y));
      for (std::size_t a = 0; a < ids.size(); ++a)
        cp.probs.at(std::size_t(i), a) =
            central.at(std::size_t(i), std::size_t(ids[a])) / mass;
    }
    preds.push_back(std::move(cp));
  }
  CHECK(pairwise_loss(central, preds) < 1e-12);

  // Single client renormalizing match contributes zero.
  Tensor h = Tensor::row_matrix(1, 3, {0.3, 0.3, 0.4});
  const auto even = std::vector<ClientPrediction>{
      make_pred({0, 1}, 3, {0.5, 0.5}, 1.0)};
  CHECK(pairwise_loss(h, even) == 0.0);

  // Hand computation: h_k=[1,0] on {0,1}, h=[0.3,0.3,0.4] -> 0.09.
  const auto hard = std::vector<ClientPrediction>{
      make_pred({0, 1}, 3, {1.0, 0.0}, 1.0)};
  CHECK(pairwise_loss(h, hard) == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("mse loss closed forms and naive-loop oracle") {
  Tensor h = Tensor::row_matrix(1, 2, {0.6, 0.4});
  const auto one = std::vector<ClientPrediction>{make_pred({0}, 2, {1.0}, 1.0)};
  CHECK(mse_loss(h, one) == doctest::Approx(0.16).epsilon(1e-12));

  // Exact match over the client's labels -> zero.
  const auto match = std::vector<ClientPrediction>{
      make_pred({0, 1}, 2, {0.6, 0.4}, 1.0)};
  CHECK(mse_loss(h, match) == 0.0);

  // Random instances vs the naive recomputation.
  Rng rng(4);
  const int B = 6, L = 6;
  Tensor central({std::size_t(B), std::size_t(L)});
  for (int i = 0; i < B; ++i) {
    const auto p = random_simplex(rng, L);
    std::copy(p.begin(), p.end(), central.row_ptr(std::size_t(i)));
  }
  std::vector<ClientPrediction> preds;
  for (int k = 0; k < 3; ++k) {
    const int size = 2 + rng.uniform_int(L - 1);
    auto ids = rng.sample_without_replacement(L, size);
    std::vector<double> rows;
    for (int i = 0; i < B; ++i) {
      const auto r = random_simplex(rng, size);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    preds.push_back(make_pred(ids, L, rows, 1.0 / 3.0));
  }
  CHECK(std::abs(mse_loss(central, preds) - mse_naive(central, preds)) < 1e-12);
  CHECK(std::abs(pairwise_loss(central, preds) -
                 pairwise_naive(central, preds)) < 1e-12);
}

TEST_CASE("losses are invariant under client reordering and label permutation") {
  Rng rng(5);
  const int B = 3, L = 4;
  Tensor central({std::size_t(B), std::size_t(L)});
  for (int i = 0; i < B; ++i) {
    const auto p = random_simplex(rng, L);
    std::copy(p.begin(), p.end(), central.row_ptr(std::size_t(i)));
  }
  std::vector<ClientPrediction> preds;
  for (int k = 0; k < 3; ++k) {
    const int size = 2 + rng.uniform_int(L - 1);
    auto ids = rng.sample_without_replacement(L, size);
    std::vector<double> rows;
    for (int i = 0; i < B; ++i) {
      const auto r = random_simplex(rng, size);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    preds.push_back(make_pred(ids, L, rows, k == 0 ? 0.5 : 0.25));
  }

  auto reordered = preds;
  std::reverse(reordered.begin(), reordered.end());
  CHECK(std::abs(pairwise_loss(central, preds) -
                 pairwise_loss(central, reordered)) < 1e-12);
  CHECK(std::abs(mse_loss(central, preds) - mse_loss(central, reordered)) <
        1e-12);

  const std::vector<int> perm{3, 0, 2, 1};
  Tensor permuted({std::size_t(B), std::size_t(L)});
  for (int i = 0; i < B; ++i)
    for (int y = 0; y < L; ++y)
      permuted.at(std::size_t(i), std::size_t(perm[y])) =
          central.at(std::size_t(i), std::size_t(y));
  std::vector<ClientPrediction> mapped;
  for (const auto& cp : preds) {
    ClientPrediction mp = cp;
    std::vector<int> ids;
    for (int y : cp.labels.labels) ids.push_back(perm[y]);
    mp.labels = LabelSet::of(ids, L);
    mapped.push_back(std::move(mp));
  }
  CHECK(std::abs(pairwise_loss(central, preds) -
                 pairwise_loss(permuted, mapped)) < 1e-12);
  CHECK(std::abs(mse_loss(central, preds) - mse_loss(permuted, mapped)) <
        1e-12);
}

TEST_CASE("weight rescaling scales values but keeps the grid argmin") {
  std::vector<ClientPrediction> preds{
      make_pred({0, 1}, 3, {0.4, 0.6}, 0.5),
      make_pred({1, 2}, 3, {0.375, 0.625}, 0.5)};
  auto scaled = preds;
  for (auto& cp : scaled) cp.weight *= 3.0;

  const std::vector<double> h{0.3, 0.45, 0.25};
  CHECK(pairwise_objective_at(h, scaled) ==
        doctest::Approx(3.0 * pairwise_objective_at(h, preds)).epsilon(1e-12));

  const auto a = grid_search_simplex(3, 50, [&](const std::vector<double>& p) {
    return pairwise_objective_at(p, preds);
  });
  const auto b = grid_search_simplex(3, 50, [&](const std::vector<double>& p) {
    return pairwise_objective_at(p, scaled);
  });
  CHECK(a == b);
}

TEST_CASE("pgd agrees with the exhaustive grid for small label counts") {
  const auto report = prop1_random_tasks(8);
  CHECK(report.pass);
  CHECK(report.value <= 0.02);
}

TEST_CASE("central tuning leaves the model alone for zero epochs or zero lr") {
  Rng rng(6);
  EncoderSpec spec = EncoderSpec::mlp(3, {5});
  ParameterSet server = init_params(spec, 3, rng);
  Tensor pool({8, 3});
  for (double& v : pool.data) v = rng.normal();

  std::vector<ClientModel> clients;
  ClientModel cm;
  cm.params = restrict_classifier(server, LabelSet::of({0, 1}, 3));
  cm.labels = LabelSet::of({0, 1}, 3);
  cm.weight = 1.0;
  clients.push_back(cm);

  const ParameterSet before = server;
  Rng t1(1);
  const TuneResult zero_epochs = central_tune(
      server, spec, clients, pool, TuneLoss::Mse, 0, OptKind::Adam, 1e-3, 4, t1);
  CHECK(server == before);
  CHECK(zero_epochs.epoch_losses.size() == 1);

  Rng t2(2);
  const TuneResult zero_lr = central_tune(
      server, spec, clients, pool, TuneLoss::Mse, 3, OptKind::Sgd, 0.0, 4, t2);
  CHECK(server == before);
  CHECK(zero_lr.epoch_losses.size() == 4);
  for (double l : zero_lr.epoch_losses)
    CHECK(l == doctest::Approx(zero_lr.epoch_losses.front()));
}

TEST_CASE("central tuning reduces the pool loss from a perturbed start") {
  Rng rng(7);
  EncoderSpec spec = EncoderSpec::mlp(3, {6});
  ParameterSet truth = init_params(spec, 4, rng);
  Tensor pool({64, 3});
  for (double& v : pool.data) v = rng.normal();

  std::vector<ClientModel> clients;
  for (auto ids : {std::vector<int>{0, 1, 2}, {2, 3, 0}}) {
    ClientModel cm;
    cm.labels = LabelSet::of(ids, 4);
    cm.params = restrict_classifier(truth, cm.labels);
    cm.weight = 0.5;
    clients.push_back(std::move(cm));
  }

  ParameterSet server = truth;
  for (double& v : server.classifier_w.data) v += 0.5 * rng.normal();
  const Tensor encoder_before = server.encoder[0];

  Rng trng(3);
  const TuneResult tuned =
      central_tune(server, spec, clients, pool, TuneLoss::Mse, 3,
                   OptKind::Adam, 1e-2, 16, trng);
  CHECK(tuned.applied);
  CHECK(tuned.epoch_losses.back() < tuned.epoch_losses.front());
  CHECK(server.encoder[0] == encoder_before);  // encoder untouched, bitwise
}

TEST_CASE("tuning loss gradients match finite differences") {
  CHECK(gradcheck_tuning(TuneLoss::Pairwise).value < 1e-4);
  CHECK(gradcheck_tuning(TuneLoss::Mse).value < 1e-4);
}

TEST_CASE("perfect combination check") {
  SUBCASE("three labels, two clients") {
    SyntheticTask task;
    task.num_classes = 3;
    task.input_dim = 1;
    task.weight = Tensor({3, 1});
    task.bias = {std::log(0.2), std::log(0.3), std::log(0.5)};
    task.centers = Tensor({3, 1});
    task.noise_std = 1.0;
    Rng rng(8);
    const double dev = perfect_combination_check(
        task, {LabelSet::of({0, 1}, 3), LabelSet::of({1, 2}, 3)}, 5, rng);
    CHECK(dev < 1e-3);
  }
  SUBCASE("single full-label client is exact") {
    Rng rng(9);
    SyntheticTask task = make_synthetic_task(3, 2, 2.0, 1.0, 1.0, rng);
    const double dev =
        perfect_combination_check(task, {LabelSet::full(3)}, 5, rng);
    CHECK(dev < 1e-12);
  }
  SUBCASE("deterministic labels stay one-hot") {
    SyntheticTask task;
    task.num_classes = 3;
    task.input_dim = 1;
    task.weight = Tensor({3, 1});
    task.bias = {200.0, 0.0, 0.0};  // p = [1, 0, 0] everywhere
    task.centers = Tensor({3, 1});
    task.noise_std = 1.0;
    Rng rng(10);
    const double dev = perfect_combination_check(
        task, {LabelSet::of({0, 1}, 3), LabelSet::of({0, 2}, 3)}, 3, rng);
    CHECK(dev < 1e-9);
  }
}

TEST_CASE("missing-label variant pushes the absent probability down") {
  // Absent label 2 in a 3-label problem, one client on {0, 1}.
  const auto preds = std::vector<ClientPrediction>{
      make_pred({0, 1}, 3, {0.8, 0.2}, 1.0)};

  SUBCASE("zero probability means zero gradient") {
    CHECK(central_pairs_gradient({0.6, 0.4, 0.0}, preds, 2) == 0.0);
  }
  SUBCASE("closed form 2 h^2 p") {
    const std::vector<double> p{0.5, 0.2, 0.3};
    const double expected =
        2.0 * 0.8 * 0.8 * 0.3 + 2.0 * 0.2 * 0.2 * 0.3;  // pairs (0,2), (1,2)
    CHECK(central_pairs_gradient(p, preds, 2) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(central_pairs_gradient(p, preds, 2) >= 0.0);
  }
  SUBCASE("random instances: non-negative and matching finite differences") {
    const auto report = appendix_b_suite(200);
    CHECK(report.pass);
  }
}

TEST_CASE("loss is zero iff the restriction matches") {
  Tensor central = Tensor::row_matrix(1, 3, {0.2, 0.3, 0.5});
  auto match = std::vector<ClientPrediction>{
      make_pred({0, 1}, 3, {0.4, 0.6}, 1.0)};
  CHECK(pairwise_loss(central, match) < 1e-30);
  CHECK(mse_loss(central, std::vector<ClientPrediction>{make_pred(
                              {0, 1, 2}, 3, {0.2, 0.3, 0.5}, 1.0)}) == 0.0);

  auto off = std::vector<ClientPrediction>{
      make_pred({0, 1}, 3, {0.5, 0.5}, 1.0)};
  CHECK(pairwise_loss(central, off) > 1e-4);
  CHECK(mse_loss(central, off) > 1e-3);
}
