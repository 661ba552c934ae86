#include "fedsim/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {
constexpr std::uint64_t kOracleTag = 0x6f72636c;  // "orcl"

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

Tensor random_batch(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Finite differences lie near relu/pooling kinks, so the gradcheck oracles
// evaluate at a batch whose smallest kink margin clears the probe step.
Tensor smooth_batch(Rng& rng, const ParameterSet& params,
                    const EncoderSpec& spec, std::vector<std::size_t> shape,
                    double min_margin) {
  Tensor best;
  double best_margin = -1.0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Tensor candidate = random_batch(rng, shape);
    const double margin = kink_margin(params, spec, candidate);
    if (margin > best_margin) {
      best_margin = margin;
      best = candidate;
    }
    if (best_margin >= min_margin) break;
  }
  return best;
}

}  // namespace

ParameterSet restrict_classifier(const ParameterSet& params,
                                 const LabelSet& set) {
  if (std::size_t(set.num_global) != params.num_labels())
    throw UsageError("label set global size does not match classifier rows");
  ParameterSet out;
  out.encoder = params.encoder;
  const std::size_t r = params.classifier_w.cols();
  out.classifier_w = Tensor({std::size_t(set.size()), r});
  out.classifier_b = Tensor({std::size_t(set.size())});
  for (int i = 0; i < set.size(); ++i) {
    const std::size_t y = std::size_t(set.labels[i]);
    const double* src = params.classifier_w.row_ptr(y);
    std::copy(src, src + r, out.classifier_w.row_ptr(std::size_t(i)));
    out.classifier_b[std::size_t(i)] = params.classifier_b[y];
  }
  return out;
}

OracleReport eq2_identity_suite(int cases) {
  OracleReport report{"eq2_restriction_identity"};
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    Rng rng = Rng::stream(kOracleTag, 0x657132, std::uint64_t(c));
    const int L = 3 + rng.uniform_int(8);
    const int d = 4 + rng.uniform_int(5);
    EncoderSpec spec = EncoderSpec::mlp(d, {8, 6});
    ParameterSet params = init_params(spec, L, rng);
    // Spread the classifier so the identity is exercised away from uniform.
    for (double& v : params.classifier_w.data) v = rng.normal();
    for (double& v : params.classifier_b.data) v = rng.normal();
    const Tensor batch = random_batch(rng, {2, std::size_t(d)});

    const int subset_size = 2 + rng.uniform_int(L - 1);
    LabelSet set = LabelSet::of(rng.sample_without_replacement(L, subset_size), L);

    const Tensor full = forward(params, spec, batch, false).probabilities;
    const Tensor restricted =
        forward(restrict_classifier(params, set), spec, batch, false)
            .probabilities;

    for (std::size_t i = 0; i < batch.rows(); ++i) {
      double mass = 0.0;
      for (int a = 0; a < set.size(); ++a)
        mass += full.at(i, std::size_t(set.labels[a]));
      for (int a = 0; a < set.size(); ++a) {
        const double renorm = full.at(i, std::size_t(set.labels[a])) / mass;
        worst = std::max(worst,
                         std::abs(restricted.at(i, std::size_t(a)) - renorm));
      }
    }
  }
  report.value = worst;
  report.pass = worst < 1e-9;
  report.detail = "max |restricted - renormalized| over " +
                  std::to_string(cases) + " cases";
  return report;
}

OracleReport prop1_fixed_case() {
  OracleReport report{"prop1_fixed_construction"};
  // Global p = [0.2, 0.3, 0.5]; subsets {0,1} and {1,2} give exact client
  // conditionals [0.4, 0.6] and [0.375, 0.625].
  std::vector<ClientPrediction> preds(2);
  preds[0].weight = 0.5;
  preds[0].labels = LabelSet::of({0, 1}, 3);
  preds[0].probs = Tensor::row_matrix(1, 2, {0.4, 0.6});
  preds[1].weight = 0.5;
  preds[1].labels = LabelSet::of({1, 2}, 3);
  preds[1].probs = Tensor::row_matrix(1, 2, {0.375, 0.625});

  const auto h = combine_fixed_x(preds, 3);
  const double truth[3] = {0.2, 0.3, 0.5};
  double worst = 0.0;
  for (int y = 0; y < 3; ++y) worst = std::max(worst, std::abs(h[y] - truth[y]));
  report.value = worst;
  report.pass = worst < 1e-3;
  report.detail = "l-inf deviation from [0.2, 0.3, 0.5]";
  return report;
}

OracleReport prop1_random_tasks(int tasks) {
  OracleReport report{"prop1_grid_agreement"};
  double worst = 0.0;
  for (int t = 0; t < tasks; ++t) {
    Rng rng = Rng::stream(kOracleTag, 0x70726f70, std::uint64_t(t));
    const int Y = 3 + rng.uniform_int(2);  // 3 or 4 labels
    SyntheticTask task =
        make_synthetic_task(Y, 2, 2.0, 1.0, 1.0, rng);

    // Random covering subsets of sizes >= 2.
    std::vector<LabelSet> sets;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw Error("could not draw covering subsets");
      sets.clear();
      std::vector<bool> covered(Y, false);
      const int m = 2 + rng.uniform_int(2);
      for (int k = 0; k < m; ++k) {
        const int size = 2 + rng.uniform_int(Y - 1);
        auto ids = rng.sample_without_replacement(Y, size);
        for (int y : ids) covered[y] = true;
        sets.push_back(LabelSet::of(std::move(ids), Y));
      }
      if (std::all_of(covered.begin(), covered.end(),
                      [](bool c) { return c; }))
        break;
    }

    std::vector<double> x(task.input_dim);
    task.sample_input(rng, x.data());
    std::vector<ClientPrediction> preds;
    for (const auto& set : sets) {
      ClientPrediction cp;
      cp.weight = 1.0 / double(sets.size());
      cp.labels = set;
      const auto cond = task.conditional_restricted(x.data(), set);
      cp.probs = Tensor({1, cond.size()});
      std::copy(cond.begin(), cond.end(), cp.probs.data.begin());
      preds.push_back(std::move(cp));
    }

    const auto pgd = combine_fixed_x(preds, Y);
    const auto grid = grid_search_simplex(
        Y, 100,
        [&](const std::vector<double>& h) {
          return pairwise_objective_at(h, preds);
        });
    for (int y = 0; y < Y; ++y)
      worst = std::max(worst, std::abs(pgd[y] - grid[y]));
  }
  report.value = worst;
  report.pass = worst <= 0.02;  // twice the 0.01 grid resolution
  report.detail = "max |pgd - grid argmin| over " + std::to_string(tasks) +
                  " random tasks";
  return report;
}

OracleReport appendix_b_suite(int instances) {
  OracleReport report{"appendix_b_missing_label"};
  double min_grad = 0.0;
  int sign_mismatches = 0;
  for (int t = 0; t < instances; ++t) {
    Rng rng = Rng::stream(kOracleTag, 0x61707042, std::uint64_t(t));
    const int Y = 3 + rng.uniform_int(8);
    const int absent = rng.uniform_int(Y);

    std::vector<int> others;
    for (int y = 0; y < Y; ++y)
      if (y != absent) others.push_back(y);

    const int m = 1 + rng.uniform_int(3);
    std::vector<ClientPrediction> preds;
    for (int k = 0; k < m; ++k) {
      const int size = 2 + rng.uniform_int(int(others.size()) - 1);
      std::vector<int> ids;
      for (int j : rng.sample_without_replacement(int(others.size()), size))
        ids.push_back(others[j]);
      ClientPrediction cp;
      cp.weight = 1.0 / double(m);
      cp.labels = LabelSet::of(std::move(ids), Y);
      const auto probs = random_simplex(rng, size);
      cp.probs = Tensor({1, std::size_t(size)});
      std::copy(probs.begin(), probs.end(), cp.probs.data.begin());
      preds.push_back(std::move(cp));
    }

    std::vector<double> p = random_simplex(rng, Y);
    p[absent] = std::max(p[absent], 1e-3);  // keep the absent label's mass positive

    const double analytic = central_pairs_gradient(p, preds, absent);
    min_grad = std::min(min_grad, analytic);

    const double eps = 1e-6;
    std::vector<double> up = p, down = p;
    up[absent] += eps;
    down[absent] -= eps;
    const double fd = (pairwise_loss_central_pairs(up, preds) -
                       pairwise_loss_central_pairs(down, preds)) /
                      (2.0 * eps);
    const bool sign_ok = (analytic >= 0.0 && fd >= -1e-9) ||
                         (std::abs(analytic - fd) <=
                          1e-6 * std::max(1.0, std::abs(analytic)));
    if (!sign_ok) ++sign_mismatches;
  }
  report.value = min_grad;
  report.pass = min_grad >= -1e-12 && sign_mismatches == 0;
  report.detail = "min analytic gradient over " + std::to_string(instances) +
                  " instances; " + std::to_string(sign_mismatches) +
                  " sign mismatches vs finite differences";
  return report;
}

OracleReport gradcheck_mlp() {
  OracleReport report{"gradcheck_mlp"};
  Rng rng = Rng::stream(kOracleTag, 0x6d6c70);
  EncoderSpec spec = EncoderSpec::mlp(6, {8, 5});
  ParameterSet params = init_params(spec, 4, rng);
  const Tensor batch = random_batch(rng, {8, 6});
  std::vector<int> labels(8);
  for (int& y : labels) y = rng.uniform_int(4);
  report.value = grad_check(params, spec, batch, labels, rng, 250);
  report.pass = report.value < 1e-4;
  report.detail = "max relative error vs central differences";
  return report;
}

OracleReport gradcheck_cnn() {
  OracleReport report{"gradcheck_cnn"};
  Rng rng = Rng::stream(kOracleTag, 0x636e6e);
  EncoderSpec spec = EncoderSpec::paper_cnn(1, 12, 12);
  spec.fc_width = 16;
  ParameterSet params = init_params(spec, 4, rng);
  const Tensor batch = random_batch(rng, {4, 1, 12, 12});
  std::vector<int> labels(4);
  for (int& y : labels) y = rng.uniform_int(4);
  report.value = grad_check(params, spec, batch, labels, rng, 250);
  report.pass = report.value < 1e-4;
  report.detail = "max relative error vs central differences";
  return report;
}

OracleReport gradcheck_classifier_only() {
  OracleReport report{"gradcheck_classifier_only"};
  Rng rng = Rng::stream(kOracleTag, 0x636c66);
  EncoderSpec spec = EncoderSpec::mlp(5, {7});
  ParameterSet params = init_params(spec, 3, rng);
  const Tensor batch = random_batch(rng, {6, 5});
  std::vector<int> labels(6);
  for (int& y : labels) y = rng.uniform_int(3);

  const ForwardContext ctx = forward(params, spec, batch, false);
  const ParameterSet analytic = backward(params, spec, ctx, labels);

  // Exhaustive central differences over every classifier coordinate, with a
  // frozen encoder.
  double worst = 0.0;
  const double eps = 1e-6;
  ParameterSet probe = params;
  auto run_loss = [&] {
    return cross_entropy(forward(probe, spec, batch, false).probabilities,
                         labels);
  };
  for (Tensor* t : {&probe.classifier_w, &probe.classifier_b}) {
    Tensor* g = t == &probe.classifier_w
                    ? const_cast<Tensor*>(&analytic.classifier_w)
                    : const_cast<Tensor*>(&analytic.classifier_b);
    for (std::size_t i = 0; i < t->numel(); ++i) {
      const double saved = (*t)[i];
      (*t)[i] = saved + eps;
      const double up = run_loss();
      (*t)[i] = saved - eps;
      const double down = run_loss();
      (*t)[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = (*g)[i];
      worst = std::max(worst, std::abs(a - numeric) /
                                  std::max({std::abs(a), std::abs(numeric),
                                            1e-8}));
    }
  }
  report.value = worst;
  report.pass = worst < 1e-6;
  report.detail = "max relative error over all classifier coordinates";
  return report;
}

OracleReport gradcheck_tuning(TuneLoss kind) {
  OracleReport report{kind == TuneLoss::Pairwise ? "gradcheck_tuning_pairwise"
                                                 : "gradcheck_tuning_mse"};
  Rng rng = Rng::stream(kOracleTag, 0x74756e67,
                        kind == TuneLoss::Pairwise ? 1 : 2);
  const int B = 6, r = 5, L = 4;
  const Tensor reps = random_batch(rng, {std::size_t(B), std::size_t(r)});
  Tensor w = random_batch(rng, {std::size_t(L), std::size_t(r)});
  Tensor b = random_batch(rng, {std::size_t(L)});

  std::vector<ClientPrediction> preds;
  for (int k = 0; k < 2; ++k) {
    const int size = 2 + rng.uniform_int(L - 1);
    ClientPrediction cp;
    cp.weight = 0.5;
    cp.labels = LabelSet::of(rng.sample_without_replacement(L, size), L);
    cp.probs = Tensor({std::size_t(B), std::size_t(size)});
    for (int i = 0; i < B; ++i) {
      const auto row = random_simplex(rng, size);
      std::copy(row.begin(), row.end(), cp.probs.row_ptr(std::size_t(i)));
    }
    preds.push_back(std::move(cp));
  }

  Tensor dw(w.shape), db(b.shape);
  tuning_loss_and_grad(reps, w, b, preds, kind, &dw, &db);

  double worst = 0.0;
  const double eps = 1e-6;
  auto fd_check = [&](Tensor& t, const Tensor& g) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t[i];
      t[i] = saved + eps;
      const double up =
          tuning_loss_and_grad(reps, w, b, preds, kind, nullptr, nullptr);
      t[i] = saved - eps;
      const double down =
          tuning_loss_and_grad(reps, w, b, preds, kind, nullptr, nullptr);
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(g[i] - numeric) /
                                  std::max({std::abs(g[i]), std::abs(numeric),
                                            1e-8}));
    }
  };
  fd_check(w, dw);
  fd_check(b, db);
  report.value = worst;
  report.pass = worst < 1e-4;
  report.detail = "max relative error over classifier coordinates";
  return report;
}

}  // namespace fedsim
