#include "fedsim/combiner.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/kernels.hpp"

namespace fedsim {

namespace {

void check_batch_aligned(const Tensor& central,
                         const std::vector<ClientPrediction>& preds) {
  for (const auto& p : preds) {
    if (p.probs.rows() != central.rows())
      throw UsageError("client prediction batch size mismatch");
    if (int(p.probs.cols()) != p.labels.size())
      throw UsageError("client prediction width does not match its label set");
  }
}

}  // namespace

double pairwise_loss(const Tensor& central_probs,
                     const std::vector<ClientPrediction>& preds) {
  check_batch_aligned(central_probs, preds);
  const std::size_t B = central_probs.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double* p = central_probs.row_ptr(i);
    for (const auto& cp : preds) {
      const double* hk = cp.probs.row_ptr(i);
      const int nk = cp.labels.size();
      double acc = 0.0;
      for (int a = 0; a < nk; ++a)
        for (int b = a + 1; b < nk; ++b) {
          const int y = cp.labels.labels[a], yp = cp.labels.labels[b];
          const double r = hk[a] * p[yp] - hk[b] * p[y];
          acc += r * r;
        }
      total += cp.weight * acc;
    }
  }
  return total / double(B);
}

double mse_loss(const Tensor& central_probs,
                const std::vector<ClientPrediction>& preds) {
  check_batch_aligned(central_probs, preds);
  const std::size_t B = central_probs.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double* p = central_probs.row_ptr(i);
    for (const auto& cp : preds) {
      const double* hk = cp.probs.row_ptr(i);
      double acc = 0.0;
      for (int a = 0; a < cp.labels.size(); ++a) {
        const double d = hk[a] - p[cp.labels.labels[a]];
        acc += d * d;
      }
      total += cp.weight * acc;
    }
  }
  return total / double(B);
}

Tensor pairwise_loss_grad(const Tensor& central_probs,
                          const std::vector<ClientPrediction>& preds) {
  check_batch_aligned(central_probs, preds);
  const std::size_t B = central_probs.rows();
  Tensor grad(central_probs.shape);
  for (std::size_t i = 0; i < B; ++i) {
    const double* p = central_probs.row_ptr(i);
    double* g = grad.row_ptr(i);
    for (const auto& cp : preds) {
      const double* hk = cp.probs.row_ptr(i);
      const int nk = cp.labels.size();
      for (int a = 0; a < nk; ++a)
        for (int b = a + 1; b < nk; ++b) {
          const int y = cp.labels.labels[a], yp = cp.labels.labels[b];
          const double r = hk[a] * p[yp] - hk[b] * p[y];
          g[yp] += cp.weight * 2.0 * r * hk[a] / double(B);
          g[y] -= cp.weight * 2.0 * r * hk[b] / double(B);
        }
    }
  }
  return grad;
}

Tensor mse_loss_grad(const Tensor& central_probs,
                     const std::vector<ClientPrediction>& preds) {
  check_batch_aligned(central_probs, preds);
  const std::size_t B = central_probs.rows();
  Tensor grad(central_probs.shape);
  for (std::size_t i = 0; i < B; ++i) {
    const double* p = central_probs.row_ptr(i);
    double* g = grad.row_ptr(i);
    for (const auto& cp : preds) {
      const double* hk = cp.probs.row_ptr(i);
      for (int a = 0; a < cp.labels.size(); ++a) {
        const int y = cp.labels.labels[a];
        g[y] += cp.weight * (-2.0) * (hk[a] - p[y]) / double(B);
      }
    }
  }
  return grad;
}

std::vector<double> project_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / double(j + 1);
    if (u[j] - t > 0.0) {
      rho = int(j);
      tau = t;
    }
  }
  (void)rho;
  for (double& x : v) x = std::max(x - tau, 0.0);
  return v;
}

double pairwise_objective_at(const std::vector<double>& h,
                             const std::vector<ClientPrediction>& preds) {
  double total = 0.0;
  for (const auto& cp : preds) {
    const double* hk = cp.probs.row_ptr(0);
    const int nk = cp.labels.size();
    double acc = 0.0;
    for (int a = 0; a < nk; ++a)
      for (int b = a + 1; b < nk; ++b) {
        const double r =
            hk[a] * h[cp.labels.labels[b]] - hk[b] * h[cp.labels.labels[a]];
        acc += r * r;
      }
    total += cp.weight * acc;
  }
  return total;
}

std::vector<double> combine_fixed_x(const std::vector<ClientPrediction>& preds,
                                    int num_labels,
                                    const SimplexPgdOptions& opts) {
  std::vector<bool> covered(num_labels, false);
  for (const auto& cp : preds) {
    if (cp.probs.rows() != 1)
      throw UsageError("combine_fixed_x expects single-row predictions");
    for (int y : cp.labels.labels) covered[y] = true;
  }
  for (int y = 0; y < num_labels; ++y)
    if (!covered[y])
      throw UsageError("label " + std::to_string(y) +
                       " is covered by no client; combination undetermined");

  std::vector<double> h(num_labels, 1.0 / double(num_labels));
  std::vector<double> g(num_labels);
  for (int it = 0; it < opts.max_iters; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    for (const auto& cp : preds) {
      const double* hk = cp.probs.row_ptr(0);
      const int nk = cp.labels.size();
      for (int a = 0; a < nk; ++a)
        for (int b = a + 1; b < nk; ++b) {
          const int y = cp.labels.labels[a], yp = cp.labels.labels[b];
          const double r = hk[a] * h[yp] - hk[b] * h[y];
          g[yp] += cp.weight * 2.0 * r * hk[a];
          g[y] -= cp.weight * 2.0 * r * hk[b];
        }
    }
    std::vector<double> next(num_labels);
    for (int y = 0; y < num_labels; ++y) next[y] = h[y] - opts.step * g[y];
    next = project_simplex(std::move(next));
    double delta = 0.0;
    for (int y = 0; y < num_labels; ++y)
      delta = std::max(delta, std::abs(next[y] - h[y]));
    h = std::move(next);
    if (delta < opts.tol) break;
  }
  return h;
}

std::vector<double> grid_search_simplex(
    int num_labels, int steps,
    const std::function<double(const std::vector<double>&)>& objective) {
  std::vector<double> best(num_labels, 0.0);
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<int> counts(num_labels, 0);
  std::vector<double> point(num_labels, 0.0);

  // Enumerate all compositions of `steps` into num_labels parts.
  auto recurse = [&](auto&& self, int coord, int remaining) -> void {
    if (coord == num_labels - 1) {
      counts[coord] = remaining;
      for (int y = 0; y < num_labels; ++y)
        point[y] = double(counts[y]) / double(steps);
      const double v = objective(point);
      if (v < best_value) {
        best_value = v;
        best = point;
      }
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[coord] = c;
      self(self, coord + 1, remaining - c);
    }
  };
  recurse(recurse, 0, steps);
  return best;
}

double pairwise_loss_central_pairs(const std::vector<double>& central_probs,
                                   const std::vector<ClientPrediction>& preds) {
  const int L = int(central_probs.size());
  double total = 0.0;
  for (const auto& cp : preds) {
    const double* hk = cp.probs.row_ptr(0);
    double acc = 0.0;
    for (int i = 0; i < L; ++i) {
      const int li = cp.labels.local(i);
      const double hi = li >= 0 ? hk[li] : 0.0;
      for (int j = i + 1; j < L; ++j) {
        const int lj = cp.labels.local(j);
        const double hj = lj >= 0 ? hk[lj] : 0.0;
        const double r = hi * central_probs[j] - hj * central_probs[i];
        acc += r * r;
      }
    }
    total += cp.weight * acc;
  }
  return total;
}

double central_pairs_gradient(const std::vector<double>& central_probs,
                              const std::vector<ClientPrediction>& preds,
                              int label) {
  const int L = int(central_probs.size());
  double grad = 0.0;
  for (const auto& cp : preds) {
    const double* hk = cp.probs.row_ptr(0);
    const int ll = cp.labels.local(label);
    const double hl = ll >= 0 ? hk[ll] : 0.0;
    for (int other = 0; other < L; ++other) {
      if (other == label) continue;
      const int lo = cp.labels.local(other);
      const double ho = lo >= 0 ? hk[lo] : 0.0;
      // Unordered pair {other, label}; residual written with the lower index
      // first, exactly as in the loss.
      const double r = other < label
                           ? ho * central_probs[label] - hl * central_probs[other]
                           : hl * central_probs[other] - ho * central_probs[label];
      grad += cp.weight * 2.0 * r * (other < label ? ho : -ho);
    }
  }
  return grad;
}

ClientPrediction predict_client(const ClientModel& model,
                                const EncoderSpec& spec, const Tensor& inputs) {
  ClientPrediction out;
  out.weight = model.weight;
  out.labels = model.labels;
  const ForwardContext ctx = forward(model.params, spec, inputs, false);
  if (model.restricted) {
    if (int(ctx.probabilities.cols()) != model.labels.size())
      throw UsageError("restricted client model rows != label set size");
    out.probs = ctx.probabilities;
    return out;
  }
  // Full classifier: restrict to the client's labels and renormalize.
  const std::size_t B = inputs.rows();
  out.probs = Tensor({B, std::size_t(model.labels.size())});
  for (std::size_t i = 0; i < B; ++i) {
    double mass = 0.0;
    for (int a = 0; a < model.labels.size(); ++a)
      mass += ctx.probabilities.at(i, model.labels.labels[a]);
    for (int a = 0; a < model.labels.size(); ++a)
      out.probs.at(i, a) =
          ctx.probabilities.at(i, model.labels.labels[a]) / mass;
  }
  return out;
}

double tuning_loss_and_grad(const Tensor& reps, const Tensor& classifier_w,
                            const Tensor& classifier_b,
                            const std::vector<ClientPrediction>& preds,
                            TuneLoss kind, Tensor* dw, Tensor* db) {
  const std::size_t B = reps.rows();
  const std::size_t L = classifier_w.rows();
  const std::size_t r = classifier_w.cols();

  Tensor logits({B, L});
  kernels::dense_forward(reps.data.data(), classifier_w.data.data(),
                         classifier_b.data.data(), logits.data.data(), int(B),
                         int(r), int(L));
  Tensor probs({B, L});
  kernels::softmax_rows(logits.data.data(), probs.data.data(), int(B), int(L));

  const double loss = kind == TuneLoss::Pairwise ? pairwise_loss(probs, preds)
                                                 : mse_loss(probs, preds);
  if (!dw && !db) return loss;

  const Tensor dprobs = kind == TuneLoss::Pairwise
                            ? pairwise_loss_grad(probs, preds)
                            : mse_loss_grad(probs, preds);
  // Softmax Jacobian: dz_j = p_j * (g_j - sum_c g_c p_c).
  Tensor dlogits({B, L});
  for (std::size_t i = 0; i < B; ++i) {
    double dot = 0.0;
    for (std::size_t c = 0; c < L; ++c)
      dot += dprobs.at(i, c) * probs.at(i, c);
    for (std::size_t j = 0; j < L; ++j)
      dlogits.at(i, j) = probs.at(i, j) * (dprobs.at(i, j) - dot);
  }
  kernels::dense_backward(reps.data.data(), classifier_w.data.data(),
                          dlogits.data.data(), dw ? dw->data.data() : nullptr,
                          db ? db->data.data() : nullptr, nullptr, int(B),
                          int(r), int(L));
  return loss;
}

namespace {

// Gathers the given pool rows out of full-pool predictions.
std::vector<ClientPrediction> slice_predictions(
    const std::vector<ClientPrediction>& preds, const std::vector<int>& order,
    std::size_t start, std::size_t count) {
  std::vector<ClientPrediction> out;
  out.reserve(preds.size());
  for (const auto& cp : preds) {
    ClientPrediction s;
    s.client = cp.client;
    s.weight = cp.weight;
    s.labels = cp.labels;
    s.probs = Tensor({count, cp.probs.cols()});
    for (std::size_t i = 0; i < count; ++i) {
      const double* src = cp.probs.row_ptr(std::size_t(order[start + i]));
      double* dst = s.probs.row_ptr(i);
      std::copy(src, src + cp.probs.cols(), dst);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Tensor slice_rows(const Tensor& t, const std::vector<int>& order,
                  std::size_t start, std::size_t count) {
  Tensor out({count, t.cols()});
  for (std::size_t i = 0; i < count; ++i) {
    const double* src = t.row_ptr(std::size_t(order[start + i]));
    std::copy(src, src + t.cols(), out.row_ptr(i));
  }
  return out;
}

}  // namespace

TuneResult central_tune(ParameterSet& server, const EncoderSpec& spec,
                        const std::vector<ClientModel>& clients,
                        const Tensor& pool, TuneLoss kind, int epochs,
                        OptKind optimizer, double lr, int batch_size,
                        Rng& rng) {
  if (pool.rows() == 0) throw UsageError("central_tune needs a non-empty pool");
  TuneResult result;

  // Encoder is frozen, so pool representations and client predictions are
  // computed once up front.
  const Tensor reps = forward(server, spec, pool, false).representations;
  std::vector<ClientPrediction> preds;
  preds.reserve(clients.size());
  for (const auto& cm : clients) preds.push_back(predict_client(cm, spec, pool));

  const Tensor w0 = server.classifier_w;
  const Tensor b0 = server.classifier_b;

  ParameterSet head;  // classifier-only view driven through the optimizer
  head.classifier_w = server.classifier_w;
  head.classifier_b = server.classifier_b;
  OptimizerState opt = make_optimizer(optimizer, lr, head);

  auto pool_loss = [&] {
    return tuning_loss_and_grad(reps, head.classifier_w, head.classifier_b,
                                preds, kind, nullptr, nullptr);
  };

  result.epoch_losses.push_back(pool_loss());
  const double initial = result.epoch_losses.front();

  const std::size_t n = pool.rows();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
      const std::size_t count = std::min(std::size_t(batch_size), n - start);
      const Tensor breps = slice_rows(reps, order, start, count);
      const auto bpreds = slice_predictions(preds, order, start, count);
      ParameterSet grads = zeros_like(head);
      const double loss =
          tuning_loss_and_grad(breps, head.classifier_w, head.classifier_b,
                               bpreds, kind, &grads.classifier_w,
                               &grads.classifier_b);
      if (!std::isfinite(loss)) {
        server.classifier_w = w0;
        server.classifier_b = b0;
        result.applied = false;
        std::cerr << "[central_tune] non-finite loss, keeping untuned classifier\n";
        return result;
      }
      optimizer_step(opt, head, grads);
    }
    result.epoch_losses.push_back(pool_loss());
  }

  const double final_loss = result.epoch_losses.back();
  if (!std::isfinite(final_loss) || final_loss > initial * 1.01) {
    server.classifier_w = w0;
    server.classifier_b = b0;
    result.applied = false;
    std::cerr << "[central_tune] pool loss worsened beyond bound ("
              << initial << " -> " << final_loss
              << "), keeping untuned classifier\n";
    return result;
  }
  server.classifier_w = head.classifier_w;
  server.classifier_b = head.classifier_b;
  return result;
}

double perfect_combination_check(const SyntheticTask& task,
                                 const std::vector<LabelSet>& client_sets,
                                 int num_inputs, Rng& rng,
                                 const SimplexPgdOptions& opts) {
  std::vector<double> x(task.input_dim);
  double worst = 0.0;
  for (int i = 0; i < num_inputs; ++i) {
    task.sample_input(rng, x.data());
    std::vector<ClientPrediction> preds;
    for (std::size_t k = 0; k < client_sets.size(); ++k) {
      ClientPrediction cp;
      cp.client = int(k);
      cp.weight = 1.0 / double(client_sets.size());
      cp.labels = client_sets[k];
      const auto cond = task.conditional_restricted(x.data(), client_sets[k]);
      cp.probs = Tensor({1, cond.size()});
      std::copy(cond.begin(), cond.end(), cp.probs.data.begin());
      preds.push_back(std::move(cp));
    }
    const auto combined = combine_fixed_x(preds, task.num_classes, opts);
    const auto truth = task.conditional(x.data());
    for (int y = 0; y < task.num_classes; ++y)
      worst = std::max(worst, std::abs(combined[y] - truth[y]));
  }
  return worst;
}

}  // namespace fedsim
