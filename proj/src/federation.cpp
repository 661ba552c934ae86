#include "fedsim/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/oracles.hpp"

namespace fedsim {

namespace {
constexpr std::uint64_t kClientStreamTag = 0x636c6e74;  // "clnt"
constexpr std::uint64_t kTuneStreamTag = 0x74756e65;    // "tune"
}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::FedAvg: return "fedavg";
    case Method::FedProx: return "fedprox";
    case Method::FedRs: return "fedrs";
    case Method::TunePairwise: return "tune_pairwise";
    case Method::TuneMse: return "tune_mse";
  }
  return "?";
}

std::string label_mode_name(LabelMode m) {
  return m == LabelMode::Public ? "public" : "private";
}

void FederationConfig::validate() const {
  if (method == Method::FedRs && label_mode == LabelMode::Private)
    throw ConfigError("FedRS is not applicable with private labels");
  if (rounds < 0 || local_epochs < 0 || tuning_epochs < 0)
    throw ConfigError("rounds/epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  if (fedrs_alpha < 0.0 || fedrs_alpha > 1.0)
    throw ConfigError("fedrs_alpha must be in [0, 1]");
}

ClientState make_client(int id, const LabelSet& labels, Dataset train,
                        Dataset val, LabelMode mode) {
  ClientState c;
  c.id = id;
  c.labels = labels;
  if (mode == LabelMode::Private) {
    for (Dataset* d : {&train, &val})
      for (int& y : d->labels) {
        const int local = labels.local(y);
        if (local < 0)
          throw Error("client " + std::to_string(id) + " holds label " +
                      std::to_string(y) + " outside its label set");
        y = local;
      }
  } else {
    for (const Dataset* d : {&train, &val})
      for (int y : d->labels)
        if (!labels.contains(y))
          throw Error("client " + std::to_string(id) + " holds label " +
                      std::to_string(y) + " outside its label set");
  }
  c.train = std::move(train);
  c.val = std::move(val);
  return c;
}

ParameterSet distribute(const ServerState& server, int client_id,
                        LabelMode mode) {
  if (client_id < 0 || std::size_t(client_id) >= server.client_labels.size())
    throw UsageError("unknown client id " + std::to_string(client_id));
  if (mode == LabelMode::Public) return server.params;
  return restrict_classifier(server.params, server.client_labels[client_id]);
}

double fedprox_penalty(const ParameterSet& local, const ParameterSet& anchor,
                       double mu, LabelMode mode) {
  if (local.encoder.size() != anchor.encoder.size())
    throw UsageError("fedprox penalty over incongruent parameters");
  double sq = 0.0;
  for (std::size_t t = 0; t < local.encoder.size(); ++t)
    for (std::size_t i = 0; i < local.encoder[t].numel(); ++i) {
      const double d = local.encoder[t][i] - anchor.encoder[t][i];
      sq += d * d;
    }
  if (mode == LabelMode::Public) {
    for (std::size_t i = 0; i < local.classifier_w.numel(); ++i) {
      const double d = local.classifier_w[i] - anchor.classifier_w[i];
      sq += d * d;
    }
    for (std::size_t i = 0; i < local.classifier_b.numel(); ++i) {
      const double d = local.classifier_b[i] - anchor.classifier_b[i];
      sq += d * d;
    }
  }
  return 0.5 * mu * sq;
}

std::vector<double> fedrs_scale(const LabelSet& labels, double alpha) {
  std::vector<double> scale(labels.num_global, alpha);
  for (int y : labels.labels) scale[y] = 1.0;
  return scale;
}

Tensor fedrs_restricted_softmax(const Tensor& logits, const LabelSet& labels,
                                double alpha, LabelMode mode) {
  if (mode == LabelMode::Private)
    throw ConfigError("FedRS is not applicable with private labels");
  if (int(logits.cols()) != labels.num_global)
    throw ConfigError("fedrs expects logits over the full label set");
  const auto scale = fedrs_scale(labels, alpha);
  Tensor scaled = logits;
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t y = 0; y < scaled.cols(); ++y) scaled.at(i, y) *= scale[y];
  Tensor probs(scaled.shape);
  kernels::softmax_rows(scaled.data.data(), probs.data.data(),
                        int(scaled.rows()), int(scaled.cols()));
  return probs;
}

namespace {

void add_prox_gradient(ParameterSet& grads, const ParameterSet& local,
                       const ParameterSet& anchor, double mu, LabelMode mode) {
  for (std::size_t t = 0; t < grads.encoder.size(); ++t)
    for (std::size_t i = 0; i < grads.encoder[t].numel(); ++i)
      grads.encoder[t][i] += mu * (local.encoder[t][i] - anchor.encoder[t][i]);
  if (mode == LabelMode::Public) {
    for (std::size_t i = 0; i < grads.classifier_w.numel(); ++i)
      grads.classifier_w[i] +=
          mu * (local.classifier_w[i] - anchor.classifier_w[i]);
    for (std::size_t i = 0; i < grads.classifier_b.numel(); ++i)
      grads.classifier_b[i] +=
          mu * (local.classifier_b[i] - anchor.classifier_b[i]);
  }
}

}  // namespace

RoundUpdate local_train(ClientState& client, const ParameterSet& start,
                        const EncoderSpec& spec, const FederationConfig& config,
                        int round) {
  const std::size_t expect_rows = config.label_mode == LabelMode::Private
                                      ? std::size_t(client.labels.size())
                                      : std::size_t(client.labels.num_global);
  if (start.num_labels() != expect_rows)
    throw ConfigError("distributed classifier rows do not match label mode");

  RoundUpdate update;
  update.params = start;
  update.n = client.sample_count();

  if (!client.optimizer_ready || (config.client_optimizer == OptKind::Adam &&
                                  !client.optimizer.m.congruent_with(start))) {
    client.optimizer =
        make_optimizer(config.client_optimizer, config.lr, start);
    client.optimizer_ready = true;
  }
  client.optimizer.lr = config.lr;

  const std::vector<double> scale =
      config.method == Method::FedRs
          ? fedrs_scale(client.labels, config.fedrs_alpha)
          : std::vector<double>{};

  Rng rng = Rng::stream(config.seed, kClientStreamTag,
                        std::uint64_t(client.id), std::uint64_t(round));
  const std::size_t n = client.train.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  double loss_sum = 0.0;
  long batches = 0;
  Tensor batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t pos = 0; pos < n; pos += std::size_t(config.batch_size)) {
      const std::size_t count =
          std::min(std::size_t(config.batch_size), n - pos);
      client.train.gather(order.data() + pos, count, batch, labels);
      try {
        ForwardContext ctx =
            forward(update.params, spec, batch, /*train_mode=*/true, &rng, scale);
        double loss = cross_entropy(ctx.probabilities, labels);
        ParameterSet grads = backward(update.params, spec, ctx, labels);
        if (config.method == Method::FedProx) {
          loss += fedprox_penalty(update.params, start, config.fedprox_mu,
                                  config.label_mode);
          add_prox_gradient(grads, update.params, start, config.fedprox_mu,
                            config.label_mode);
        }
        if (!std::isfinite(loss))
          throw NumericalError("non-finite training loss");
        optimizer_step(client.optimizer, update.params, grads);
        loss_sum += loss;
        ++batches;
      } catch (const NumericalError& e) {
        throw NumericalError("client " + std::to_string(client.id) + " round " +
                             std::to_string(round) + " epoch " +
                             std::to_string(epoch) + " batch " +
                             std::to_string(pos / config.batch_size) + ": " +
                             e.what());
      }
    }
  }
  update.mean_train_loss = batches > 0 ? loss_sum / double(batches) : 0.0;
  return update;
}

namespace {

long total_samples(const std::vector<RoundUpdate>& updates) {
  long n = 0;
  for (const auto& u : updates) n += u.n;
  return n;
}

}  // namespace

ParameterSet aggregate_public(const std::vector<RoundUpdate>& updates) {
  if (updates.empty()) throw UsageError("aggregate over no updates");
  const long n = total_samples(updates);
  ParameterSet out = zeros_like(updates.front().params);
  auto outs = out.all_tensors();
  for (const auto& u : updates) {
    if (!u.params.congruent_with(updates.front().params))
      throw UsageError("updates are not shape-congruent");
    const double w = double(u.n) / double(n);
    auto ins = u.params.all_tensors();
    for (std::size_t t = 0; t < outs.size(); ++t)
      for (std::size_t i = 0; i < outs[t]->numel(); ++i)
        (*outs[t])[i] += w * (*ins[t])[i];
  }
  return out;
}

ParameterSet aggregate_private(const std::vector<RoundUpdate>& updates,
                               const std::vector<LabelSet>& label_sets,
                               const ParameterSet& previous) {
  if (updates.empty()) throw UsageError("aggregate over no updates");
  if (updates.size() != label_sets.size())
    throw UsageError("one label set per update required");
  const long n = total_samples(updates);
  const std::size_t L = previous.classifier_w.rows();
  const std::size_t r = previous.classifier_w.cols();

  for (std::size_t k = 0; k < updates.size(); ++k)
    if (updates[k].params.classifier_w.rows() !=
        std::size_t(label_sets[k].size()))
      throw Error("update " + std::to_string(k) +
                  " classifier rows do not match its label set");

  ParameterSet out = zeros_like(previous);
  // Encoder: plain sample-size weighted mean.
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const double w = double(updates[k].n) / double(n);
    for (std::size_t t = 0; t < out.encoder.size(); ++t) {
      if (!updates[k].params.encoder[t].same_shape(out.encoder[t]))
        throw UsageError("encoder updates are not shape-congruent");
      for (std::size_t i = 0; i < out.encoder[t].numel(); ++i)
        out.encoder[t][i] += w * updates[k].params.encoder[t][i];
    }
  }

  // Classifier: per-label mean over the clients holding that label.
  for (std::size_t y = 0; y < L; ++y) {
    long holder_n = 0;
    for (std::size_t k = 0; k < updates.size(); ++k)
      if (label_sets[k].contains(int(y))) holder_n += updates[k].n;
    if (holder_n == 0) {
      // No participating client holds this label; keep the previous row.
      const double* src = previous.classifier_w.row_ptr(y);
      std::copy(src, src + r, out.classifier_w.row_ptr(y));
      out.classifier_b[y] = previous.classifier_b[y];
      continue;
    }
    double* dst = out.classifier_w.row_ptr(y);
    for (std::size_t k = 0; k < updates.size(); ++k) {
      const int local = label_sets[k].local(int(y));
      if (local < 0) continue;
      const double w = double(updates[k].n) / double(holder_n);
      const double* src =
          updates[k].params.classifier_w.row_ptr(std::size_t(local));
      for (std::size_t i = 0; i < r; ++i) dst[i] += w * src[i];
      out.classifier_b[y] += w * updates[k].params.classifier_b[std::size_t(local)];
    }
  }
  return out;
}

RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const FederationEnv& env) {
  const auto t0 = std::chrono::steady_clock::now();
  const FederationConfig& config = env.config;
  config.validate();
  const int m = int(clients.size());

  std::vector<RoundUpdate> updates(m);
  std::vector<std::string> failures(m);
#pragma omp parallel for if (config.parallel_clients) schedule(dynamic)
  for (int k = 0; k < m; ++k) {
    try {
      const ParameterSet start = distribute(server, k, config.label_mode);
      updates[k] = local_train(clients[k], start, env.spec, config,
                               server.round);
    } catch (const std::exception& e) {
      failures[k] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw NumericalError("round aborted: " + f);

  const long n = total_samples(updates);
  RoundRecord record;
  record.round = server.round;
  for (const auto& u : updates)
    record.train_loss += double(u.n) / double(n) * u.mean_train_loss;

  server.params = config.label_mode == LabelMode::Public
                      ? aggregate_public(updates)
                      : aggregate_private(updates, server.client_labels,
                                          server.params);

  record.tuning_loss = std::numeric_limits<double>::quiet_NaN();
  if (config.method == Method::TunePairwise ||
      config.method == Method::TuneMse) {
    if (env.pool.rows() == 0)
      throw ConfigError("tuning methods need an unlabeled pool");
    std::vector<ClientModel> models;
    models.reserve(updates.size());
    for (std::size_t k = 0; k < updates.size(); ++k) {
      ClientModel cm;
      cm.params = updates[k].params;
      cm.labels = server.client_labels[k];
      cm.weight = double(updates[k].n) / double(n);
      cm.restricted = config.label_mode == LabelMode::Private;
      models.push_back(std::move(cm));
    }
    Rng tune_rng = Rng::stream(config.seed, kTuneStreamTag,
                               std::uint64_t(server.round));
    const TuneLoss kind = config.method == Method::TunePairwise
                              ? TuneLoss::Pairwise
                              : TuneLoss::Mse;
    const TuneResult tuned =
        central_tune(server.params, env.spec, models, env.pool, kind,
                     config.tuning_epochs, config.tuning_optimizer, config.lr,
                     config.batch_size, tune_rng);
    record.tuning_epoch_losses = tuned.epoch_losses;
    record.tuning_loss = tuned.epoch_losses.back();
  }

  // Validation mirrors what each client holds: the restricted rows in private
  // mode, the full model in public mode.
  double val_acc = 0.0;
  for (int k = 0; k < m; ++k) {
    const ParameterSet eval_params = distribute(server, k, config.label_mode);
    val_acc += double(updates[k].n) / double(n) *
               accuracy(eval_params, env.spec, clients[k].val);
  }
  record.val_acc = val_acc;
  record.test_acc = accuracy(server.params, env.spec, env.test);

  server.round += 1;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return record;
}

RunResult run_federation(ServerState& server,
                         std::vector<ClientState>& clients,
                         const FederationEnv& env) {
  RunResult result;
  result.seed = env.config.seed;
  result.history.reserve(env.config.rounds);
  for (int t = 0; t < env.config.rounds; ++t)
    result.history.push_back(run_round(server, clients, env));
  if (!result.history.empty()) {
    const auto [round, acc] = select_best_snapshot(result.history);
    result.best_round = round;
    result.best_test_acc = acc;
  }
  return result;
}

}  // namespace fedsim
