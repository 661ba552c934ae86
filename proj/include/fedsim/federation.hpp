#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/combiner.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optimizer.hpp"

namespace fedsim {

enum class Method { FedAvg, FedProx, FedRs, TunePairwise, TuneMse };
enum class LabelMode { Public, Private };

std::string method_name(Method m);
std::string label_mode_name(LabelMode m);

struct FederationConfig {
  Method method = Method::FedAvg;
  LabelMode label_mode = LabelMode::Public;
  int rounds = 100;
  int local_epochs = 1;
  int batch_size = 64;
  double lr = 1e-3;
  double fedprox_mu = 1e-2;
  double fedrs_alpha = 0.5;
  int tuning_epochs = 3;
  OptKind tuning_optimizer = OptKind::Adam;
  OptKind client_optimizer = OptKind::Adam;
  std::uint64_t seed = 0;
  bool parallel_clients = true;

  void validate() const;  // rejects fedrs + private, nonsense values
};

// A client's local world. Dataset labels are stored in the client model's row
// space: local indices (via the reverse index) in private mode, global ids in
// public mode.
struct ClientState {
  int id = 0;
  LabelSet labels;
  Dataset train;
  Dataset val;
  OptimizerState optimizer;
  bool optimizer_ready = false;

  long sample_count() const { return long(train.size()); }
};

ClientState make_client(int id, const LabelSet& labels, Dataset train,
                        Dataset val, LabelMode mode);

struct RoundUpdate {
  ParameterSet params;  // |Y_k| classifier rows in private mode
  long n = 0;
  double mean_train_loss = 0.0;
};

struct ServerState {
  ParameterSet params;  // always |Y| classifier rows
  std::vector<LabelSet> client_labels;
  int round = 0;
};

// Parameters sent to client k: the full encoder plus, in private mode, the
// classifier rows [theta_psi(y) : y in Y_k] in the label set's order.
ParameterSet distribute(const ServerState& server, int client_id,
                        LabelMode mode);

// (mu/2) * ||theta - anchor||^2 over the encoder, plus the classifier only in
// public mode (private mode omits the final layers).
double fedprox_penalty(const ParameterSet& local, const ParameterSet& anchor,
                       double mu, LabelMode mode);

// Per-label logit multipliers for FedRS local training: 1 on the client's
// labels, alpha elsewhere.
std::vector<double> fedrs_scale(const LabelSet& labels, double alpha);

// Softmax over full-width logits with missing-class scores scaled by alpha.
Tensor fedrs_restricted_softmax(const Tensor& logits, const LabelSet& labels,
                                double alpha, LabelMode mode = LabelMode::Public);

// E local epochs of mini-batch training from `start`, with the
// method-specific loss terms. The client's optimizer state persists across
// rounds while shapes stay congruent.
RoundUpdate local_train(ClientState& client, const ParameterSet& start,
                        const EncoderSpec& spec, const FederationConfig& config,
                        int round);

// Sample-size weighted mean of full-shaped updates.
ParameterSet aggregate_public(const std::vector<RoundUpdate>& updates);

// Algorithm-1 aggregation: encoder rows weighted n_k/n over all clients;
// classifier row y weighted n_k/n'_y over exactly the clients holding y.
// Rows no participating client holds keep their previous value.
ParameterSet aggregate_private(const std::vector<RoundUpdate>& updates,
                               const std::vector<LabelSet>& label_sets,
                               const ParameterSet& previous);

// Everything a round needs besides server and client state.
struct FederationEnv {
  EncoderSpec spec;
  FederationConfig config;
  Tensor pool;   // unlabeled inputs; may be empty for non-tuning methods
  Dataset test;  // global test set
};

// distribute -> local_train (all clients) -> aggregate -> optional central
// tuning -> evaluate.
RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const FederationEnv& env);

RunResult run_federation(ServerState& server,
                         std::vector<ClientState>& clients,
                         const FederationEnv& env);

}  // namespace fedsim
