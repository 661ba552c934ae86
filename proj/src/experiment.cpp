#include "fedsim/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fedsim/cifar.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/idx.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

namespace {

constexpr std::uint64_t kTaskTag = 0x7461736b;  // "task"
constexpr std::uint64_t kPartTag = 0x70617274;  // "part"
constexpr std::uint64_t kDataTag = 0x64617461;  // "data"
constexpr std::uint64_t kTestTag = 0x74657374;  // "test"
constexpr std::uint64_t kPoolTag = 0x706f6f6c;  // "pool"
constexpr std::uint64_t kInitTag = 0x696e6974;  // "init"
constexpr std::uint64_t kBootTag = 0x626f6f74;  // "boot"

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double round6(double v) {
  if (!std::isfinite(v)) return v;
  return std::round(v * 1e6) / 1e6;
}

std::string resolve_data_dir(const ExperimentConfig& config) {
  if (const char* env = std::getenv("FEDSIM_DATA_DIR")) return env;
  return config.data_dir;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData data;
  if (config.dataset == "synthetic") {
    data.synthetic = true;
    Rng task_rng = Rng::stream(kTaskTag, std::uint64_t(config.synth_classes),
                               std::uint64_t(config.synth_input_dim));
    data.task = make_synthetic_task(
        config.synth_classes, config.synth_input_dim, config.synth_center_scale,
        config.synth_sharpness, config.synth_noise, task_rng);
    return data;
  }
  const std::string dir = resolve_data_dir(config);
  if (config.dataset == "fashion-mnist") {
    data.train = load_fashion_mnist(dir + "/fashion-mnist", "train");
    data.test = load_fashion_mnist(dir + "/fashion-mnist", "t10k");
  } else {
    data.train = load_cifar10(dir + "/cifar-10-batches-bin", true);
    data.test = load_cifar10(dir + "/cifar-10-batches-bin", false);
  }
  return data;
}

EncoderSpec make_encoder_spec(const ExperimentConfig& config,
                              const ExperimentData& data) {
  std::string kind = config.encoder;
  if (kind == "auto") kind = data.synthetic ? "mlp" : "cnn";
  if (kind == "cnn") {
    if (data.synthetic)
      throw ConfigError("cnn encoder needs an image dataset");
    const auto& s = data.train.images.shape;  // N,C,H,W
    return EncoderSpec::paper_cnn(int(s[1]), int(s[2]), int(s[3]));
  }
  EncoderSpec spec;
  spec.kind = EncoderKind::Mlp;
  spec.mlp_hidden = config.mlp_hidden;
  if (data.synthetic) {
    spec.input_shape = {config.synth_input_dim};
  } else {
    spec.input_shape.clear();
    for (std::size_t i = 1; i < data.train.images.shape.size(); ++i)
      spec.input_shape.push_back(int(data.train.images.shape[i]));
  }
  return spec;
}

RunResult run_single_cell(const ExperimentConfig& config,
                          const ExperimentData& data, int labels_per_client,
                          int local_epochs, std::uint64_t seed) {
  FederationConfig fc;
  fc.method = config.method;
  fc.label_mode = config.label_mode;
  fc.rounds = config.rounds;
  fc.local_epochs = local_epochs;
  fc.batch_size = config.batch_size;
  fc.lr = config.lr;
  fc.fedprox_mu = config.fedprox_mu;
  fc.fedrs_alpha = config.fedrs_alpha;
  fc.tuning_epochs = config.tuning_epochs;
  fc.tuning_optimizer = config.tuning_optimizer;
  fc.seed = seed;
  fc.validate();

  const int m = config.num_clients;
  const int num_classes = data.synthetic ? config.synth_classes : 10;
  const bool needs_pool = config.method == Method::TunePairwise ||
                          config.method == Method::TuneMse;

  FederationEnv env;
  env.spec = make_encoder_spec(config, data);
  env.config = fc;

  std::vector<LabelSet> sets;
  std::vector<ClientState> clients;

  if (data.synthetic) {
    Rng part_rng =
        Rng::stream(seed, kPartTag, std::uint64_t(labels_per_client));
    sets = draw_label_sets(num_classes, m, labels_per_client, part_rng);
    for (int k = 0; k < m; ++k) {
      Rng data_rng = Rng::stream(seed, kDataTag,
                                 std::uint64_t(labels_per_client),
                                 std::uint64_t(k));
      Dataset full = synth_dataset_client(data.task, sets[k],
                                          config.samples_per_client, data_rng);
      const int n_val = config.samples_per_client / 5;
      std::vector<int> val_idx(n_val), train_idx;
      for (int i = 0; i < n_val; ++i) val_idx[i] = i;
      for (int i = n_val; i < config.samples_per_client; ++i)
        train_idx.push_back(i);
      clients.push_back(make_client(k, sets[k], full.subset(train_idx),
                                    full.subset(val_idx), fc.label_mode));
    }
    Rng test_rng = Rng::stream(seed, kTestTag);
    env.test = synth_dataset_global(data.task, config.synth_test_size, test_rng);
    if (needs_pool) {
      Rng pool_rng =
          Rng::stream(seed, kPoolTag, std::uint64_t(labels_per_client));
      env.pool = synth_pool(data.task, config.pool_size_or_default(), pool_rng);
    }
  } else {
    Rng part_rng =
        Rng::stream(seed, kPartTag, std::uint64_t(labels_per_client));
    const PartitionPlan plan =
        partition(data.train, m, labels_per_client, config.samples_per_client,
                  needs_pool ? config.pool_size_or_default() : 0, part_rng);
    sets = plan.client_labels;
    for (int k = 0; k < m; ++k)
      clients.push_back(make_client(k, sets[k],
                                    data.train.subset(plan.client_train[k]),
                                    data.train.subset(plan.client_val[k]),
                                    fc.label_mode));
    env.test = data.test;
    if (needs_pool) env.pool = data.train.subset(plan.pool).images;
  }

  ServerState server;
  server.client_labels = sets;
  Rng init_rng = Rng::stream(seed, kInitTag);
  server.params = init_params(env.spec, num_classes, init_rng);

  RunResult result = run_federation(server, clients, env);
  result.config_echo = config.echo() + "cell_labels_per_client = " +
                       std::to_string(labels_per_client) +
                       "\ncell_local_epochs = " + std::to_string(local_epochs) +
                       "\ncell_seed = " + std::to_string(seed) + "\n";
  return result;
}

namespace {

struct Cell {
  int L, E;
  std::uint64_t seed;
};

std::string cell_stem(const ExperimentConfig& config, const Cell& cell) {
  return config.dataset + "_" + method_name(config.method) + "_" +
         label_mode_name(config.label_mode) + "_L" + std::to_string(cell.L) +
         "_E" + std::to_string(cell.E) + "_seed" + std::to_string(cell.seed);
}

void write_history_csv(const std::string& path, const RunResult& run) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "round,train_loss,val_acc,test_acc,tuning_loss,wall_seconds\n";
  for (const auto& r : run.history)
    out << r.round << ',' << fmt6(r.train_loss) << ',' << fmt6(r.val_acc)
        << ',' << fmt6(r.test_acc) << ',' << fmt6(r.tuning_loss) << ','
        << fmt6(r.wall_seconds) << '\n';
}

void write_run_json(const std::string& path, const RunResult& run) {
  nlohmann::json j;
  j["config"] = run.config_echo;
  j["seed"] = run.seed;
  j["best_round"] = run.best_round;
  j["best_test_acc"] = round6(run.best_test_acc);
  auto& hist = j["history"] = nlohmann::json::array();
  for (const auto& r : run.history) {
    nlohmann::json e;
    e["round"] = r.round;
    e["train_loss"] = round6(r.train_loss);
    e["val_acc"] = round6(r.val_acc);
    e["test_acc"] = round6(r.test_acc);
    e["tuning_loss"] = round6(r.tuning_loss);
    e["tuning_epoch_losses"] = r.tuning_epoch_losses;
    e["wall_seconds"] = round6(r.wall_seconds);
    hist.push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

void emit_csv(const ResultsTable& table, const std::string& rows_path,
              const std::string& agg_path) {
  {
    std::ofstream out(rows_path);
    if (!out) throw Error("cannot write " + rows_path);
    out << "dataset,method,label_mode,labels_per_client,local_epochs,seed,"
           "best_test_acc,best_round\n";
    for (const auto& r : table.rows)
      out << r.dataset << ',' << r.method << ',' << r.label_mode << ','
          << r.labels_per_client << ',' << r.local_epochs << ',' << r.seed
          << ',' << fmt6(r.best_test_acc) << ',' << r.best_round << '\n';
  }
  {
    std::ofstream out(agg_path);
    if (!out) throw Error("cannot write " + agg_path);
    out << "dataset,method,label_mode,labels_per_client,local_epochs,mean,"
           "ci_low,ci_high\n";
    for (const auto& a : table.aggregates)
      out << a.dataset << ',' << a.method << ',' << a.label_mode << ','
          << a.labels_per_client << ',' << a.local_epochs << ','
          << fmt6(a.mean) << ',' << fmt6(a.ci_low) << ',' << fmt6(a.ci_high)
          << '\n';
  }
}

void emit_json(const ResultsTable& table, const std::string& path) {
  nlohmann::json j;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json e;
    e["dataset"] = r.dataset;
    e["method"] = r.method;
    e["label_mode"] = r.label_mode;
    e["labels_per_client"] = r.labels_per_client;
    e["local_epochs"] = r.local_epochs;
    e["seed"] = r.seed;
    e["best_test_acc"] = round6(r.best_test_acc);
    e["best_round"] = r.best_round;
    rows.push_back(std::move(e));
  }
  auto& aggs = j["aggregates"] = nlohmann::json::array();
  for (const auto& a : table.aggregates) {
    nlohmann::json e;
    e["dataset"] = a.dataset;
    e["method"] = a.method;
    e["label_mode"] = a.label_mode;
    e["labels_per_client"] = a.labels_per_client;
    e["local_epochs"] = a.local_epochs;
    e["mean"] = round6(a.mean);
    e["ci_low"] = round6(a.ci_low);
    e["ci_high"] = round6(a.ci_high);
    aggs.push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

ResultsTable read_results_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  ResultsTable table;
  for (const auto& e : j.at("rows")) {
    SeedRow r;
    r.dataset = e.at("dataset");
    r.method = e.at("method");
    r.label_mode = e.at("label_mode");
    r.labels_per_client = e.at("labels_per_client");
    r.local_epochs = e.at("local_epochs");
    r.seed = e.at("seed");
    r.best_test_acc = e.at("best_test_acc");
    r.best_round = e.at("best_round");
    table.rows.push_back(std::move(r));
  }
  for (const auto& e : j.at("aggregates")) {
    AggRow a;
    a.dataset = e.at("dataset");
    a.method = e.at("method");
    a.label_mode = e.at("label_mode");
    a.labels_per_client = e.at("labels_per_client");
    a.local_epochs = e.at("local_epochs");
    a.mean = e.at("mean");
    a.ci_low = e.at("ci_low");
    a.ci_high = e.at("ci_high");
    table.aggregates.push_back(std::move(a));
  }
  return table;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  config.validate();
  const ExperimentData data = load_experiment_data(config);

  std::vector<Cell> cells;
  for (int L : config.labels_per_client)
    for (int E : config.local_epochs)
      for (std::uint64_t seed : config.seeds) cells.push_back({L, E, seed});

  std::vector<RunResult> runs(cells.size());
  std::vector<std::string> errors(cells.size());
  const bool par = config.parallel_cells && cells.size() > 1;
#pragma omp parallel for if (par) schedule(dynamic)
  for (int i = 0; i < int(cells.size()); ++i) {
    try {
      runs[i] = run_single_cell(config, data, cells[i].L, cells[i].E,
                                cells[i].seed);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }

  std::filesystem::create_directories(config.output_dir);
  ExperimentOutput output;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    if (!errors[i].empty()) {
      output.failures.push_back("cell L=" + std::to_string(cell.L) +
                                " E=" + std::to_string(cell.E) +
                                " seed=" + std::to_string(cell.seed) + ": " +
                                errors[i]);
      continue;
    }
    SeedRow row;
    row.dataset = config.dataset;
    row.method = method_name(config.method);
    row.label_mode = label_mode_name(config.label_mode);
    row.labels_per_client = cell.L;
    row.local_epochs = cell.E;
    row.seed = cell.seed;
    row.best_test_acc = runs[i].best_test_acc;
    row.best_round = runs[i].best_round;
    output.table.rows.push_back(row);

    const std::string stem = cell_stem(config, cell);
    write_history_csv(config.output_dir + "/history_" + stem + ".csv", runs[i]);
    write_run_json(config.output_dir + "/run_" + stem + ".json", runs[i]);
  }

  for (int L : config.labels_per_client)
    for (int E : config.local_epochs) {
      std::vector<double> values;
      for (const auto& r : output.table.rows)
        if (r.labels_per_client == L && r.local_epochs == E)
          values.push_back(r.best_test_acc);
      if (values.empty()) continue;
      Rng boot_rng = Rng::stream(kBootTag, std::uint64_t(L), std::uint64_t(E));
      const BootstrapCi ci = bootstrap_ci(values, 0.95, 10000, boot_rng);
      AggRow agg;
      agg.dataset = config.dataset;
      agg.method = method_name(config.method);
      agg.label_mode = label_mode_name(config.label_mode);
      agg.labels_per_client = L;
      agg.local_epochs = E;
      agg.mean = ci.mean;
      agg.ci_low = ci.low;
      agg.ci_high = ci.high;
      output.table.aggregates.push_back(agg);
    }

  emit_csv(output.table, config.output_dir + "/results.csv",
           config.output_dir + "/results_agg.csv");
  emit_json(output.table, config.output_dir + "/results.json");
  return output;
}

}  // namespace fedsim
