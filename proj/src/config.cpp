#include "fedsim/config.hpp"

#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out;
  try {
    out = std::stoll(v, &used);
  } catch (...) {
    throw ParseError("config key '" + key + "': expected integer, got '" + v + "'");
  }
  if (used != v.size())
    throw ParseError("config key '" + key + "': expected integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (...) {
    throw ParseError("config key '" + key + "': expected number, got '" + v + "'");
  }
  if (used != v.size())
    throw ParseError("config key '" + key + "': expected number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config key '" + key + "': expected boolean, got '" + v + "'");
}

Method to_method(const std::string& v) {
  if (v == "fedavg") return Method::FedAvg;
  if (v == "fedprox") return Method::FedProx;
  if (v == "fedrs") return Method::FedRs;
  if (v == "tune_pairwise") return Method::TunePairwise;
  if (v == "tune_mse") return Method::TuneMse;
  throw ParseError("config key 'method': unknown method '" + v + "'");
}

LabelMode to_mode(const std::string& v) {
  if (v == "public") return LabelMode::Public;
  if (v == "private") return LabelMode::Private;
  throw ParseError("config key 'label_mode': expected public|private, got '" +
                   v + "'");
}

OptKind to_opt(const std::string& key, const std::string& v) {
  if (v == "adam") return OptKind::Adam;
  if (v == "sgd") return OptKind::Sgd;
  throw ParseError("config key '" + key + "': expected adam|sgd, got '" + v + "'");
}

}  // namespace

int ExperimentConfig::pool_size_or_default() const {
  if (unlabeled_pool_size >= 0) return unlabeled_pool_size;
  if (dataset == "cifar10") return 5000;
  if (dataset == "fashion-mnist") return 6000;
  return 5000;
}

void ExperimentConfig::validate() const {
  if (dataset != "synthetic" && dataset != "fashion-mnist" &&
      dataset != "cifar10")
    throw ConfigError("config key 'dataset': unknown dataset '" + dataset + "'");
  if (method == Method::FedRs && label_mode == LabelMode::Private)
    throw ConfigError(
        "config: FedRS is not applicable with private labels "
        "(method=fedrs requires label_mode=public)");
  if (labels_per_client.empty())
    throw ConfigError("config key 'labels_per_client': sweep list is empty");
  if (local_epochs.empty())
    throw ConfigError("config key 'local_epochs': sweep list is empty");
  if (seeds.empty()) throw ConfigError("config key 'seeds': list is empty");
  if (num_clients < 1)
    throw ConfigError("config key 'clients': must be positive");
  if (encoder != "auto" && encoder != "mlp" && encoder != "cnn")
    throw ConfigError("config key 'encoder': expected auto|mlp|cnn, got '" +
                      encoder + "'");
  if (rounds < 1) throw ConfigError("config key 'rounds': must be positive");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) +
                       ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "dataset") c.dataset = value;
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "method") c.method = to_method(value);
    else if (key == "label_mode") c.label_mode = to_mode(value);
    else if (key == "clients") c.num_clients = int(to_int(key, value));
    else if (key == "labels_per_client") {
      c.labels_per_client.clear();
      for (const auto& v : split_list(value))
        c.labels_per_client.push_back(int(to_int(key, v)));
    } else if (key == "local_epochs") {
      c.local_epochs.clear();
      for (const auto& v : split_list(value))
        c.local_epochs.push_back(int(to_int(key, v)));
    } else if (key == "samples_per_client")
      c.samples_per_client = int(to_int(key, value));
    else if (key == "unlabeled_pool_size")
      c.unlabeled_pool_size = int(to_int(key, value));
    else if (key == "rounds") c.rounds = int(to_int(key, value));
    else if (key == "batch_size") c.batch_size = int(to_int(key, value));
    else if (key == "lr") c.lr = to_double(key, value);
    else if (key == "fedprox_mu") c.fedprox_mu = to_double(key, value);
    else if (key == "fedrs_alpha") c.fedrs_alpha = to_double(key, value);
    else if (key == "tuning_epochs") c.tuning_epochs = int(to_int(key, value));
    else if (key == "tuning_optimizer") c.tuning_optimizer = to_opt(key, value);
    else if (key == "seeds") {
      c.seeds.clear();
      for (const auto& v : split_list(value))
        c.seeds.push_back(std::uint64_t(to_int(key, v)));
    } else if (key == "parallel") c.parallel_cells = to_bool(key, value);
    else if (key == "encoder") c.encoder = value;
    else if (key == "mlp_hidden") {
      c.mlp_hidden.clear();
      for (const auto& v : split_list(value))
        c.mlp_hidden.push_back(int(to_int(key, v)));
    } else if (key == "synth_classes") c.synth_classes = int(to_int(key, value));
    else if (key == "synth_input_dim")
      c.synth_input_dim = int(to_int(key, value));
    else if (key == "synth_center_scale")
      c.synth_center_scale = to_double(key, value);
    else if (key == "synth_sharpness") c.synth_sharpness = to_double(key, value);
    else if (key == "synth_noise") c.synth_noise = to_double(key, value);
    else if (key == "synth_test_size")
      c.synth_test_size = int(to_int(key, value));
    else
      throw ParseError("config line " + std::to_string(lineno) +
                       ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string ExperimentConfig::echo() const {
  std::ostringstream out;
  auto list_int = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "dataset = " << dataset << "\n";
  out << "method = " << method_name(method) << "\n";
  out << "label_mode = " << label_mode_name(label_mode) << "\n";
  out << "clients = " << num_clients << "\n";
  out << "labels_per_client = " << list_int(labels_per_client) << "\n";
  out << "local_epochs = " << list_int(local_epochs) << "\n";
  out << "samples_per_client = " << samples_per_client << "\n";
  out << "unlabeled_pool_size = " << pool_size_or_default() << "\n";
  out << "rounds = " << rounds << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "lr = " << lr << "\n";
  out << "fedprox_mu = " << fedprox_mu << "\n";
  out << "fedrs_alpha = " << fedrs_alpha << "\n";
  out << "tuning_epochs = " << tuning_epochs << "\n";
  out << "tuning_optimizer = "
      << (tuning_optimizer == OptKind::Adam ? "adam" : "sgd") << "\n";
  std::string seed_list;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    seed_list += (i ? "," : "") + std::to_string(seeds[i]);
  out << "seeds = " << seed_list << "\n";
  out << "encoder = " << encoder << "\n";
  out << "mlp_hidden = " << list_int(mlp_hidden) << "\n";
  if (dataset == "synthetic") {
    out << "synth_classes = " << synth_classes << "\n";
    out << "synth_input_dim = " << synth_input_dim << "\n";
    out << "synth_center_scale = " << synth_center_scale << "\n";
    out << "synth_sharpness = " << synth_sharpness << "\n";
    out << "synth_noise = " << synth_noise << "\n";
    out << "synth_test_size = " << synth_test_size << "\n";
  }
  return out.str();
}

}  // namespace fedsim
