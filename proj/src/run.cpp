#include "shield/run.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "shield/errors.hpp"

namespace shield {
namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type: " + it->dump());
  }
}

void read_count(const json& j, const char* key, std::size_t& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned()) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer, got " +
                      it->dump());
  }
  out = it->get<std::size_t>();
}

void read_string(const json& j, const char* key, std::string& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  out = it->get<std::string>();
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "train_count", "valid_count", "test_count", "n_t", "d_t", "grid_rows", "grid_cols", "d_v",
      "d_sp", "prefix_tokens", "suffix_tokens", "mu_sp", "mu_pc", "mu_cr", "noise", "seed",
      "epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "k_ref", "gcn_layers",
      "fused_dim", "hidden_dim", "graph_dim", "activation", "selection", "ablation",
      "eval_threads"};
  return keys;
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  RunConfig c;
  SynthConfig& s = c.synth;
  read_count(j, "train_count", s.train_count);
  read_count(j, "valid_count", s.valid_count);
  read_count(j, "test_count", s.test_count);
  read_count(j, "n_t", s.n_t);
  read_count(j, "d_t", s.d_t);
  read_count(j, "grid_rows", s.grid_rows);
  read_count(j, "grid_cols", s.grid_cols);
  read_count(j, "d_v", s.d_v);
  read_count(j, "d_sp", s.d_sp);
  read_count(j, "prefix_tokens", s.prefix_tokens);
  read_count(j, "suffix_tokens", s.suffix_tokens);
  read_field(j, "mu_sp", s.mu_sp);
  read_field(j, "mu_pc", s.mu_pc);
  read_field(j, "mu_cr", s.mu_cr);
  read_field(j, "noise", s.noise);
  if (j.contains("seed") && !j["seed"].is_number_unsigned()) {
    throw ConfigError("config key 'seed' must be a non-negative integer");
  }
  read_field(j, "seed", s.seed);
  c.train.seed = s.seed;

  TrainConfig& t = c.train;
  read_count(j, "epochs", t.epochs);
  read_count(j, "batch_size", t.batch_size);
  read_field(j, "learning_rate", t.adam.learning_rate);
  read_field(j, "beta1", t.adam.beta1);
  read_field(j, "beta2", t.adam.beta2);
  read_field(j, "epsilon", t.adam.epsilon);
  read_count(j, "k_ref", t.k_ref);
  read_count(j, "gcn_layers", t.gcn_layers);
  read_count(j, "fused_dim", t.fused_dim);
  read_count(j, "hidden_dim", t.hidden_dim);
  read_count(j, "graph_dim", t.graph_dim);

  std::string name;
  read_string(j, "activation", name);
  if (!name.empty()) t.activation = parse_activation(name);
  name.clear();
  read_string(j, "selection", name);
  if (!name.empty()) t.selection = parse_selection_metric(name);
  name.clear();
  read_string(j, "ablation", name);
  if (!name.empty()) c.ablation = AblationConfig::parse(name);
  std::size_t threads = c.eval_threads;
  read_count(j, "eval_threads", threads);
  if (threads == 0) throw ConfigError("eval_threads must be >= 1");
  c.eval_threads = static_cast<unsigned>(threads);

  std::vector<std::string> problems = s.violations();
  for (auto& v : t.violations()) problems.push_back(std::move(v));
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const SynthConfig& s = c.synth;
  j["train_count"] = s.train_count;
  j["valid_count"] = s.valid_count;
  j["test_count"] = s.test_count;
  j["n_t"] = s.n_t;
  j["d_t"] = s.d_t;
  j["grid_rows"] = s.grid_rows;
  j["grid_cols"] = s.grid_cols;
  j["d_v"] = s.d_v;
  j["d_sp"] = s.d_sp;
  j["prefix_tokens"] = s.prefix_tokens;
  j["suffix_tokens"] = s.suffix_tokens;
  j["mu_sp"] = s.mu_sp;
  j["mu_pc"] = s.mu_pc;
  j["mu_cr"] = s.mu_cr;
  j["noise"] = s.noise;
  j["seed"] = c.train.seed;
  const TrainConfig& t = c.train;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.adam.learning_rate;
  j["beta1"] = t.adam.beta1;
  j["beta2"] = t.adam.beta2;
  j["epsilon"] = t.adam.epsilon;
  j["k_ref"] = t.k_ref;
  j["gcn_layers"] = t.gcn_layers;
  j["fused_dim"] = t.fused_dim;
  j["hidden_dim"] = t.hidden_dim;
  j["graph_dim"] = t.graph_dim;
  j["activation"] = std::string(to_string(t.activation));
  j["selection"] = std::string(to_string(t.selection));
  j["ablation"] = c.ablation.name();
  j["eval_threads"] = c.eval_threads;
  return j;
}

std::vector<SweepRow> sweep_k(const std::vector<MemeDump>& train_set,
                              const std::vector<MemeDump>& valid_set,
                              const std::vector<MemeDump>& test_set, const RunConfig& cfg,
                              const std::vector<std::size_t>& k_values) {
  if (k_values.empty()) throw ConfigError("sweep needs at least one K_ref value");
  if (train_set.empty() || valid_set.empty() || test_set.empty()) {
    throw DataError("sweep needs non-empty train, valid and test splits");
  }
  std::vector<SweepRow> rows;
  for (std::size_t k : k_values) {
    if (k == 0) throw ConfigError("K_ref values must be >= 1");
    TrainConfig tc = cfg.train;
    tc.k_ref = k;
    const auto tr = prepare_samples(train_set, k);
    const auto va = prepare_samples(valid_set, k);
    const auto te = prepare_samples(test_set, k);
    const TrainResult result = train(tr, va, tc, cfg.ablation);
    SweepRow row;
    row.k_ref = k;
    row.cross_edges = tr.front().graph.cross_edges.size();
    row.best_epoch = result.best_epoch;
    row.test = evaluate(te, result.best, cfg.eval_threads);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::ordered_json to_json(const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["k_ref"] = r.k_ref;
    j["cross_edges"] = r.cross_edges;
    j["best_epoch"] = r.best_epoch;
    j["test"] = to_json(r.test);
    out.push_back(j);
  }
  return out;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::string out = "  K_ref   |E_tp|   epoch      AUC      Acc  MacroF1\n";
  char line[96];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%7zu %8zu %7zu %8.4f %8.4f %8.4f\n", r.k_ref, r.cross_edges,
                  r.best_epoch, r.test.auc, r.test.accuracy, r.test.macro_f1);
    out += line;
  }
  return out;
}

std::vector<std::size_t> parse_k_values(std::string_view list) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    const std::string_view item = list.substr(pos, comma - pos);
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || end != item.data() + item.size() || value == 0) {
      throw ConfigError("bad K_ref list '" + std::string(list) + "': expected positive integers");
    }
    out.push_back(value);
    pos = comma + 1;
  }
  return out;
}

}  // namespace shield
