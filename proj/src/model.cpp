#include "shield/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <exception>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "shield/errors.hpp"

namespace shield {
namespace {

constexpr std::uint8_t kParamsMagic[4] = {'S', 'H', 'P', 'M'};
constexpr std::uint32_t kParamsVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void require_labeled(std::span<const PreparedSample> samples, const char* split) {
  for (const auto& s : samples) {
    if (s.dump.label != 0 && s.dump.label != 1) {
      throw DataError(std::string(split) + " sample '" + s.dump.id + "' is unlabeled");
    }
  }
}

void require_dims(const PreparedSample& s, const ModelConfig& c) {
  if (s.dump.d_t != c.d_t || s.dump.d_v != c.d_v || s.dump.d_sp != c.d_sp) {
    throw DataError("sample '" + s.dump.id + "' dims (d_t=" + std::to_string(s.dump.d_t) +
                    ", d_v=" + std::to_string(s.dump.d_v) + ", d_sp=" + std::to_string(s.dump.d_sp) +
                    ") do not match the model (" + std::to_string(c.d_t) + ", " +
                    std::to_string(c.d_v) + ", " + std::to_string(c.d_sp) + ")");
  }
}

double selection_value(const Metrics& m, SelectionMetric s) {
  return s == SelectionMetric::kAuc ? m.auc : m.macro_f1;
}

}  // namespace

AblationConfig AblationConfig::parse(std::string_view name) {
  if (name == "full") return {true, true, true};
  AblationConfig a{false, false, false};
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t plus = name.find('+', start);
    const std::string_view part =
        name.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start);
    if (part == "pcm") a.use_pcm = true;
    else if (part == "spm") a.use_spm = true;
    else if (part == "crm") a.use_crm = true;
    else throw ConfigError("unknown ablation '" + std::string(name) + "'");
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  return a;
}

std::string AblationConfig::name() const {
  if (use_pcm && use_spm && use_crm) return "full";
  std::string out;
  // SPM first to match the conventional variant names ("spm", "spm+pcm").
  for (auto [on, part] : {std::pair{use_spm, "spm"}, {use_pcm, "pcm"}, {use_crm, "crm"}}) {
    if (!on) continue;
    if (!out.empty()) out += '+';
    out += part;
  }
  return out;
}

std::string_view to_string(SelectionMetric m) { return m == SelectionMetric::kAuc ? "auc" : "macro_f1"; }

SelectionMetric parse_selection_metric(std::string_view name) {
  if (name == "auc") return SelectionMetric::kAuc;
  if (name == "macro_f1") return SelectionMetric::kMacroF1;
  throw ConfigError("unknown selection metric '" + std::string(name) + "'");
}

std::size_t ModelConfig::head_input_dim() const {
  return (ablation.use_pcm ? fused_dim : 0) + (ablation.use_spm ? d_sp : 0) +
         (ablation.use_crm ? graph_dim : 0);
}

std::vector<Param*> ShieldParams::params() {
  std::vector<Param*> out;
  if (pcm) {
    auto p = pcm->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (gcn) {
    auto p = gcn->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (Param* p : {&head.w_hidden, &head.b_hidden, &head.w_out, &head.b_out}) out.push_back(p);
  return out;
}

std::vector<const Param*> ShieldParams::params() const {
  auto mut = const_cast<ShieldParams*>(this)->params();
  return {mut.begin(), mut.end()};
}

ShieldParams ShieldParams::init(const ModelConfig& c, std::uint64_t seed) {
  if (!c.ablation.any()) throw ConfigError("ablation must enable at least one segment");
  if (c.hidden_dim == 0) throw ConfigError("hidden_dim must be >= 1");
  std::mt19937_64 rng(seed);
  ShieldParams p;
  p.config = c;
  if (c.ablation.use_pcm) p.pcm = PcmParams::init(c.fused_dim, c.d_v, c.d_t, rng);
  if (c.ablation.use_crm) {
    p.gcn = GcnParams::init(c.graph_dim, c.gcn_layers, c.activation, c.d_t, c.d_v, rng);
  }
  const std::size_t in = c.head_input_dim();
  p.head.w_hidden = Param("head.w_hidden", uniform_fan_in(c.hidden_dim, in, in, rng));
  p.head.b_hidden = Param("head.b_hidden", uniform_fan_in(c.hidden_dim, 1, in, rng));
  p.head.w_out = Param("head.w_out", uniform_fan_in(1, c.hidden_dim, c.hidden_dim, rng));
  p.head.b_out = Param("head.b_out", uniform_fan_in(1, 1, c.hidden_dim, rng));
  return p;
}

void check_consistency(const ShieldParams& p) {
  const ModelConfig& c = p.config;
  if (!c.ablation.any()) throw ConfigError("ablation must enable at least one segment");
  if (c.ablation.use_pcm != p.pcm.has_value()) {
    throw ConfigError("PCM parameters present=" + std::to_string(p.pcm.has_value()) +
                      " but ablation '" + c.ablation.name() + "'");
  }
  if (c.ablation.use_crm != p.gcn.has_value()) {
    throw ConfigError("GCN parameters present=" + std::to_string(p.gcn.has_value()) +
                      " but ablation '" + c.ablation.name() + "'");
  }
  if (p.pcm && (p.pcm->fused_dim() != c.fused_dim || p.pcm->vision_dim() != c.d_v ||
                p.pcm->text_dim() != c.d_t)) {
    throw ConfigError("PCM parameter shapes disagree with the model config");
  }
  if (p.gcn && (p.gcn->hidden_dim() != c.graph_dim || p.gcn->layer_count() != c.gcn_layers)) {
    throw ConfigError("GCN parameter shapes disagree with the model config");
  }
  if (p.head.w_hidden.value.cols() != c.head_input_dim()) {
    throw ConfigError("classifier head takes " + std::to_string(p.head.w_hidden.value.cols()) +
                      " inputs but ablation '" + c.ablation.name() + "' produces " +
                      std::to_string(c.head_input_dim()));
  }
}

PreparedSample prepare_sample(MemeDump dump, std::size_t k_ref) {
  PreparedSample s;
  s.graph = build_reference_graph(dump, k_ref);
  s.propagation = propagation_matrix(s.graph);
  s.k_ref = k_ref;
  s.dump = std::move(dump);
  return s;
}

std::vector<PreparedSample> prepare_samples(std::vector<MemeDump> dumps, std::size_t k_ref) {
  std::vector<PreparedSample> out;
  out.reserve(dumps.size());
  for (auto& d : dumps) out.push_back(prepare_sample(std::move(d), k_ref));
  return out;
}

std::pair<Matrix, Matrix> spm_provide(const MemeDump& dump) {
  if (dump.hidden_state.rows() != dump.d_sp || dump.hidden_state.cols() != 1 || dump.d_sp == 0) {
    throw DataError("dump '" + dump.id + "' has no usable hidden-state channel");
  }
  if (dump.attention.rows() != dump.n || dump.attention.cols() != dump.n || dump.n == 0) {
    throw DataError("dump '" + dump.id + "' has no usable attention channel");
  }
  return {dump.hidden_state, dump.attention};
}

ForwardResult forward(Tape& tape, const PreparedSample& sample, ShieldParams& params) {
  check_consistency(params);
  const ModelConfig& c = params.config;
  require_dims(sample, c);
  std::vector<Var> segments;
  if (c.ablation.use_pcm) {
    segments.push_back(
        pcm_forward(sample.dump.patch_embeddings, sample.dump.token_embeddings, tape, *params.pcm));
  }
  if (c.ablation.use_spm) {
    segments.push_back(tape.constant(spm_provide(sample.dump).first));
  }
  if (c.ablation.use_crm) {
    if (sample.k_ref != c.k_ref) {
      throw ConfigError("sample '" + sample.dump.id + "' was prepared with K_ref=" +
                        std::to_string(sample.k_ref) + " but the model uses K_ref=" +
                        std::to_string(c.k_ref));
    }
    segments.push_back(graph_readout(gcn_forward(tape, sample.graph, sample.propagation, *params.gcn)));
  }
  Var h = ad::concat(segments);
  Var hidden = ad::relu(
      ad::linear(h, tape.param(params.head.w_hidden), tape.param(params.head.b_hidden)));
  Var logit = ad::linear(hidden, tape.param(params.head.w_out), tape.param(params.head.b_out));
  return {logit, h};
}

double forward_logit(const PreparedSample& sample, ShieldParams& params) {
  Tape tape;
  return forward(tape, sample, params).logit.scalar();
}

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (epochs == 0) v.push_back("epochs must be >= 1");
  if (batch_size == 0) v.push_back("batch_size must be >= 1");
  if (k_ref == 0) v.push_back("k_ref must be >= 1");
  if (gcn_layers == 0) v.push_back("gcn_layers must be >= 1");
  if (fused_dim == 0 || hidden_dim == 0) v.push_back("dims must be >= 1");
  if (!(adam.learning_rate > 0.0)) v.push_back("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    v.push_back("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) v.push_back("Adam epsilon must be > 0");
  return v;
}

ModelConfig model_config_for(const MemeDump& sample, const TrainConfig& cfg,
                             const AblationConfig& ablation) {
  ModelConfig m;
  m.d_t = sample.d_t;
  m.d_v = sample.d_v;
  m.d_sp = sample.d_sp;
  m.fused_dim = cfg.fused_dim;
  m.graph_dim = cfg.graph_dim != 0 ? cfg.graph_dim
                : sample.d_t == sample.d_v ? sample.d_t
                                           : std::max(sample.d_t, sample.d_v);
  m.hidden_dim = cfg.hidden_dim;
  m.gcn_layers = cfg.gcn_layers;
  m.k_ref = cfg.k_ref;
  m.activation = cfg.activation;
  m.ablation = ablation;
  return m;
}

TrainResult train(std::span<const PreparedSample> train_set, std::span<const PreparedSample> valid_set,
                  const TrainConfig& cfg, const AblationConfig& ablation) {
  if (const auto v = cfg.violations(); !v.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ConfigError(msg);
  }
  if (!ablation.any()) throw ConfigError("ablation must enable at least one segment");
  if (train_set.empty()) throw DataError("training split is empty");
  if (valid_set.empty()) throw DataError("validation split is empty");
  require_labeled(train_set, "train");
  require_labeled(valid_set, "valid");

  const ModelConfig mc = model_config_for(train_set.front().dump, cfg, ablation);
  for (const auto& s : train_set) require_dims(s, mc);
  for (const auto& s : valid_set) require_dims(s, mc);

  ShieldParams params = ShieldParams::init(mc, cfg.seed);
  auto plist = params.params();
  AdamState adam;
  adam.config = cfg.adam;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  bool have_best = false;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      std::optional<Var> total;
      for (std::size_t k = start; k < end; ++k) {
        const PreparedSample& s = train_set[order[k]];
        Var loss = ad::bce_loss(forward(tape, s, params).logit, s.dump.label);
        total = total ? ad::add(*total, loss) : loss;
      }
      const double count = static_cast<double>(end - start);
      Var mean = ad::scale(*total, 1.0 / count);
      if (epoch == 1 && start == 0) result.first_batch_loss = mean.scalar();
      loss_sum += total->scalar();
      tape.backward(mean);
      adam_step(plist, adam);
    }
    const Metrics vm = evaluate(valid_set, params);
    const double metric = selection_value(vm, cfg.selection);
    result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), metric});
    if (!have_best || metric > result.best_valid_metric) {
      have_best = true;
      result.best = params;
      result.best_epoch = epoch;
      result.best_valid_metric = metric;
    }
  }
  return result;
}

std::vector<double> predict_logits(std::span<const PreparedSample> samples,
                                   const ShieldParams& params, unsigned threads) {
  std::vector<double> logits(samples.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, samples.size()));
  std::vector<std::exception_ptr> errors(workers);
  auto run = [&](std::size_t worker, std::size_t begin, std::size_t end) {
    try {
      ShieldParams local = params;
      for (std::size_t i = begin; i < end; ++i) logits[i] = forward_logit(samples[i], local);
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0, 0, samples.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (samples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(samples.size(), begin + chunk);
      if (begin < end) pool.emplace_back(run, w, begin, end);
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return logits;
}

Metrics evaluate(std::span<const PreparedSample> samples, const ShieldParams& params,
                 unsigned threads) {
  if (samples.empty()) throw DomainError("evaluate: empty evaluation set");
  require_labeled(samples, "evaluation");
  const auto logits = predict_logits(samples, params, threads);
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.dump.label);
  return compute_metrics(labels, logits);
}

std::vector<std::uint8_t> encode_params(const ShieldParams& params) {
  check_consistency(params);
  const ModelConfig& c = params.config;
  nlohmann::ordered_json h;
  h["d_t"] = c.d_t;
  h["d_v"] = c.d_v;
  h["d_sp"] = c.d_sp;
  h["fused_dim"] = c.fused_dim;
  h["graph_dim"] = c.graph_dim;
  h["hidden_dim"] = c.hidden_dim;
  h["gcn_layers"] = c.gcn_layers;
  h["k_ref"] = c.k_ref;
  h["activation"] = to_string(c.activation);
  h["ablation"] = c.ablation.name();
  h["head_input_dim"] = c.head_input_dim();
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  const auto plist = params.params();
  for (const Param* p : plist) {
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  h["tensors"] = tensors;
  const std::string text = h.dump();

  std::vector<std::uint8_t> out(std::begin(kParamsMagic), std::end(kParamsMagic));
  put_u32(out, kParamsVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Param* p : plist)
    for (double v : p->value.data()) put_f64(out, v);
  return out;
}

ShieldParams decode_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kParamsMagic, 4) != 0) {
    throw FormatError("not a SHIELD params file: bad magic");
  }
  if (bytes.size() < 12) throw LengthError("params file truncated inside preamble");
  if (const auto v = get_u32(bytes, 4); v != kParamsVersion) {
    throw FormatError("unsupported params version " + std::to_string(v));
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + header_len) throw LengthError("params file truncated inside header");
  nlohmann::json h;
  try {
    const auto* begin = reinterpret_cast<const char*>(bytes.data() + 12);
    h = nlohmann::json::parse(begin, begin + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("params header is not valid JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    c.d_t = h.at("d_t").get<std::size_t>();
    c.d_v = h.at("d_v").get<std::size_t>();
    c.d_sp = h.at("d_sp").get<std::size_t>();
    c.fused_dim = h.at("fused_dim").get<std::size_t>();
    c.graph_dim = h.at("graph_dim").get<std::size_t>();
    c.hidden_dim = h.at("hidden_dim").get<std::size_t>();
    c.gcn_layers = h.at("gcn_layers").get<std::size_t>();
    c.k_ref = h.at("k_ref").get<std::size_t>();
    c.activation = parse_activation(h.at("activation").get<std::string>());
    c.ablation = AblationConfig::parse(h.at("ablation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("params header malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw ConsistencyError(std::string("params header malformed: ") + e.what());
  }
  ShieldParams p = ShieldParams::init(c, 0);
  auto plist = p.params();
  const auto& tensors = h.at("tensors");
  if (!tensors.is_array() || tensors.size() != plist.size()) {
    throw ConsistencyError("params tensor table does not match the declared config");
  }
  std::size_t at = 12 + header_len;
  for (std::size_t k = 0; k < plist.size(); ++k) {
    Param& param = *plist[k];
    const auto& t = tensors[k];
    if (t.value("name", "") != param.name || t.value("rows", 0u) != param.value.rows() ||
        t.value("cols", 0u) != param.value.cols()) {
      throw ConsistencyError("params tensor " + std::to_string(k) + " does not match '" +
                             param.name + "' " + shape_string(param.value));
    }
    if (bytes.size() < at + 8 * param.value.size()) throw LengthError("params payload truncated");
    for (double& v : param.value.data()) {
      v = get_f64(bytes, at);
      at += 8;
    }
  }
  if (at != bytes.size()) throw ConsistencyError("params payload has trailing bytes");
  return p;
}

void save_params(const ShieldParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_params(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write params " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing params " + path.string());
}

ShieldParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open params " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_params(bytes);
}

}  // namespace shield
