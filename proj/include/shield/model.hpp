#pragma once

// The SHIELD classifier: context fusion (PCM), the dump-provided social
// perception vector (SPM) and the reference-graph embedding (CRM) are
// concatenated as [h_PC, h_SP, h_CR] and scored by a one-hidden-layer MLP.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shield/autodiff.hpp"
#include "shield/dump.hpp"
#include "shield/metrics.hpp"
#include "shield/pcm.hpp"
#include "shield/reference_graph.hpp"

namespace shield {

struct AblationConfig {
  bool use_pcm = true;
  bool use_spm = true;
  bool use_crm = true;

  // "spm", "spm+pcm", "full" plus any '+'-joined subset of {pcm, spm, crm}.
  static AblationConfig parse(std::string_view name);
  std::string name() const;
  bool any() const noexcept { return use_pcm || use_spm || use_crm; }
  bool operator==(const AblationConfig&) const = default;
};

enum class SelectionMetric { kAuc, kMacroF1 };
std::string_view to_string(SelectionMetric m);
SelectionMetric parse_selection_metric(std::string_view name);

struct ModelConfig {
  std::size_t d_t = 0;
  std::size_t d_v = 0;
  std::size_t d_sp = 0;
  std::size_t fused_dim = 64;   // d
  std::size_t graph_dim = 0;    // d_g = d_CR
  std::size_t hidden_dim = 64;  // h_dim
  std::size_t gcn_layers = 2;
  std::size_t k_ref = 4;
  Activation activation = Activation::kRelu;
  AblationConfig ablation;

  std::size_t head_input_dim() const;
  bool operator==(const ModelConfig&) const = default;
};

struct HeadParams {
  Param w_hidden;  // h_dim x input
  Param b_hidden;  // h_dim x 1
  Param w_out;     // 1 x h_dim
  Param b_out;     // 1 x 1
};

struct ShieldParams {
  ModelConfig config;
  std::optional<PcmParams> pcm;
  std::optional<GcnParams> gcn;
  HeadParams head;

  // Fixed order: pcm, gcn, head.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  static ShieldParams init(const ModelConfig& config, std::uint64_t seed);
};

// Throws ConfigError when the present modules or head width disagree with
// config.ablation.
void check_consistency(const ShieldParams& params);

// A dump together with its reference graph, built once per K_ref.
struct PreparedSample {
  MemeDump dump;
  ReferenceGraph graph;
  CsrMatrix propagation;
  std::size_t k_ref = 0;
};

PreparedSample prepare_sample(MemeDump dump, std::size_t k_ref);
std::vector<PreparedSample> prepare_samples(std::vector<MemeDump> dumps, std::size_t k_ref);

// (h_SP, A) exactly as stored in the dump.
std::pair<Matrix, Matrix> spm_provide(const MemeDump& dump);

struct ForwardResult {
  Var logit;  // 1x1
  Var h;      // concatenated representation
};

// `sample` must outlive the tape.
ForwardResult forward(Tape& tape, const PreparedSample& sample, ShieldParams& params);

// Logit without keeping the tape around.
double forward_logit(const PreparedSample& sample, ShieldParams& params);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  std::size_t k_ref = 4;
  std::size_t gcn_layers = 2;
  std::size_t fused_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t graph_dim = 0;  // 0: d_t when d_t == d_v, else max(d_t, d_v)
  Activation activation = Activation::kRelu;
  SelectionMetric selection = SelectionMetric::kAuc;

  std::vector<std::string> violations() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_metric = 0.0;
};

struct TrainResult {
  ShieldParams best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_metric = 0.0;
  double first_batch_loss = 0.0;
};

ModelConfig model_config_for(const MemeDump& sample, const TrainConfig& cfg,
                             const AblationConfig& ablation);

// Mini-batch Adam on mean BCE. After every epoch the validation metric is
// computed; the parameters of the best epoch (earliest on ties) are returned.
// Throws DataError for unlabeled samples or inconsistent dims.
TrainResult train(std::span<const PreparedSample> train_set, std::span<const PreparedSample> valid_set,
                  const TrainConfig& cfg, const AblationConfig& ablation);

std::vector<double> predict_logits(std::span<const PreparedSample> samples,
                                   const ShieldParams& params, unsigned threads = 1);

// Throws DomainError on an empty set, DataError on unlabeled samples.
Metrics evaluate(std::span<const PreparedSample> samples, const ShieldParams& params,
                 unsigned threads = 1);

// Binary params file: "SHPM" | u32 LE version | u32 LE header length | JSON
// header (config and tensor table) | f64 LE row-major tensors in params()
// order.
std::vector<std::uint8_t> encode_params(const ShieldParams& params);
ShieldParams decode_params(std::span<const std::uint8_t> bytes);
void save_params(const ShieldParams& params, const std::filesystem::path& path);
ShieldParams load_params(const std::filesystem::path& path);

}  // namespace shield
