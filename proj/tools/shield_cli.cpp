#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "shield/dataset.hpp"
#include "shield/dump.hpp"
#include "shield/errors.hpp"
#include "shield/model.hpp"
#include "shield/reference_graph.hpp"
#include "shield/run.hpp"
#include "shield/theorem.hpp"

namespace fs = std::filesystem;
using namespace shield;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("shield");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("SHIELD_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
  if (level != "error" && level != "info" && level != "debug") {
    spdlog::warn("SHIELD_LOG='{}' not recognised, using info", level);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

RunConfig resolve_config(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                         const std::string& ablation) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (seed) {
    cfg.synth.seed = *seed;
    cfg.train.seed = *seed;
  }
  if (!ablation.empty()) cfg.ablation = AblationConfig::parse(ablation);
  return cfg;
}

std::vector<PreparedSample> load_prepared(const DatasetManifest& m, Split s, std::size_t k_ref) {
  auto dumps = load_split(m, s);
  spdlog::debug("loaded {} {} samples", dumps.size(), to_string(s));
  return prepare_samples(std::move(dumps), k_ref);
}

nlohmann::ordered_json dump_header(const MemeDump& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["label"] = d.label;
  j["n_t"] = d.n_t;
  j["d_t"] = d.d_t;
  j["n_v"] = d.n_v;
  j["d_v"] = d.d_v;
  j["grid_rows"] = d.grid_rows;
  j["grid_cols"] = d.grid_cols;
  j["d_sp"] = d.d_sp;
  j["n"] = d.n;
  j["text_range"] = {d.text_range.first, d.text_range.last};
  j["patch_range"] = {d.patch_range.first, d.patch_range.last};
  if (d.raw_text) j["raw_text"] = *d.raw_text;
  j["content_hash"] = content_hash(d);
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"SHIELD hateful meme detection engine"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_path, ablation, params_path, dump_path;
  std::string k_values = "1,4,8,16";
  std::string split_name = "test";
  std::optional<std::uint64_t> seed;
  std::size_t trials = 1000;
  std::size_t k_ref = 4;

  auto* gen = app.add_subcommand("gen-synth", "Generate a planted-signal synthetic dataset");
  gen->add_option("--config", config_path, "JSON config file");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  auto* tr = app.add_subcommand("train", "Train on the train split, select on valid");
  tr->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  tr->add_option("--config", config_path, "JSON config file");
  tr->add_option("--out", out_path, "Output directory")->required();
  tr->add_option("--seed", seed, "Override the config seed");
  tr->add_option("--ablation", ablation, "spm, spm+pcm or full");

  auto* ev = app.add_subcommand("eval", "Evaluate saved params on one split");
  ev->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  ev->add_option("--params", params_path, "Params file from train")->required();
  ev->add_option("--split", split_name, "train, valid or test");
  ev->add_option("--out", out_path, "Write metrics JSON here");

  auto* vt = app.add_subcommand("verify-theorem", "Run a sign-flip bound campaign");
  vt->add_option("--trials", trials, "Number of random instances");
  vt->add_option("--seed", seed, "Campaign seed");
  vt->add_option("--out", out_path, "Write the report here");

  auto* dd = app.add_subcommand("dedup", "Drop cross-split duplicates from a manifest");
  dd->add_option("--manifest", manifest_path, "Input manifest")->required();
  dd->add_option("--out", out_path, "Output manifest path")->required();

  auto* sk = app.add_subcommand("sweep-k", "Train and evaluate once per K_ref value");
  sk->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  sk->add_option("--config", config_path, "JSON config file");
  sk->add_option("--k-values", k_values, "Comma-separated K_ref values");
  sk->add_option("--seed", seed, "Override the config seed");
  sk->add_option("--ablation", ablation, "spm, spm+pcm or full");
  sk->add_option("--out", out_path, "Write sweep JSON here");

  auto* in = app.add_subcommand("inspect", "Print a dump header and validate it");
  in->add_option("dump", dump_path, "Dump file")->required();

  auto* eg = app.add_subcommand("export-graph", "Print the reference graph edge list of a dump");
  eg->add_option("dump", dump_path, "Dump file")->required();
  eg->add_option("--k-ref", k_ref, "Top-K patches per token");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(config_path, seed, "");
      ensure_out_dir(out_path);
      const DatasetManifest m = write_synthetic(cfg.synth, out_path);
      spdlog::info("wrote {} train / {} valid / {} test dumps to {}", m.count(Split::kTrain),
                   m.count(Split::kValid), m.count(Split::kTest), out_path);
    } else if (tr->parsed()) {
      const RunConfig cfg = resolve_config(config_path, seed, ablation);
      ensure_out_dir(out_path);
      const DatasetManifest m = read_manifest(manifest_path);
      const auto train_set = load_prepared(m, Split::kTrain, cfg.train.k_ref);
      const auto valid_set = load_prepared(m, Split::kValid, cfg.train.k_ref);
      spdlog::info("training '{}' on {} samples, validating on {}", cfg.ablation.name(),
                   train_set.size(), valid_set.size());
      const TrainResult r = train(train_set, valid_set, cfg.train, cfg.ablation);

      std::string history;
      for (const auto& e : r.history) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["valid_metric"] = e.valid_metric;
        history += j.dump() + "\n";
        spdlog::debug("epoch {} loss {:.5f} valid {:.4f}", e.epoch, e.train_loss, e.valid_metric);
      }
      write_text(fs::path(out_path) / "history.jsonl", history);
      save_params(r.best, fs::path(out_path) / "params.bin");

      nlohmann::ordered_json report;
      report["ablation"] = cfg.ablation.name();
      report["best_epoch"] = r.best_epoch;
      report["best_valid_metric"] = r.best_valid_metric;
      report["selection"] = std::string(to_string(cfg.train.selection));
      report["head_input_dim"] = r.best.config.head_input_dim();
      if (m.count(Split::kTest) > 0) {
        const auto test_set = load_prepared(m, Split::kTest, cfg.train.k_ref);
        report["test"] = to_json(evaluate(test_set, r.best, cfg.eval_threads));
      }
      report["config"] = to_json(cfg);
      write_text(fs::path(out_path) / "report.json", report.dump(2) + "\n");
      std::cout << report.dump(2) << "\n";
    } else if (ev->parsed()) {
      const ShieldParams params = load_params(params_path);
      const DatasetManifest m = read_manifest(manifest_path);
      Split split;
      try {
        split = parse_split(split_name);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      const auto samples = load_prepared(m, split, params.config.k_ref);
      const std::string text = to_json(evaluate(samples, params)).dump(2) + "\n";
      if (!out_path.empty()) write_text(out_path, text);
      std::cout << text;
    } else if (vt->parsed()) {
      const CampaignSummary s = run_theorem_campaign(trials, seed.value_or(0));
      const std::string text = to_json(s).dump(2) + "\n";
      if (!out_path.empty()) write_text(out_path, text);
      std::cout << text;
      if (s.failures() != 0) {
        spdlog::error("{} theorem checks failed", s.failures());
        return kExitInternal;
      }
    } else if (dd->parsed()) {
      DatasetManifest m = read_manifest(manifest_path);
      compute_missing_hashes(m);
      const DatasetManifest out = dedup(m);
      // Rebase relative dump paths onto the output manifest's directory.
      DatasetManifest written = out;
      const fs::path out_dir = fs::absolute(fs::path(out_path)).parent_path();
      for (auto& e : written.entries) {
        if (fs::path(e.path).is_relative()) {
          e.path = fs::absolute(out.resolve(e)).lexically_normal().lexically_relative(out_dir).string();
        }
      }
      if (!out_dir.empty()) fs::create_directories(out_dir);
      write_manifest(written, out_path);
      spdlog::info("removed {} duplicate entries ({} -> {})", m.entries.size() - out.entries.size(),
                   m.entries.size(), out.entries.size());
    } else if (sk->parsed()) {
      const RunConfig cfg = resolve_config(config_path, seed, ablation);
      const auto ks = parse_k_values(k_values);
      const DatasetManifest m = read_manifest(manifest_path);
      const auto rows = sweep_k(load_split(m, Split::kTrain), load_split(m, Split::kValid),
                                load_split(m, Split::kTest), cfg, ks);
      const std::string text = to_json(rows).dump(2) + "\n";
      if (!out_path.empty()) write_text(out_path, text);
      std::cout << text << format_sweep_table(rows);
    } else if (in->parsed()) {
      const MemeDump d = read_dump_file(dump_path);
      std::cout << dump_header(d).dump(2) << "\n";
    } else if (eg->parsed()) {
      const MemeDump d = read_dump_file(dump_path);
      std::cout << export_edge_list(build_reference_graph(d, k_ref));
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
}
