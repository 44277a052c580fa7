#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shield/dump.hpp"

namespace shield {

// Declaration order is dedup priority: train beats valid beats test.
enum class Split { kTrain = 0, kValid = 1, kTest = 2 };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct ManifestEntry {
  Split split = Split::kTrain;
  std::string path;  // relative paths resolve against DatasetManifest::base_dir
  std::string id;
  std::string content_hash;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<ManifestEntry> split(Split s) const;
  std::size_t count(Split s) const;
};

// JSON-lines, one {split, path, id, content_hash} object per line. Reading
// rejects duplicate ids within a split with a DataError.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(std::string_view text, std::filesystem::path base_dir = {});

// Fills empty content_hash fields by reading the referenced dumps.
void compute_missing_hashes(DatasetManifest& manifest);

// Cross-split duplicate removal. A hash present in several splits is kept only
// in the highest-priority one (train > valid > test); inside one split the
// first occurrence wins. Surviving entries keep their order and split.
DatasetManifest dedup(const DatasetManifest& manifest);

// Loads and validates every dump of one split, in manifest order.
std::vector<MemeDump> load_split(const DatasetManifest& manifest, Split s);

struct SynthConfig {
  std::size_t train_count = 600;
  std::size_t valid_count = 200;
  std::size_t test_count = 200;
  std::size_t n_t = 8;
  std::size_t d_t = 16;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  std::size_t d_v = 16;
  std::size_t d_sp = 16;
  // Prompt tokens before the patch block and after the text block.
  std::size_t prefix_tokens = 1;
  std::size_t suffix_tokens = 5;
  double mu_sp = 1.0;
  double mu_pc = 0.75;
  double mu_cr = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;

  // Empty when valid.
  std::vector<std::string> violations() const;
};

struct SyntheticSample {
  Split split;
  MemeDump dump;
};

// Planted-signal generator. Labels are fair coin flips; each SHIELD channel
// gets its own label-dependent signal:
//  - h_SP coordinate 0 is shifted by mu_sp * y;
//  - coordinate 0 of every H_t and H_v row is shifted by mu_pc * y;
//  - token 0 and patch 0 carry a marker block of size 2 mu_cr on their last
//    coordinates, and token 0 attends most strongly to patch 0 iff y = 1
//    (and not at all iff y = 0), so only the token-patch edges tell the
//    classes apart.
// Gaussian noise of the configured scale is added everywhere (its absolute
// value for the attention matrix). Payloads are quantized to float, so written
// files reproduce the in-memory samples exactly. Deterministic per seed.
std::vector<SyntheticSample> generate_synthetic(const SynthConfig& cfg);

// Writes <out_dir>/dumps/<id>.shld for every sample plus <out_dir>/manifest.jsonl.
DatasetManifest write_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace shield
