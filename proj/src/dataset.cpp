#include "shield/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "shield/errors.hpp"

namespace shield {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<ManifestEntry> DatasetManifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [s](const ManifestEntry& e) { return e.split == s; });
  return out;
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["split"] = to_string(e.split);
    j["path"] = e.path;
    j["id"] = e.id;
    j["content_hash"] = e.content_hash;
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text, std::filesystem::path base_dir) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  std::set<std::pair<Split, std::string>> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": not a JSON object");
    for (const char* key : {"split", "path", "id"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw DataError(where + ": missing string field '" + key + "'");
      }
    }
    ManifestEntry e;
    e.split = parse_split(j["split"].get<std::string>());
    e.path = j["path"].get<std::string>();
    e.id = j["id"].get<std::string>();
    if (j.contains("content_hash")) {
      if (!j["content_hash"].is_string()) throw DataError(where + ": content_hash must be a string");
      e.content_hash = j["content_hash"].get<std::string>();
    }
    if (!seen.emplace(e.split, e.id).second) {
      throw DataError(where + ": duplicate id '" + e.id + "' in split " +
                      std::string(to_string(e.split)));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_jsonl(ss.str(), path.parent_path());
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << manifest_to_jsonl(manifest);
  if (!out) throw DataError("failed writing manifest " + path.string());
}

void compute_missing_hashes(DatasetManifest& manifest) {
  for (auto& e : manifest.entries) {
    if (e.content_hash.empty()) e.content_hash = content_hash(read_dump_file(manifest.resolve(e)));
  }
}

DatasetManifest dedup(const DatasetManifest& manifest) {
  std::unordered_map<std::string, Split> best;
  for (const auto& e : manifest.entries) {
    if (e.content_hash.empty()) {
      throw DataError("dedup: entry '" + e.id + "' has no content_hash");
    }
    auto [it, inserted] = best.emplace(e.content_hash, e.split);
    if (!inserted && e.split < it->second) it->second = e.split;
  }
  DatasetManifest out;
  out.base_dir = manifest.base_dir;
  std::unordered_set<std::string> kept;
  for (const auto& e : manifest.entries) {
    if (e.split != best.at(e.content_hash)) continue;
    if (!kept.insert(e.content_hash).second) continue;
    out.entries.push_back(e);
  }
  return out;
}

std::vector<MemeDump> load_split(const DatasetManifest& manifest, Split s) {
  std::vector<MemeDump> out;
  for (const auto& e : manifest.entries) {
    if (e.split != s) continue;
    out.push_back(read_dump_file(manifest.resolve(e)));
  }
  return out;
}

std::vector<std::string> SynthConfig::violations() const {
  std::vector<std::string> v;
  if (train_count == 0 || valid_count == 0 || test_count == 0) v.push_back("split counts must be > 0");
  if (n_t == 0 || d_t == 0 || grid_rows == 0 || grid_cols == 0 || d_v == 0 || d_sp == 0) {
    v.push_back("dims must be >= 1");
  }
  if (!(mu_sp >= 0.0) || !(mu_pc >= 0.0) || !(mu_cr >= 0.0)) v.push_back("signal strengths must be >= 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) v.push_back("noise must be finite and >= 0");
  return v;
}

std::vector<SyntheticSample> generate_synthetic(const SynthConfig& cfg) {
  if (const auto v = cfg.violations(); !v.empty()) {
    std::string msg = "invalid synthetic config:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ConfigError(msg);
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  const std::size_t n_v = cfg.grid_rows * cfg.grid_cols;
  const std::size_t j1 = cfg.prefix_tokens;
  const std::size_t i1 = j1 + n_v;
  const std::size_t n = i1 + cfg.n_t + cfg.suffix_tokens;
  const std::size_t marker_t = std::min<std::size_t>(4, cfg.d_t);
  const std::size_t marker_v = std::min<std::size_t>(4, cfg.d_v);

  std::vector<SyntheticSample> out;
  const std::pair<Split, std::size_t> plan[] = {
      {Split::kTrain, cfg.train_count}, {Split::kValid, cfg.valid_count}, {Split::kTest, cfg.test_count}};
  for (const auto& [split, count] : plan) {
    for (std::size_t k = 0; k < count; ++k) {
      MemeDump d;
      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "%s-%06zu", std::string(to_string(split)).c_str(), k);
      d.id = idbuf;
      const int y = coin(rng) ? 1 : 0;
      d.label = y;
      d.n_t = cfg.n_t;
      d.d_t = cfg.d_t;
      d.n_v = n_v;
      d.d_v = cfg.d_v;
      d.grid_rows = cfg.grid_rows;
      d.grid_cols = cfg.grid_cols;
      d.d_sp = cfg.d_sp;
      d.n = n;
      d.patch_range = {j1, j1 + n_v - 1};
      d.text_range = {i1, i1 + cfg.n_t - 1};

      d.token_embeddings = Matrix(cfg.n_t, cfg.d_t);
      for (double& x : d.token_embeddings.data()) x = cfg.noise * gauss(rng);
      d.patch_embeddings = Matrix(n_v, cfg.d_v);
      for (double& x : d.patch_embeddings.data()) x = cfg.noise * gauss(rng);
      d.hidden_state = Matrix(cfg.d_sp, 1);
      for (double& x : d.hidden_state.data()) x = cfg.noise * gauss(rng);
      d.attention = Matrix(n, n);
      for (double& x : d.attention.data()) x = std::abs(cfg.noise * gauss(rng));

      d.hidden_state[0] += cfg.mu_sp * y;
      for (std::size_t r = 0; r < cfg.n_t; ++r) d.token_embeddings(r, 0) += cfg.mu_pc * y;
      for (std::size_t r = 0; r < n_v; ++r) d.patch_embeddings(r, 0) += cfg.mu_pc * y;

      if (cfg.mu_cr > 0.0) {
        for (std::size_t c = cfg.d_t - marker_t; c < cfg.d_t; ++c)
          d.token_embeddings(0, c) += 2.0 * cfg.mu_cr;
        for (std::size_t c = cfg.d_v - marker_v; c < cfg.d_v; ++c)
          d.patch_embeddings(0, c) += 2.0 * cfg.mu_cr;
        double row_max = 0.0;
        for (std::size_t j = j1; j < j1 + n_v; ++j) row_max = std::max(row_max, d.attention(i1, j));
        d.attention(i1, j1) = y == 1 ? row_max + cfg.mu_cr : 0.0;
      }
      quantize_payload(d);
      out.push_back({split, std::move(d)});
    }
  }
  return out;
}

DatasetManifest write_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  const auto samples = generate_synthetic(cfg);
  std::filesystem::create_directories(out_dir / "dumps");
  DatasetManifest m;
  m.base_dir = out_dir;
  for (const auto& s : samples) {
    const std::string rel = "dumps/" + s.dump.id + ".shld";
    write_dump_file(s.dump, out_dir / rel);
    m.entries.push_back({s.split, rel, s.dump.id, content_hash(s.dump)});
  }
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace shield
