#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "shield/dataset.hpp"
#include "shield/errors.hpp"

using namespace shield;

namespace {

ManifestEntry entry(Split s, const std::string& id, const std::string& hash) {
  return {s, "dumps/" + id + ".shld", id, hash};
}

// Every hash appears 0-2 times in each split: all 26 non-empty patterns.
DatasetManifest adversarial_manifest(std::mt19937_64& rng) {
  DatasetManifest m;
  int pattern = 0;
  for (int tr = 0; tr <= 2; ++tr)
    for (int va = 0; va <= 2; ++va)
      for (int te = 0; te <= 2; ++te) {
        if (tr + va + te == 0) continue;
        const std::string hash = "h" + std::to_string(pattern++);
        const int counts[3] = {tr, va, te};
        for (int s = 0; s < 3; ++s)
          for (int k = 0; k < counts[s]; ++k)
            m.entries.push_back(entry(static_cast<Split>(s), hash + "-" + std::to_string(s) + "-" + std::to_string(k), hash));
      }
  std::shuffle(m.entries.begin(), m.entries.end(), rng);
  return m;
}

// Independent reference: a hash survives only in its best split, first entry wins.
std::vector<ManifestEntry> dedup_oracle(const DatasetManifest& m) {
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    bool keep = true;
    for (std::size_t j = 0; j < m.entries.size() && keep; ++j) {
      const auto& o = m.entries[j];
      if (j == i || o.content_hash != e.content_hash) continue;
      if (o.split < e.split) keep = false;
      if (o.split == e.split && j < i) keep = false;
    }
    if (keep) out.push_back(e);
  }
  return out;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Split, NamesRoundTrip) {
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) EXPECT_EQ(parse_split(to_string(s)), s);
  EXPECT_THROW(parse_split("dev"), DataError);
}

TEST(Dedup, KeepsHighestPrioritySplit) {
  DatasetManifest m;
  m.entries = {entry(Split::kTest, "a", "x"), entry(Split::kTrain, "b", "x"),
               entry(Split::kValid, "c", "x"), entry(Split::kValid, "d", "y"),
               entry(Split::kTest, "e", "y"), entry(Split::kTest, "f", "z")};
  const DatasetManifest out = dedup(m);
  ASSERT_EQ(out.entries.size(), 3u);
  EXPECT_EQ(out.entries[0].id, "b");
  EXPECT_EQ(out.entries[1].id, "d");
  EXPECT_EQ(out.entries[2].id, "f");
}

TEST(Dedup, AdversarialPatternsMatchOracle) {
  std::mt19937_64 rng(8);
  for (int round = 0; round < 50; ++round) {
    const DatasetManifest m = adversarial_manifest(rng);
    const DatasetManifest out = dedup(m);
    EXPECT_EQ(out.entries, dedup_oracle(m));
    std::set<std::string> hashes;
    for (const auto& e : out.entries) EXPECT_TRUE(hashes.insert(e.content_hash).second);
    EXPECT_EQ(out.entries.size(), 26u);
    EXPECT_EQ(dedup(out).entries, out.entries);
  }
}

TEST(Dedup, MissingHashIsDataError) {
  DatasetManifest m;
  m.entries = {entry(Split::kTrain, "a", "")};
  EXPECT_THROW(dedup(m), DataError);
}

TEST(Manifest, JsonLinesRoundTrip) {
  DatasetManifest m;
  m.entries = {entry(Split::kTrain, "a", "00ff"), entry(Split::kTest, "b", "")};
  const std::string text = manifest_to_jsonl(m);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(manifest_from_jsonl(text).entries, m.entries);
}

TEST(Manifest, RejectsDuplicateIdsWithinSplit) {
  const std::string text =
      R"({"split":"train","path":"a","id":"x","content_hash":""})" "\n"
      R"({"split":"train","path":"b","id":"x","content_hash":""})" "\n";
  EXPECT_THROW(manifest_from_jsonl(text), DataError);
  const std::string ok =
      R"({"split":"train","path":"a","id":"x","content_hash":""})" "\n"
      R"({"split":"test","path":"b","id":"x","content_hash":""})" "\n";
  EXPECT_EQ(manifest_from_jsonl(ok).entries.size(), 2u);
}

TEST(Manifest, MalformedLinesAreDataErrors) {
  EXPECT_THROW(manifest_from_jsonl("{not json}\n"), DataError);
  EXPECT_THROW(manifest_from_jsonl(R"({"split":"train","path":"a"})"), DataError);
  EXPECT_THROW(manifest_from_jsonl(R"({"split":"holdout","path":"a","id":"x","content_hash":""})"), DataError);
}

TEST(Synthetic, DeterministicPerSeed) {
  SynthConfig c;
  c.train_count = 20;
  c.valid_count = c.test_count = 5;
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  ASSERT_EQ(a.size(), 30u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].dump, b[i].dump);
  c.seed = 1;
  EXPECT_NE(generate_synthetic(c)[0].dump, a[0].dump);
}

TEST(Synthetic, DefaultShapeIsValid) {
  SynthConfig c;
  c.train_count = 4;
  c.valid_count = c.test_count = 1;
  for (const auto& s : generate_synthetic(c)) {
    EXPECT_TRUE(validate_dump(s.dump).empty());
    EXPECT_EQ(s.dump.n_t, 8u);
    EXPECT_EQ(s.dump.n_v, 16u);
    EXPECT_TRUE(s.dump.label == 0 || s.dump.label == 1);
  }
}

TEST(Synthetic, PlantedSignalsShiftWithLabel) {
  SynthConfig c;
  c.train_count = 400;
  c.valid_count = c.test_count = 1;
  double sp[2] = {0, 0}, pc[2] = {0, 0};
  int count[2] = {0, 0};
  std::size_t cross_attention_max = 0;
  for (const auto& s : generate_synthetic(c)) {
    if (s.split != Split::kTrain) continue;
    const MemeDump& d = s.dump;
    sp[d.label] += d.hidden_state[0];
    pc[d.label] += d.token_embeddings(0, 0);
    ++count[d.label];
    // With y = 1 the first text token attends most to the first patch.
    const auto row = d.attention.row(d.text_range.first);
    const auto best = std::max_element(row.begin() + static_cast<std::ptrdiff_t>(d.patch_range.first),
                                       row.begin() + static_cast<std::ptrdiff_t>(d.patch_range.last + 1));
    const bool first_patch_wins = static_cast<std::size_t>(best - row.begin()) == d.patch_range.first;
    if (d.label == 1) cross_attention_max += first_patch_wins;
    else EXPECT_FALSE(first_patch_wins);
  }
  ASSERT_GT(count[0], 150);
  ASSERT_GT(count[1], 150);
  EXPECT_NEAR(sp[1] / count[1] - sp[0] / count[0], c.mu_sp, 0.3);
  EXPECT_NEAR(pc[1] / count[1] - pc[0] / count[0], c.mu_pc, 0.3);
  EXPECT_EQ(cross_attention_max, static_cast<std::size_t>(count[1]));
}

TEST(Synthetic, RejectsBadConfig) {
  SynthConfig c;
  c.mu_cr = -1.0;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = SynthConfig{};
  c.grid_rows = 0;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
}

TEST(Synthetic, WrittenFilesReloadExactly) {
  SynthConfig c;
  c.train_count = 6;
  c.valid_count = c.test_count = 2;
  c.seed = 9;
  const auto dir = fresh_dir("shield_test_synth");
  const DatasetManifest written = write_synthetic(c, dir);
  const DatasetManifest m = read_manifest(dir / "manifest.jsonl");
  EXPECT_EQ(m.entries, written.entries);
  EXPECT_EQ(m.count(Split::kTrain), 6u);
  const auto samples = generate_synthetic(c);
  const auto train = load_split(m, Split::kTrain);
  ASSERT_EQ(train.size(), 6u);
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_EQ(train[i], samples[i].dump);
    EXPECT_EQ(m.split(Split::kTrain)[i].content_hash, content_hash(train[i]));
  }
  std::filesystem::remove_all(dir);
}
