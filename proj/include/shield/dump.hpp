#pragma once

// SHIELD dump v1: one file per sample carrying everything the engine needs.
//
//   "SHLD" | u32 LE version (=1) | u32 LE header length | UTF-8 JSON header
//   | payload: f32 LE row-major H_t, H_v, h_SP, A (no padding)
//
// Header fields: id, label, n_t, d_t, n_v, d_v, grid_rows, grid_cols, d_sp, n,
// text_range [i1, i2], patch_range [j1, j2], optional raw_text. Ranges are
// inclusive on both ends.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shield/matrix.hpp"

namespace shield {

inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr int kUnlabeled = -1;

struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive

  std::size_t length() const noexcept { return last - first + 1; }
  bool contains(std::size_t i) const noexcept { return i >= first && i <= last; }
  bool operator==(const IndexRange&) const = default;
};

struct MemeDump {
  std::string id;
  int label = kUnlabeled;  // 0 non-hateful, 1 hateful, -1 unlabeled
  std::size_t n_t = 0;
  std::size_t d_t = 0;
  std::size_t n_v = 0;
  std::size_t d_v = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t d_sp = 0;
  std::size_t n = 0;  // total prompt tokens
  IndexRange text_range;
  IndexRange patch_range;
  Matrix token_embeddings;  // H_t, n_t x d_t
  Matrix patch_embeddings;  // H_v, n_v x d_v
  Matrix hidden_state;      // h_SP, d_sp x 1
  Matrix attention;         // A, n x n
  std::optional<std::string> raw_text;

  bool operator==(const MemeDump&) const = default;
};

// Every invariant the format promises. Empty result means the dump is valid.
std::vector<std::string> validate_dump(const MemeDump& dump);

// Throws InvalidDumpError listing the violations, if any.
void require_valid(const MemeDump& dump);

// Rounds every payload value to the nearest float, the precision stored on disk.
void quantize_payload(MemeDump& dump);

std::vector<std::uint8_t> encode_dump(const MemeDump& dump);
// Throws FormatError (magic/version/header syntax), LengthError (truncated)
// or ConsistencyError (header fields, payload size or payload values violate
// the dump invariants).
MemeDump decode_dump(std::span<const std::uint8_t> bytes);

std::size_t write_dump(const MemeDump& dump, std::ostream& sink);
MemeDump read_dump(std::istream& source);
std::size_t write_dump_file(const MemeDump& dump, const std::filesystem::path& path);
MemeDump read_dump_file(const std::filesystem::path& path);

// 16 lowercase hex digits of a 64-bit FNV-1a hash over raw_text when present,
// otherwise over the f32 little-endian bytes of H_t followed by H_v.
std::string content_hash(const MemeDump& dump);

}  // namespace shield
