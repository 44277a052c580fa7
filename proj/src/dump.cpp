#include "shield/dump.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "shield/errors.hpp"

namespace shield {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint8_t kMagic[4] = {'S', 'H', 'L', 'D'};
constexpr std::size_t kPreambleBytes = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

void put_f32_block(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (double d : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(d)));
}

void read_f32_block(std::span<const std::uint8_t> in, std::size_t& at, Matrix& m) {
  for (double& d : m.data()) {
    d = static_cast<double>(std::bit_cast<float>(get_u32(in, at)));
    at += 4;
  }
}

void fnv1a(std::uint64_t& h, std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
}

std::size_t header_size(const ordered_json& header, const char* key) {
  const auto it = header.find(key);
  if (it == header.end()) throw FormatError(std::string("dump header lacks field '") + key + "'");
  if (!it->is_number_unsigned()) {
    throw ConsistencyError(std::string("dump header field '") + key +
                           "' must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

IndexRange header_range(const ordered_json& header, const char* key) {
  const auto it = header.find(key);
  if (it == header.end()) throw FormatError(std::string("dump header lacks field '") + key + "'");
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_unsigned() ||
      !(*it)[1].is_number_unsigned()) {
    throw ConsistencyError(std::string("dump header field '") + key +
                           "' must be a pair of non-negative integers");
  }
  return {(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
}

bool matrix_has(const Matrix& m, std::size_t rows, std::size_t cols) {
  return m.rows() == rows && m.cols() == cols;
}

}  // namespace

std::vector<std::string> validate_dump(const MemeDump& d) {
  std::vector<std::string> v;
  if (d.label != 0 && d.label != 1 && d.label != kUnlabeled) {
    v.push_back("label must be 0, 1 or -1, got " + std::to_string(d.label));
  }
  if (d.n_t == 0) v.push_back("n_t must be at least 1");
  if (d.n_v == 0) v.push_back("n_v must be at least 1");
  if (d.d_t == 0 || d.d_v == 0 || d.d_sp == 0) v.push_back("embedding dims must be at least 1");
  if (d.grid_rows * d.grid_cols != d.n_v) {
    v.push_back("grid_rows * grid_cols (" + std::to_string(d.grid_rows) + " * " +
                std::to_string(d.grid_cols) + ") != n_v (" + std::to_string(d.n_v) + ")");
  }
  const auto& tr = d.text_range;
  const auto& pr = d.patch_range;
  if (tr.first > tr.last) v.push_back("text_range is reversed");
  if (pr.first > pr.last) v.push_back("patch_range is reversed");
  if (tr.last >= d.n) v.push_back("text_range exceeds n");
  if (pr.last >= d.n) v.push_back("patch_range exceeds n");
  if (tr.first <= tr.last && pr.first <= pr.last) {
    if (tr.first <= pr.last && pr.first <= tr.last) v.push_back("ranges overlap");
    if (tr.length() != d.n_t) v.push_back("text_range length != n_t");
    if (pr.length() != d.n_v) v.push_back("patch_range length != n_v");
  }
  if (!matrix_has(d.token_embeddings, d.n_t, d.d_t)) v.push_back("H_t shape != n_t x d_t");
  if (!matrix_has(d.patch_embeddings, d.n_v, d.d_v)) v.push_back("H_v shape != n_v x d_v");
  if (!matrix_has(d.hidden_state, d.d_sp, 1)) v.push_back("h_SP shape != d_sp");
  if (!matrix_has(d.attention, d.n, d.n)) v.push_back("A shape != n x n");
  if (!d.token_embeddings.all_finite()) v.push_back("non-finite value in H_t");
  if (!d.patch_embeddings.all_finite()) v.push_back("non-finite value in H_v");
  if (!d.hidden_state.all_finite()) v.push_back("non-finite value in h_SP");
  if (!d.attention.all_finite()) v.push_back("non-finite value in A");
  for (double a : d.attention.data()) {
    if (a < 0.0) {
      v.push_back("negative attention entry");
      break;
    }
  }
  return v;
}

void require_valid(const MemeDump& dump) {
  const auto violations = validate_dump(dump);
  if (violations.empty()) return;
  std::string msg = "invalid dump '" + dump.id + "':";
  for (const auto& s : violations) msg += " " + s + ";";
  throw InvalidDumpError(msg);
}

void quantize_payload(MemeDump& dump) {
  for (Matrix* m : {&dump.token_embeddings, &dump.patch_embeddings, &dump.hidden_state,
                    &dump.attention}) {
    for (double& x : m->data()) x = static_cast<double>(static_cast<float>(x));
  }
}

std::vector<std::uint8_t> encode_dump(const MemeDump& d) {
  require_valid(d);
  ordered_json header;
  header["id"] = d.id;
  header["label"] = d.label;
  header["n_t"] = d.n_t;
  header["d_t"] = d.d_t;
  header["n_v"] = d.n_v;
  header["d_v"] = d.d_v;
  header["grid_rows"] = d.grid_rows;
  header["grid_cols"] = d.grid_cols;
  header["d_sp"] = d.d_sp;
  header["n"] = d.n;
  header["text_range"] = {d.text_range.first, d.text_range.last};
  header["patch_range"] = {d.patch_range.first, d.patch_range.last};
  if (d.raw_text) header["raw_text"] = *d.raw_text;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  const std::size_t payload = 4 * (d.token_embeddings.size() + d.patch_embeddings.size() +
                                   d.hidden_state.size() + d.attention.size());
  out.reserve(kPreambleBytes + text.size() + payload);
  out.assign(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kDumpVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put_f32_block(out, d.token_embeddings);
  put_f32_block(out, d.patch_embeddings);
  put_f32_block(out, d.hidden_state);
  put_f32_block(out, d.attention);
  return out;
}

MemeDump decode_dump(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a SHIELD dump: bad magic");
  }
  if (bytes.size() < kPreambleBytes) throw LengthError("dump truncated inside preamble");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kDumpVersion) {
    throw FormatError("unsupported dump version " + std::to_string(version));
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() < kPreambleBytes + header_len) throw LengthError("dump truncated inside header");

  const auto* hbegin = reinterpret_cast<const char*>(bytes.data() + kPreambleBytes);
  ordered_json header;
  try {
    header = ordered_json::parse(hbegin, hbegin + header_len);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(std::string("dump header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("dump header is not a JSON object");

  MemeDump d;
  const auto id = header.find("id");
  if (id == header.end() || !id->is_string()) throw FormatError("dump header lacks string 'id'");
  d.id = id->get<std::string>();
  const auto label = header.find("label");
  if (label == header.end() || !label->is_number_integer()) {
    throw FormatError("dump header lacks integer 'label'");
  }
  d.label = label->get<int>();
  d.n_t = header_size(header, "n_t");
  d.d_t = header_size(header, "d_t");
  d.n_v = header_size(header, "n_v");
  d.d_v = header_size(header, "d_v");
  d.grid_rows = header_size(header, "grid_rows");
  d.grid_cols = header_size(header, "grid_cols");
  d.d_sp = header_size(header, "d_sp");
  d.n = header_size(header, "n");
  d.text_range = header_range(header, "text_range");
  d.patch_range = header_range(header, "patch_range");
  if (const auto rt = header.find("raw_text"); rt != header.end()) {
    if (!rt->is_string()) throw ConsistencyError("dump header field 'raw_text' must be a string");
    d.raw_text = rt->get<std::string>();
  }

  // Guard the size arithmetic before allocating anything.
  constexpr std::size_t kMaxElems = std::size_t{1} << 34;
  for (std::size_t dim : {d.n_t, d.d_t, d.n_v, d.d_v, d.d_sp, d.n}) {
    if (dim > (std::size_t{1} << 24)) throw ConsistencyError("dump header dimension out of range");
  }
  const std::size_t elems = d.n_t * d.d_t + d.n_v * d.d_v + d.d_sp + d.n * d.n;
  if (elems > kMaxElems) throw ConsistencyError("dump header dimensions out of range");
  const std::size_t expected = kPreambleBytes + header_len + 4 * elems;
  if (bytes.size() < expected) {
    throw LengthError("dump payload truncated: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw ConsistencyError("dump payload longer than header dims imply (" +
                           std::to_string(bytes.size()) + " > " + std::to_string(expected) + ")");
  }

  d.token_embeddings = Matrix(d.n_t, d.d_t);
  d.patch_embeddings = Matrix(d.n_v, d.d_v);
  d.hidden_state = Matrix(d.d_sp, 1);
  d.attention = Matrix(d.n, d.n);
  std::size_t at = kPreambleBytes + header_len;
  read_f32_block(bytes, at, d.token_embeddings);
  read_f32_block(bytes, at, d.patch_embeddings);
  read_f32_block(bytes, at, d.hidden_state);
  read_f32_block(bytes, at, d.attention);

  const auto violations = validate_dump(d);
  if (!violations.empty()) {
    std::string msg = "dump '" + d.id + "' violates invariants:";
    for (const auto& s : violations) msg += " " + s + ";";
    throw ConsistencyError(msg);
  }
  return d;
}

std::size_t write_dump(const MemeDump& dump, std::ostream& sink) {
  const auto bytes = encode_dump(dump);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw DataError("failed writing dump '" + dump.id + "'");
  return bytes.size();
}

MemeDump read_dump(std::istream& source) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(source),
                                  std::istreambuf_iterator<char>()};
  return decode_dump(bytes);
}

std::size_t write_dump_file(const MemeDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return write_dump(dump, out);
}

MemeDump read_dump_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dump " + path.string());
  return read_dump(in);
}

std::string content_hash(const MemeDump& dump) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  if (dump.raw_text) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(dump.raw_text->data());
    fnv1a(h, {p, dump.raw_text->size()});
  } else {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(4 * (dump.token_embeddings.size() + dump.patch_embeddings.size()));
    put_f32_block(bytes, dump.token_embeddings);
    put_f32_block(bytes, dump.patch_embeddings);
    fnv1a(h, bytes);
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace shield
