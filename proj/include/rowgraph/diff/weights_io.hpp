#pragma once

// RGW1 weight files: the 4-byte magic "RGW1" followed by records until EOF.
// Each record is
//   u32 name_length | name bytes (UTF-8) | u32 rank | rank x u32 extents |
//   product(extents) x f32 payload
// all little-endian. Run metadata (stage count, sample count, ...) is stored
// as ordinary rank-1 records whose names start with "meta.".

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rowgraph/diff/tensor.hpp"

namespace rowgraph::diff {

struct WeightRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

template <class U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw IoError("weights: truncated record");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace detail

inline constexpr char kWeightsMagic[4] = {'R', 'G', 'W', '1'};

inline std::string encode_weights(const std::vector<WeightRecord>& records) {
  std::string out(kWeightsMagic, 4);
  for (const auto& r : records) {
    if (numel(r.shape) != r.values.size())
      throw ShapeError("weights: record '" + r.name + "' payload does not match its shape");
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (float v : r.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline std::vector<WeightRecord> decode_weights(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0)
    throw IoError("weights: missing RGW1 magic");
  std::vector<WeightRecord> records;
  std::size_t pos = 4;
  while (pos < bytes.size()) {
    WeightRecord r;
    const auto name_len = detail::get_le<std::uint32_t>(bytes, pos);
    if (pos + name_len > bytes.size()) throw IoError("weights: truncated name");
    r.name.assign(bytes.data() + pos, name_len);
    pos += name_len;
    const auto rank = detail::get_le<std::uint32_t>(bytes, pos);
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(detail::get_le<std::uint32_t>(bytes, pos));
    const std::size_t count = numel(r.shape);
    if (pos + 4 * count > bytes.size()) throw IoError("weights: truncated payload in '" + r.name + "'");
    r.values.resize(count);
    for (auto& v : r.values) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos));
    records.push_back(std::move(r));
  }
  return records;
}

inline void write_weights(const std::string& path, const std::vector<WeightRecord>& records) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const auto bytes = encode_weights(records);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline std::vector<WeightRecord> read_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

// Splits "meta.*" records (first element of each) from parameter records.
inline std::map<std::string, float> weight_metadata(const std::vector<WeightRecord>& records) {
  std::map<std::string, float> meta;
  for (const auto& r : records) {
    if (r.name.rfind("meta.", 0) == 0 && !r.values.empty()) meta[r.name.substr(5)] = r.values[0];
  }
  return meta;
}

inline WeightRecord meta_record(const std::string& key, float value) {
  return WeightRecord{"meta." + key, {1}, {value}};
}

}  // namespace rowgraph::diff
