#pragma once

// File formats for scenes (JSON), RGB images (binary PPM), confidence maps
// (binary PGM) and displacement fields (RGVF: text header + f32 planes).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rowgraph/diff/weights_io.hpp"
#include "rowgraph/fieldgen/ground_truth.hpp"
#include "rowgraph/fieldgen/render.hpp"
#include "rowgraph/fieldgen/scene.hpp"

namespace rowgraph::fieldgen {

using diff::IoError;

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

// ---- scenes ---------------------------------------------------------------

inline nlohmann::json scene_to_json(const PlantationScene& s) {
  nlohmann::json j;
  j["width"] = s.width;
  j["height"] = s.height;
  j["lines"] = nlohmann::json::array();
  for (const auto& l : s.lines) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : l.plants) pts.push_back({p.x, p.y});
    j["lines"].push_back({{"id", l.id}, {"plants", pts}});
  }
  j["weeds"] = nlohmann::json::array();
  for (const auto& w : s.weeds) j["weeds"].push_back({w.x, w.y});
  return j;
}

inline PlantationScene scene_from_json(const nlohmann::json& j) {
  PlantationScene s;
  s.width = j.at("width").get<std::size_t>();
  s.height = j.at("height").get<std::size_t>();
  for (const auto& l : j.at("lines")) {
    PlantationLine line;
    line.id = l.at("id").get<int>();
    for (const auto& p : l.at("plants")) line.plants.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    s.lines.push_back(std::move(line));
  }
  if (j.contains("weeds"))
    for (const auto& w : j.at("weeds")) s.weeds.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
  return s;
}

inline void write_scene(const std::string& path, const PlantationScene& s) {
  write_file(path, scene_to_json(s).dump(1) + "\n");
}

inline PlantationScene read_scene(const std::string& path) {
  try {
    return scene_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed scene file '" + path + "': " + e.what());
  }
}

// ---- netpbm ---------------------------------------------------------------

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

inline std::string encode_ppm(const Image& img) {
  const std::size_t h = img.dim(1), w = img.dim(2), plane = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + 3 * plane);
  const auto d = img.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(to_byte(d[c * plane + i])));
  return out;
}

inline std::string encode_pgm(const Map& map, std::size_t channel = 0) {
  const std::size_t h = map.dim(1), w = map.dim(2), plane = h * w;
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const auto d = map.data();
  for (std::size_t i = 0; i < plane; ++i) out.push_back(static_cast<char>(to_byte(d[channel * plane + i])));
  return out;
}

namespace detail {
// Reads "P?\n<w> <h>\n<max>\n" allowing '#' comments, returns payload offset.
inline std::size_t parse_netpbm_header(const std::string& bytes, const char* magic, std::size_t& w,
                                       std::size_t& h) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0)
    throw IoError(std::string("expected netpbm magic ") + magic);
  std::size_t pos = 2;
  std::size_t fields[3];
  for (auto& field : fields) {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw IoError("malformed netpbm header");
    field = v;
  }
  if (fields[2] != 255) throw IoError("only 8-bit netpbm files are supported");
  ++pos;  // single whitespace before the raster
  w = fields[0];
  h = fields[1];
  return pos;
}
}  // namespace detail

inline Image decode_ppm(const std::string& bytes) {
  std::size_t w = 0, h = 0;
  const std::size_t pos = detail::parse_netpbm_header(bytes, "P6", w, h);
  const std::size_t plane = w * h;
  if (w == 0 || h == 0 || bytes.size() < pos + 3 * plane) throw IoError("truncated PPM raster");
  Image img({3, h, w});
  auto d = img.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      d[c * plane + i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + 3 * i + c])) / 255.0f;
  return img;
}

inline Map decode_pgm(const std::string& bytes) {
  std::size_t w = 0, h = 0;
  const std::size_t pos = detail::parse_netpbm_header(bytes, "P5", w, h);
  if (w == 0 || h == 0 || bytes.size() < pos + w * h) throw IoError("truncated PGM raster");
  Map m({1, h, w});
  auto d = m.data();
  for (std::size_t i = 0; i < w * h; ++i)
    d[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / 255.0f;
  return m;
}

inline void write_ppm(const std::string& path, const Image& img) { write_file(path, encode_ppm(img)); }
inline Image read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }
inline void write_pgm(const std::string& path, const Map& m) { write_file(path, encode_pgm(m)); }

// ---- displacement fields ----------------------------------------------------

inline std::string encode_rgvf(const Map& field) {
  const std::size_t h = field.dim(1), w = field.dim(2);
  std::string out = "RGVF\n" + std::to_string(h) + " " + std::to_string(w) + "\n";
  for (float v : field.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
  }
  return out;
}

inline Map decode_rgvf(const std::string& bytes) {
  if (bytes.compare(0, 5, "RGVF\n") != 0) throw IoError("missing RGVF magic");
  const auto eol = bytes.find('\n', 5);
  if (eol == std::string::npos) throw IoError("malformed RGVF header");
  std::istringstream hdr(bytes.substr(5, eol - 5));
  std::size_t h = 0, w = 0;
  if (!(hdr >> h >> w) || h == 0 || w == 0) throw IoError("malformed RGVF header");
  const std::size_t pos = eol + 1, count = 2 * h * w;
  if (bytes.size() != pos + 4 * count) throw IoError("RGVF payload length mismatch");
  Map field({2, h, w});
  auto d = field.data();
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 4 * i + b])) << (8 * b);
    d[i] = std::bit_cast<float>(bits);
  }
  return field;
}

inline void write_rgvf(const std::string& path, const Map& field) { write_file(path, encode_rgvf(field)); }
inline Map read_rgvf(const std::string& path) { return decode_rgvf(read_file(path)); }

}  // namespace rowgraph::fieldgen
