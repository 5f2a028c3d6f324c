#include "se3reg/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "se3reg/errors.hpp"

namespace se3reg::io {

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_double(const std::string& tok, const std::string& path,
                    std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(path + ":" + std::to_string(line) + ": bad number '" +
                     tok + "'");
  }
  return value;
}

std::size_t scalar_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8")
    return 1;
  if (type == "short" || type == "ushort" || type == "int16" ||
      type == "uint16")
    return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32")
    return 4;
  if (type == "float" || type == "float32") return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double decode_le(const char* bytes, const std::string& type) {
  if (type == "float" || type == "float32") {
    std::uint32_t u = 0;
    for (int k = 3; k >= 0; --k) {
      u = (u << 8) | static_cast<unsigned char>(bytes[k]);
    }
    return static_cast<double>(std::bit_cast<float>(u));
  }
  std::uint64_t u = 0;
  for (int k = 7; k >= 0; --k) {
    u = (u << 8) | static_cast<unsigned char>(bytes[k]);
  }
  return std::bit_cast<double>(u);
}

void encode_le(double value, bool as_float, std::string& out) {
  if (as_float) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>(u >> (8 * k)));
  } else {
    const auto u = std::bit_cast<std::uint64_t>(value);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>(u >> (8 * k)));
  }
}

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

}  // namespace

PointCloud read_ply(const std::string& path) {
  const std::string data = read_file(path);

  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_magic = false;
  bool saw_format = false;
  bool in_header = true;

  while (in_header) {
    const std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) {
      throw ParseError(path + ": header not terminated by end_header");
    }
    std::string line = data.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = eol + 1;
    ++line_no;

    const auto tokens = tokenize(line);
    if (line_no == 1) {
      if (tokens.size() != 1 || tokens[0] != "ply") {
        throw ParseError(path + ":1: missing 'ply' magic");
      }
      saw_magic = true;
      continue;
    }
    if (tokens.empty()) continue;
    if (tokens[0] == "comment" || tokens[0] == "obj_info") continue;
    if (tokens[0] == "format") {
      if (tokens.size() != 3 || tokens[2] != "1.0") {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": malformed format line");
      }
      if (tokens[1] == "ascii") {
        binary = false;
      } else if (tokens[1] == "binary_little_endian") {
        binary = true;
      } else if (tokens[1] == "binary_big_endian") {
        throw UnsupportedFormat(path + ": binary_big_endian is not supported");
      } else {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": unknown format '" + tokens[1] + "'");
      }
      saw_format = true;
      continue;
    }
    if (tokens[0] == "element") {
      if (tokens.size() != 3) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": malformed element line");
      }
      PlyElement el;
      el.name = tokens[1];
      try {
        el.count = std::stoull(tokens[2]);
      } catch (...) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": bad element count '" + tokens[2] + "'");
      }
      elements.push_back(el);
      continue;
    }
    if (tokens[0] == "property") {
      if (elements.empty()) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": property before any element");
      }
      PlyProperty prop;
      if (tokens.size() == 3) {
        prop.type = tokens[1];
        prop.name = tokens[2];
      } else if (tokens.size() == 5 && tokens[1] == "list") {
        prop.is_list = true;
        prop.name = tokens[4];
      } else {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": malformed property line");
      }
      elements.back().properties.push_back(prop);
      continue;
    }
    if (tokens[0] == "end_header") {
      in_header = false;
      continue;
    }
    throw ParseError(path + ":" + std::to_string(line_no) +
                     ": unexpected header line '" + line + "'");
  }
  if (!saw_magic || !saw_format) {
    throw ParseError(path + ": incomplete header");
  }

  const auto vertex_it =
      std::find_if(elements.begin(), elements.end(),
                   [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) {
    throw ParseError(path + ": no vertex element");
  }
  const PlyElement& vertex = *vertex_it;

  int xyz[3] = {-1, -1, -1};
  int nrm[3] = {-1, -1, -1};
  for (std::size_t k = 0; k < vertex.properties.size(); ++k) {
    const auto& p = vertex.properties[k];
    if (p.is_list) {
      throw UnsupportedFormat(path +
                              ": list-typed vertex properties are not "
                              "supported");
    }
    const int idx = static_cast<int>(k);
    if (p.name == "x") xyz[0] = idx;
    if (p.name == "y") xyz[1] = idx;
    if (p.name == "z") xyz[2] = idx;
    if (p.name == "nx") nrm[0] = idx;
    if (p.name == "ny") nrm[1] = idx;
    if (p.name == "nz") nrm[2] = idx;
  }
  for (int k = 0; k < 3; ++k) {
    if (xyz[k] < 0) {
      throw ParseError(path + ": vertex element lacks x/y/z properties");
    }
    const auto& type = vertex.properties[xyz[k]].type;
    if (scalar_size(type) != 4 && scalar_size(type) != 8) {
      throw UnsupportedFormat(path + ": coordinate property '" +
                              vertex.properties[xyz[k]].name +
                              "' must be float32 or float64");
    }
  }
  const bool has_normals = nrm[0] >= 0 && nrm[1] >= 0 && nrm[2] >= 0;

  PointCloud cloud;
  cloud.points.resize(vertex.count);
  if (has_normals) cloud.normals.resize(vertex.count);

  if (!binary) {
    for (const auto& el : elements) {
      if (el.name == "vertex") {
        for (std::size_t row = 0; row < el.count; ++row) {
          const std::size_t eol = data.find('\n', pos);
          std::string line = data.substr(
              pos, eol == std::string::npos ? std::string::npos : eol - pos);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          ++line_no;
          if (pos >= data.size() || (eol == std::string::npos && line.empty())) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected " + std::to_string(el.count) +
                             " vertex rows, found " + std::to_string(row));
          }
          pos = eol == std::string::npos ? data.size() : eol + 1;
          const auto tokens = tokenize(line);
          if (tokens.size() != el.properties.size()) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected " +
                             std::to_string(el.properties.size()) +
                             " values, found " + std::to_string(tokens.size()));
          }
          for (int k = 0; k < 3; ++k) {
            cloud.points[row][k] = parse_double(tokens[xyz[k]], path, line_no);
          }
          if (has_normals) {
            for (int k = 0; k < 3; ++k) {
              cloud.normals[row][k] =
                  parse_double(tokens[nrm[k]], path, line_no);
            }
          }
        }
        break;  // data after the vertex rows is not needed
      }
      // Skip an earlier element line by line.
      for (std::size_t row = 0; row < el.count; ++row) {
        const std::size_t eol = data.find('\n', pos);
        if (eol == std::string::npos) {
          throw ParseError(path + ": truncated element '" + el.name + "'");
        }
        pos = eol + 1;
        ++line_no;
      }
    }
    return cloud;
  }

  // Binary little-endian payload.
  for (const auto& el : elements) {
    std::size_t stride = 0;
    std::vector<std::size_t> offsets(el.properties.size());
    for (std::size_t k = 0; k < el.properties.size(); ++k) {
      if (el.properties[k].is_list) {
        if (el.name == "vertex") {
          throw UnsupportedFormat(
              path + ": list-typed vertex properties are not supported");
        }
        // Cannot compute a fixed stride past a list-typed element that
        // precedes the vertex data.
        throw UnsupportedFormat(path + ": list-typed element '" + el.name +
                                "' precedes vertex data");
      }
      const std::size_t size = scalar_size(el.properties[k].type);
      if (size == 0) {
        throw ParseError(path + ": unknown property type '" +
                         el.properties[k].type + "'");
      }
      offsets[k] = stride;
      stride += size;
    }

    if (el.name != "vertex") {
      const std::size_t need = stride * el.count;
      if (data.size() - pos < need) {
        throw ParseError(path + ": truncated element '" + el.name +
                         "': expected " + std::to_string(need) +
                         " bytes, found " + std::to_string(data.size() - pos));
      }
      pos += need;
      continue;
    }

    const std::size_t need = stride * el.count;
    if (data.size() - pos < need) {
      throw ParseError(path + ": truncated vertex payload: expected " +
                       std::to_string(need) + " bytes, found " +
                       std::to_string(data.size() - pos));
    }
    for (std::size_t row = 0; row < el.count; ++row) {
      const char* base = data.data() + pos + row * stride;
      for (int k = 0; k < 3; ++k) {
        cloud.points[row][k] =
            decode_le(base + offsets[xyz[k]], vertex.properties[xyz[k]].type);
      }
      if (has_normals) {
        for (int k = 0; k < 3; ++k) {
          cloud.normals[row][k] =
              decode_le(base + offsets[nrm[k]], vertex.properties[nrm[k]].type);
        }
      }
    }
    break;
  }
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::string& path,
               const PlyWriteOptions& opts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");

  const char* type = opts.double_precision ? "double" : "float";
  out << "ply\n";
  out << (opts.binary ? "format binary_little_endian 1.0\n"
                      : "format ascii 1.0\n");
  out << "element vertex " << cloud.size() << "\n";
  for (const char* axis : {"x", "y", "z"}) {
    out << "property " << type << " " << axis << "\n";
  }
  if (cloud.has_normals()) {
    for (const char* axis : {"nx", "ny", "nz"}) {
      out << "property " << type << " " << axis << "\n";
    }
  }
  out << "end_header\n";

  if (opts.binary) {
    std::string payload;
    payload.reserve(cloud.size() * (opts.double_precision ? 48 : 24));
    for (std::size_t row = 0; row < cloud.size(); ++row) {
      for (int k = 0; k < 3; ++k) {
        encode_le(cloud.points[row][k], !opts.double_precision, payload);
      }
      if (cloud.has_normals()) {
        for (int k = 0; k < 3; ++k) {
          encode_le(cloud.normals[row][k], !opts.double_precision, payload);
        }
      }
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  } else {
    for (std::size_t row = 0; row < cloud.size(); ++row) {
      out << format_double(cloud.points[row].x()) << ' '
          << format_double(cloud.points[row].y()) << ' '
          << format_double(cloud.points[row].z());
      if (cloud.has_normals()) {
        out << ' ' << format_double(cloud.normals[row].x()) << ' '
            << format_double(cloud.normals[row].y()) << ' '
            << format_double(cloud.normals[row].z());
      }
      out << '\n';
    }
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

CorrespondenceSet read_correspondences(const std::string& path,
                                       const PointCloud& src,
                                       const PointCloud& dst) {
  const std::string data = read_file(path);
  const std::size_t first =
      data.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    throw ParseError(path + ": no correspondences in file");
  }

  CorrespondenceSet corrs;
  if (data[first] == '[') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(data);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError(path + ": expected a JSON array");
    for (const auto& item : j) {
      if (!item.is_object() || !item.contains("p") || !item.contains("q") ||
          item["p"].size() != 3 || item["q"].size() != 3) {
        throw ParseError(path +
                         ": each entry must be {\"p\": [x,y,z], \"q\": "
                         "[x,y,z]}");
      }
      Correspondence c;
      for (int k = 0; k < 3; ++k) {
        c.p[k] = item["p"][k].get<double>();
        c.q[k] = item["q"][k].get<double>();
      }
      corrs.pairs.push_back(c);
    }
    if (corrs.empty()) throw ParseError(path + ": no correspondences in file");
    return corrs;
  }

  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 2) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 'i j' index pair");
    }
    long i = 0;
    long j = 0;
    try {
      i = std::stol(tokens[0]);
      j = std::stol(tokens[1]);
    } catch (...) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": bad index pair '" + line + "'");
    }
    if (i < 0 || j < 0 || i >= static_cast<long>(src.size()) ||
        j >= static_cast<long>(dst.size())) {
      throw IndexOutOfRange(path + ":" + std::to_string(line_no) +
                            ": index pair (" + std::to_string(i) + ", " +
                            std::to_string(j) + ") out of range");
    }
    corrs.pairs.push_back({dst.points[j], src.points[i]});
  }
  if (corrs.empty()) throw ParseError(path + ": no correspondences in file");
  return corrs;
}

std::string format_trajectory(const std::vector<RigidMotion>& motions,
                              bool full) {
  std::string out;
  for (const auto& m : motions) {
    const Mat4 h = m.matrix();
    const int rows = full ? 4 : 3;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (r != 0 || c != 0) out += ' ';
        out += format_double(h(r, c));
      }
    }
    out += '\n';
  }
  return out;
}

void write_trajectory(const std::vector<RigidMotion>& motions,
                      const std::string& path, bool full) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << format_trajectory(motions, full);
  if (!out) throw Error("write failed for '" + path + "'");
}

std::vector<RigidMotion> read_trajectory(const std::string& path) {
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  std::vector<RigidMotion> motions;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 12 && tokens.size() != 16) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 12 or 16 values, found " +
                       std::to_string(tokens.size()));
    }
    Mat4 h = Mat4::Identity();
    const int rows = tokens.size() == 16 ? 4 : 3;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < 4; ++c) {
        h(r, c) = parse_double(tokens[4 * r + c], path, line_no);
      }
    }
    if (rows == 4 && (h(3, 0) != 0.0 || h(3, 1) != 0.0 || h(3, 2) != 0.0 ||
                      h(3, 3) != 1.0)) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": bottom row must be 0 0 0 1");
    }
    const RigidMotion m = RigidMotion::from_matrix(h);
    const Mat3& r = m.rotation.m;
    if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-6) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": rotation block is not orthonormal");
    }
    motions.push_back(m);
  }
  return motions;
}

ViewGraph read_viewgraph(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.contains("n") || !j.contains("motions") || !j.contains("edges")) {
    throw ParseError(path + ": expected keys n, motions, edges");
  }

  ViewGraph g;
  g.n = j["n"].get<int>();
  if (g.n < 1) throw ParseError(path + ": n must be positive");
  if (static_cast<int>(j["motions"].size()) != g.n) {
    throw ParseError(path + ": motions must hold n entries");
  }
  for (const auto& entry : j["motions"]) {
    if (entry.size() != 16) {
      throw ParseError(path + ": each motion needs 16 row-major values");
    }
    Mat4 h;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) h(r, c) = entry[4 * r + c].get<double>();
    }
    if (h(3, 0) != 0.0 || h(3, 1) != 0.0 || h(3, 2) != 0.0 || h(3, 3) != 1.0) {
      throw ParseError(path + ": motion bottom row must be 0 0 0 1");
    }
    g.motions.push_back(RigidMotion::from_matrix(h));
  }

  const auto dir = std::filesystem::path(path).parent_path();
  for (const auto& entry : j["edges"]) {
    if (!entry.contains("i") || !entry.contains("j") ||
        !entry.contains("correspondences")) {
      throw ParseError(path + ": each edge needs i, j, correspondences");
    }
    ViewEdge edge;
    edge.i = entry["i"].get<int>();
    edge.j = entry["j"].get<int>();
    if (edge.i < 0 || edge.j < 0 || edge.i >= g.n || edge.j >= g.n ||
        edge.i >= edge.j) {
      throw IndexOutOfRange(path + ": edge (" + std::to_string(edge.i) + ", " +
                            std::to_string(edge.j) +
                            ") violates 0 <= i < j < n");
    }
    const auto& corrs = entry["correspondences"];
    if (corrs.is_string()) {
      const auto cpath = (dir / corrs.get<std::string>()).string();
      const std::string cdata = read_file(cpath);
      std::istringstream in(cdata);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (tokens.size() != 6) {
          throw ParseError(cpath + ":" + std::to_string(line_no) +
                           ": expected 6 values per line");
        }
        Correspondence c;
        for (int k = 0; k < 3; ++k) {
          c.p[k] = parse_double(tokens[k], cpath, line_no);
          c.q[k] = parse_double(tokens[3 + k], cpath, line_no);
        }
        edge.corrs.pairs.push_back(c);
      }
    } else if (corrs.is_array()) {
      for (const auto& row : corrs) {
        if (row.size() != 6) {
          throw ParseError(path + ": inline correspondences need 6 values");
        }
        Correspondence c;
        for (int k = 0; k < 3; ++k) {
          c.p[k] = row[k].get<double>();
          c.q[k] = row[3 + k].get<double>();
        }
        edge.corrs.pairs.push_back(c);
      }
    } else {
      throw ParseError(path + ": correspondences must be a path or an array");
    }
    g.edges.push_back(std::move(edge));
  }
  return g;
}

void write_viewgraph(const ViewGraph& graph, const std::string& path) {
  nlohmann::json j;
  j["n"] = graph.n;
  j["motions"] = nlohmann::json::array();
  for (const auto& m : graph.motions) {
    const Mat4 h = m.matrix();
    nlohmann::json entry = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) entry.push_back(h(r, c));
    }
    j["motions"].push_back(std::move(entry));
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges) {
    nlohmann::json edge;
    edge["i"] = e.i;
    edge["j"] = e.j;
    nlohmann::json corrs = nlohmann::json::array();
    for (const auto& c : e.corrs.pairs) {
      corrs.push_back({c.p.x(), c.p.y(), c.p.z(), c.q.x(), c.q.y(), c.q.z()});
    }
    edge["correspondences"] = std::move(corrs);
    j["edges"].push_back(std::move(edge));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace se3reg::io
