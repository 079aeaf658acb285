#pragma once

// Minimal PLY reader/writer for vertex-only point clouds. Reads ascii and
// binary_little_endian; writes ascii with fixed precision so that identical
// inputs produce byte-identical files.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc::ply {

class PlyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Column-major vertex table: one vector per named property.
struct VertexTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t size() const { return columns.empty() ? 0 : columns.front().size(); }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) {
        return static_cast<int>(i);
      }
    }
    return -1;
  }
  bool has(const std::string& name) const { return find(name) >= 0; }

  const std::vector<double>& column(const std::string& name) const {
    const int i = find(name);
    if (i < 0) {
      throw PlyError("ply: missing vertex property '" + name + "'");
    }
    return columns[static_cast<std::size_t>(i)];
  }

  std::vector<double>& add_column(const std::string& name) {
    names.push_back(name);
    columns.emplace_back();
    return columns.back();
  }
};

namespace detail {

enum class Scalar { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

inline Scalar parse_scalar(const std::string& t) {
  if (t == "char" || t == "int8") return Scalar::kInt8;
  if (t == "uchar" || t == "uint8") return Scalar::kUInt8;
  if (t == "short" || t == "int16") return Scalar::kInt16;
  if (t == "ushort" || t == "uint16") return Scalar::kUInt16;
  if (t == "int" || t == "int32") return Scalar::kInt32;
  if (t == "uint" || t == "uint32") return Scalar::kUInt32;
  if (t == "float" || t == "float32") return Scalar::kFloat32;
  if (t == "double" || t == "float64") return Scalar::kFloat64;
  throw PlyError("ply: unsupported scalar type '" + t + "'");
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kInt8:
    case Scalar::kUInt8: return 1;
    case Scalar::kInt16:
    case Scalar::kUInt16: return 2;
    case Scalar::kInt32:
    case Scalar::kUInt32:
    case Scalar::kFloat32: return 4;
    case Scalar::kFloat64: return 8;
  }
  return 0;
}

template <typename T>
double load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

inline double read_binary(const char* p, Scalar s) {
  switch (s) {
    case Scalar::kInt8: return load<std::int8_t>(p);
    case Scalar::kUInt8: return load<std::uint8_t>(p);
    case Scalar::kInt16: return load<std::int16_t>(p);
    case Scalar::kUInt16: return load<std::uint16_t>(p);
    case Scalar::kInt32: return load<std::int32_t>(p);
    case Scalar::kUInt32: return load<std::uint32_t>(p);
    case Scalar::kFloat32: return load<float>(p);
    case Scalar::kFloat64: return load<double>(p);
  }
  return 0.0;
}

}  // namespace detail

inline VertexTable read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw PlyError("ply: missing magic header");
  }
  std::string format;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<detail::Scalar> types;
  VertexTable table;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      ls >> format;
    } else if (key == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (seen_vertex && name != "vertex") {
        // Trailing elements (faces, ...) are ignored; vertex must come first.
        in_vertex = false;
        continue;
      }
      if (name != "vertex") {
        throw PlyError("ply: expected the vertex element first, got '" + name + "'");
      }
      in_vertex = true;
      seen_vertex = true;
      vertex_count = count;
    } else if (key == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") {
        throw PlyError("ply: list properties on vertices are not supported");
      }
      ls >> name;
      types.push_back(detail::parse_scalar(type));
      table.add_column(name).reserve(vertex_count);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!seen_vertex) {
    throw PlyError("ply: no vertex element");
  }
  const std::size_t np = types.size();
  if (format == "ascii") {
    for (std::size_t i = 0; i < vertex_count; ++i) {
      for (std::size_t j = 0; j < np; ++j) {
        double v;
        if (!(in >> v)) {
          throw PlyError("ply: truncated ascii body");
        }
        table.columns[j].push_back(v);
      }
    }
  } else if (format == "binary_little_endian") {
    std::size_t stride = 0;
    for (auto t : types) stride += detail::scalar_size(t);
    std::vector<char> buf(stride);
    for (std::size_t i = 0; i < vertex_count; ++i) {
      if (!in.read(buf.data(), static_cast<std::streamsize>(stride))) {
        throw PlyError("ply: truncated binary body");
      }
      std::size_t off = 0;
      for (std::size_t j = 0; j < np; ++j) {
        table.columns[j].push_back(detail::read_binary(buf.data() + off, types[j]));
        off += detail::scalar_size(types[j]);
      }
    }
  } else {
    throw PlyError("ply: unsupported format '" + format + "'");
  }
  return table;
}

inline VertexTable read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PlyError("ply: cannot open '" + path + "'");
  }
  return read(in);
}

/// Writes every column as a double property.
inline void write(std::ostream& out, const VertexTable& table) {
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << table.size() << "\n";
  for (const auto& n : table.names) {
    out << "property double " << n << "\n";
  }
  out << "end_header\n";
  out << std::setprecision(10);
  const std::size_t n = table.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      if (j) out << ' ';
      out << table.columns[j][i];
    }
    out << '\n';
  }
}

inline void write_file(const std::string& path, const VertexTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw PlyError("ply: cannot write '" + path + "'");
  }
  write(out, table);
}

}  // namespace crloc::ply
