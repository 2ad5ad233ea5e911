// ASCII OBJ and ASCII / binary-little-endian PLY reading and writing.
//
// OBJ: only `v x y z` and `f i j k` (1-based) are honored, every other
// directive is skipped. PLY: `element vertex` must carry x,y,z properties
// (optionally red,green,blue as uchar); `element face` a list property of
// three indices. Unknown properties and elements are skipped.
#pragma once
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/mesh.hpp"

namespace tfm {

enum class MeshFormat { Obj, PlyAscii, PlyBinary };

using VertexColors = std::vector<std::array<std::uint8_t, 3>>;

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline TriangleMesh parse_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        throw ParseError("obj line " + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // accept `i`, `i/t`, `i/t/n`; only the vertex index is used
        size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int i = 0;
        try {
          i = std::stoi(head);
        } catch (...) {
          throw ParseError("obj line " + std::to_string(lineno) + ": bad face index '" + tok + "'");
        }
        if (i < 1)
          throw ParseError("obj line " + std::to_string(lineno) +
                           ": face indices are 1-based, got " + std::to_string(i));
        idx.push_back(i - 1);
      }
      if (idx.size() != 3)
        throw ParseError("obj line " + std::to_string(lineno) + ": face with " +
                         std::to_string(idx.size()) + " vertices (triangles only)");
      mesh.faces.push_back({idx[0], idx[1], idx[2]});
    }
    // anything else ignored
  }
  return mesh;
}

struct PlyProperty {
  std::string name;
  std::string type;       // scalar type, or index type for lists
  bool is_list = false;
  std::string count_type;  // list count type
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> props;
};

inline int ply_type_size(const std::string& t) {
  if (t == "char" || t == "int8" || t == "uchar" || t == "uint8") return 1;
  if (t == "short" || t == "int16" || t == "ushort" || t == "uint16") return 2;
  if (t == "int" || t == "int32" || t == "uint" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw ParseError("ply: unknown property type '" + t + "'");
}

inline double ply_read_binary_scalar(std::istream& in, const std::string& type) {
  unsigned char buf[8];
  int sz = ply_type_size(type);
  if (!in.read(reinterpret_cast<char*>(buf), sz)) throw ParseError("ply: truncated binary body");
  auto as = [&]<typename T>() {
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return static_cast<double>(v);
  };
  if (type == "char" || type == "int8") return as.operator()<std::int8_t>();
  if (type == "uchar" || type == "uint8") return as.operator()<std::uint8_t>();
  if (type == "short" || type == "int16") return as.operator()<std::int16_t>();
  if (type == "ushort" || type == "uint16") return as.operator()<std::uint16_t>();
  if (type == "int" || type == "int32") return as.operator()<std::int32_t>();
  if (type == "uint" || type == "uint32") return as.operator()<std::uint32_t>();
  if (type == "float" || type == "float32") return as.operator()<float>();
  return as.operator()<double>();
}

inline TriangleMesh parse_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw ParseError("ply: bad magic");
  bool binary = false;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "comment" || tag == "obj_info" || tag.empty()) continue;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw ParseError("ply: unsupported format '" + fmt + "'");
    } else if (tag == "element") {
      PlyElement el;
      if (!(ls >> el.name >> el.count)) throw ParseError("ply: bad element line");
      elements.push_back(el);
    } else if (tag == "property") {
      if (elements.empty()) throw ParseError("ply: property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        if (!(ls >> p.count_type >> p.type >> p.name)) throw ParseError("ply: bad list property");
      } else {
        p.type = t;
        if (!(ls >> p.name)) throw ParseError("ply: bad property");
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    } else {
      throw ParseError("ply: unexpected header line '" + line + "'");
    }
  }

  TriangleMesh mesh;
  for (const auto& el : elements) {
    if (el.name == "vertex") {
      int ix = -1, iy = -1, iz = -1;
      for (size_t p = 0; p < el.props.size(); ++p) {
        if (el.props[p].is_list) throw ParseError("ply: list property on vertex element");
        if (el.props[p].name == "x") ix = static_cast<int>(p);
        if (el.props[p].name == "y") iy = static_cast<int>(p);
        if (el.props[p].name == "z") iz = static_cast<int>(p);
      }
      if (ix < 0 || iy < 0 || iz < 0) throw ParseError("ply: vertex element lacks x/y/z");
      mesh.vertices.reserve(el.count);
      for (long v = 0; v < el.count; ++v) {
        std::vector<double> vals(el.props.size());
        for (size_t p = 0; p < el.props.size(); ++p) {
          if (binary) {
            vals[p] = ply_read_binary_scalar(in, el.props[p].type);
          } else if (!(in >> vals[p])) {
            throw ParseError("ply: truncated vertex data");
          }
        }
        mesh.vertices.push_back({vals[ix], vals[iy], vals[iz]});
      }
    } else if (el.name == "face") {
      if (el.props.size() != 1 || !el.props[0].is_list)
        throw ParseError("ply: face element must be a single list property");
      mesh.faces.reserve(el.count);
      for (long f = 0; f < el.count; ++f) {
        long count;
        std::array<int, 3> tri{};
        if (binary) {
          count = static_cast<long>(ply_read_binary_scalar(in, el.props[0].count_type));
          if (count != 3) throw ParseError("ply: face with " + std::to_string(count) + " vertices");
          for (int k = 0; k < 3; ++k)
            tri[k] = static_cast<int>(ply_read_binary_scalar(in, el.props[0].type));
        } else {
          if (!(in >> count)) throw ParseError("ply: truncated face data");
          if (count != 3) throw ParseError("ply: face with " + std::to_string(count) + " vertices");
          for (int k = 0; k < 3; ++k)
            if (!(in >> tri[k])) throw ParseError("ply: truncated face data");
        }
        mesh.faces.push_back(tri);
      }
    } else {
      // skip unknown element
      for (long r = 0; r < el.count; ++r) {
        for (const auto& p : el.props) {
          if (p.is_list) {
            long count = binary ? static_cast<long>(ply_read_binary_scalar(in, p.count_type)) : 0;
            if (!binary && !(in >> count)) throw ParseError("ply: truncated data");
            for (long k = 0; k < count; ++k) {
              if (binary)
                ply_read_binary_scalar(in, p.type);
              else {
                double d;
                if (!(in >> d)) throw ParseError("ply: truncated data");
              }
            }
          } else if (binary) {
            ply_read_binary_scalar(in, p.type);
          } else {
            double d;
            if (!(in >> d)) throw ParseError("ply: truncated data");
          }
        }
      }
    }
  }
  return mesh;
}

template <typename T>
inline void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace detail

inline TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  TriangleMesh mesh =
      format == MeshFormat::Obj ? detail::parse_obj(in) : detail::parse_ply(in);
  validate_mesh(mesh);
  return mesh;
}

// Format from extension: .obj / .ply.
inline TriangleMesh load_mesh(const std::string& path) {
  bool obj = path.size() >= 4 && path.substr(path.size() - 4) == ".obj";
  return load_mesh(path, obj ? MeshFormat::Obj : MeshFormat::PlyAscii);
}

inline void save_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format,
                      const VertexColors& colors = {},
                      const std::vector<std::string>& comments = {}) {
  if (!colors.empty() && colors.size() != mesh.vertices.size())
    throw ValidationError("vertex colors length " + std::to_string(colors.size()) +
                          " != vertex count " + std::to_string(mesh.vertices.size()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  if (format == MeshFormat::Obj) {
    if (!colors.empty()) throw ValidationError("obj output does not carry vertex colors");
    for (const auto& c : comments) out << "# " << c << "\n";
    for (const auto& v : mesh.vertices)
      out << "v " << detail::format_double(v.x) << ' ' << detail::format_double(v.y) << ' '
          << detail::format_double(v.z) << "\n";
    for (const auto& f : mesh.faces)
      out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << "\n";
  } else {
    const bool binary = format == MeshFormat::PlyBinary;
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    for (const auto& c : comments) out << "comment " << c << "\n";
    out << "element vertex " << mesh.n_vertices() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (!colors.empty())
      out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.n_faces() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    for (int v = 0; v < mesh.n_vertices(); ++v) {
      const Vec3& p = mesh.vertices[v];
      if (binary) {
        detail::write_le(out, p.x);
        detail::write_le(out, p.y);
        detail::write_le(out, p.z);
        if (!colors.empty())
          for (int k = 0; k < 3; ++k) detail::write_le(out, colors[v][k]);
      } else {
        out << detail::format_double(p.x) << ' ' << detail::format_double(p.y) << ' '
            << detail::format_double(p.z);
        if (!colors.empty())
          for (int k = 0; k < 3; ++k) out << ' ' << static_cast<int>(colors[v][k]);
        out << "\n";
      }
    }
    for (const auto& f : mesh.faces) {
      if (binary) {
        detail::write_le<std::uint8_t>(out, 3);
        for (int k = 0; k < 3; ++k) detail::write_le<std::int32_t>(out, f[k]);
      } else {
        out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << "\n";
      }
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tfm
