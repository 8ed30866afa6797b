#include "forge/cloud_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace forge {
namespace {

int scalar_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
      type == "float" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  throw Error("load_ply: unsupported property type " + type);
}

double read_scalar(std::istream& in, const std::string& type) {
  char buf[8];
  in.read(buf, scalar_size(type));
  if (type == "float" || type == "float32") {
    float v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (type == "double" || type == "float64") {
    double v;
    std::memcpy(&v, buf, 8);
    return v;
  }
  if (type == "int" || type == "int32") {
    int32_t v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  // remaining integer widths are skip-only
  return 0;
}

}  // namespace

void save_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_ply: cannot open " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "end_header\n";
  char line[96];
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n",
                  static_cast<float>(p.x()), static_cast<float>(p.y()),
                  static_cast<float>(p.z()));
    out << line;
  }
  if (!out) throw Error("save_ply: write failed for " + path.string());
}

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_ply: cannot open " + path.string());

  std::string line, format;
  size_t n_vertices = 0;
  struct Prop {
    std::string type;
    std::string name;
  };
  std::vector<Prop> vertex_props;
  bool in_vertex_element = false;

  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw Error("load_ply: not a PLY file");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment") continue;
    if (tok == "format") {
      ls >> format;
    } else if (tok == "element") {
      std::string name;
      size_t count;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) n_vertices = count;
    } else if (tok == "property" && in_vertex_element) {
      Prop p;
      ls >> p.type;
      if (p.type == "list") throw Error("load_ply: list property on vertex");
      ls >> p.name;
      vertex_props.push_back(p);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (format != "ascii" && format != "binary_little_endian")
    throw Error("load_ply: unsupported format " + format);

  int ix = -1, iy = -1, iz = -1;
  for (int i = 0; i < static_cast<int>(vertex_props.size()); ++i) {
    if (vertex_props[i].name == "x") ix = i;
    if (vertex_props[i].name == "y") iy = i;
    if (vertex_props[i].name == "z") iz = i;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw Error("load_ply: missing x/y/z");

  PointCloud cloud;
  cloud.design_id = path.stem().string();
  cloud.points.reserve(n_vertices);
  if (format == "ascii") {
    for (size_t v = 0; v < n_vertices; ++v) {
      std::vector<double> vals(vertex_props.size());
      for (auto& x : vals)
        if (!(in >> x)) throw Error("load_ply: truncated vertex data");
      cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    }
  } else {
    for (size_t v = 0; v < n_vertices; ++v) {
      double x = 0, y = 0, z = 0;
      for (int i = 0; i < static_cast<int>(vertex_props.size()); ++i) {
        const double val = read_scalar(in, vertex_props[i].type);
        if (i == ix) x = val;
        if (i == iy) y = val;
        if (i == iz) z = val;
      }
      if (!in) throw Error("load_ply: truncated vertex data");
      cloud.points.emplace_back(x, y, z);
    }
  }
  if (cloud.empty()) throw Error("load_ply: empty cloud");
  for (const auto& p : cloud.points)
    if (!p.allFinite()) throw Error("load_ply: non-finite coordinate");
  return cloud;
}

void save_csv(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_csv: cannot open " + path.string());
  out << "x,y,z\n";
  char line[120];
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", p.x(), p.y(), p.z());
    out << line;
  }
}

PointCloud load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("load_csv: empty file");
  PointCloud cloud;
  cloud.design_id = path.stem().string();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Vec3 p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.x(), &p.y(), &p.z()) != 3)
      throw Error("load_csv: bad row: " + line);
    cloud.points.push_back(p);
  }
  if (cloud.empty()) throw Error("load_csv: empty cloud");
  return cloud;
}

PointCloud load_cloud(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") return load_ply(path);
  if (ext == ".csv") return load_csv(path);
  throw Error("load_cloud: unknown extension " + ext);
}

}  // namespace forge
