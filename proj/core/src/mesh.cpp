#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "dentatlas/shape.hpp"

namespace dentatlas {

namespace {

#include "marching_cubes_tables.inc"

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

// Marching cubes over a lattice padded by one layer of "outside" samples, so
// the surface closes even when the foreground touches the border.
template <typename Value>
SurfaceMesh march(const GridGeometry& g, Value value, double iso) {
  SurfaceMesh mesh;
  const int nx = g.dims[0] + 2, ny = g.dims[1] + 2, nz = g.dims[2] + 2;
  // padded lattice point (i, j, k) corresponds to voxel (i - 1, j - 1, k - 1)
  const auto padded = [&](int i, int j, int k) -> double {
    --i, --j, --k;
    if (!g.contains_index(i, j, k)) return -std::numeric_limits<double>::infinity();
    return value(i, j, k);
  };
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  const auto point_id = [&](int i, int j, int k) -> std::uint64_t {
    return static_cast<std::uint64_t>(i) +
           static_cast<std::uint64_t>(nx) * (static_cast<std::uint64_t>(j) + static_cast<std::uint64_t>(ny) * k);
  };
  std::vector<double> slab0(static_cast<std::size_t>(nx) * ny), slab1(slab0.size());
  const auto fill = [&](std::vector<double>& s, int k) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) s[static_cast<std::size_t>(j) * nx + i] = padded(i, j, k);
  };
  fill(slab1, 0);
  for (int k = 0; k + 1 < nz; ++k) {
    std::swap(slab0, slab1);
    fill(slab1, k + 1);
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        double v[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& s = kCorner[c][2] ? slab1 : slab0;
          v[c] = s[static_cast<std::size_t>(j + kCorner[c][1]) * nx + i + kCorner[c][0]];
          if (v[c] <= iso) cube |= 1 << c;
        }
        if (kEdgeTable[cube] == 0) continue;
        std::uint32_t ev[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube] & (1 << e))) continue;
          const int c0 = kEdgeCorners[e][0], c1 = kEdgeCorners[e][1];
          const std::uint64_t p0 = point_id(i + kCorner[c0][0], j + kCorner[c0][1], k + kCorner[c0][2]);
          const std::uint64_t p1 = point_id(i + kCorner[c1][0], j + kCorner[c1][1], k + kCorner[c1][2]);
          const int axis = kCorner[c0][0] != kCorner[c1][0] ? 0 : kCorner[c0][1] != kCorner[c1][1] ? 1 : 2;
          const std::uint64_t key = std::min(p0, p1) * 3 + static_cast<std::uint64_t>(axis);
          auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
          if (inserted) {
            // Crossings against the padding layer sit halfway out.
            const double t = std::isfinite(v[c0]) && std::isfinite(v[c1]) ? (iso - v[c0]) / (v[c1] - v[c0]) : 0.5;
            const Vec3 a(i - 1 + kCorner[c0][0], j - 1 + kCorner[c0][1], k - 1 + kCorner[c0][2]);
            const Vec3 b(i - 1 + kCorner[c1][0], j - 1 + kCorner[c1][1], k - 1 + kCorner[c1][2]);
            const Vec3 idx = a + t * (b - a);
            mesh.vertices.push_back(g.origin + idx.cwiseProduct(g.spacing));
          }
          ev[e] = it->second;
        }
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          mesh.triangles.push_back({ev[kTriTable[cube][t]], ev[kTriTable[cube][t + 1]], ev[kTriTable[cube][t + 2]]});
        }
      }
    }
  }
  return mesh;
}

double triangle_area(const SurfaceMesh& m, const Triangle& t) {
  return 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).norm();
}

}  // namespace

void SurfaceMesh::validate() const {
  for (const auto& t : triangles) {
    for (auto v : t) {
      if (v >= vertices.size()) throw Error(ErrorKind::kInvalidArgument, "triangle index out of range");
    }
  }
  if (!vertex_labels.empty() && vertex_labels.size() != vertices.size()) {
    throw Error(ErrorKind::kInvalidArgument, "vertex label count does not match vertex count");
  }
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw Error(ErrorKind::kInvalidArgument, "mesh vertex is not finite");
  }
}

SurfaceMesh extract_surface(const LabelGrid& labels, std::optional<std::uint16_t> label) {
  const auto& g = labels.geometry();
  SurfaceMesh mesh = march(g,
                           [&](int i, int j, int k) -> double {
                             const auto l = labels(i, j, k);
                             return (label ? l == *label : l != 0) ? 1.0 : 0.0;
                           },
                           0.5);
  if (label && !mesh.vertices.empty()) mesh.vertex_labels.assign(mesh.vertices.size(), *label);
  return clean_mesh(mesh);
}

SurfaceMesh extract_surface(const VolumeGrid& v, double iso) {
  return clean_mesh(march(v.geometry(), [&](int i, int j, int k) -> double { return v(i, j, k); }, iso));
}

SurfaceMesh clean_mesh(const SurfaceMesh& mesh) {
  mesh.validate();
  std::set<std::array<std::uint32_t, 3>> seen;
  std::vector<Triangle> kept;
  kept.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (triangle_area(mesh, t) < 1e-12) continue;
    std::array<std::uint32_t, 3> key = t;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    kept.push_back(t);
  }
  std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
  SurfaceMesh out;
  for (auto& t : kept) {
    for (auto& v : t) {
      if (remap[v] < 0) {
        remap[v] = static_cast<std::int64_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        if (!mesh.vertex_labels.empty()) out.vertex_labels.push_back(mesh.vertex_labels[v]);
      }
      v = static_cast<std::uint32_t>(remap[v]);
    }
  }
  out.triangles = std::move(kept);
  return out;
}

double mesh_area(const SurfaceMesh& mesh) {
  double a = 0.0;
  for (const auto& t : mesh.triangles) a += triangle_area(mesh, t);
  return a;
}

long euler_characteristic(const SurfaceMesh& mesh) {
  std::set<std::uint64_t> edges;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) edges.insert(edge_key(t[e], t[(e + 1) % 3]));
  }
  return static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
         static_cast<long>(mesh.triangles.size());
}

bool is_closed_oriented(const SurfaceMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  }
  for (const auto& [e, count] : directed) {
    if (count != 1) return false;
    const auto rev = directed.find({e.second, e.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

Vec3 mesh_centroid(const SurfaceMesh& mesh) {
  if (mesh.vertices.empty()) throw Error(ErrorKind::kInvalidArgument, "centroid of an empty mesh");
  Vec3 c = Vec3::Zero();
  for (const auto& v : mesh.vertices) c += v;
  return c / static_cast<double>(mesh.vertices.size());
}

SurfaceMesh transform_mesh(const SurfaceMesh& mesh, const RigidTransform& t) {
  SurfaceMesh out = mesh;
  for (auto& v : out.vertices) v = t.apply(v);
  return out;
}

void write_ply(const std::filesystem::path& path, const SurfaceMesh& mesh) {
  mesh.validate();
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const bool labels = !mesh.vertex_labels.empty();
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (labels) out << "property ushort label\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  char buf[96];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", static_cast<double>(static_cast<float>(v.x())),
                  static_cast<double>(static_cast<float>(v.y())), static_cast<double>(static_cast<float>(v.z())));
    out << buf;
    if (labels) out << ' ' << mesh.vertex_labels[i];
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

SurfaceMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error(ErrorKind::kIo, path.string() + " is not a PLY file");
  std::size_t n_vertices = 0, n_faces = 0;
  std::vector<std::string> vertex_props;
  std::string current;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw Error(ErrorKind::kIo, "only ASCII PLY is supported");
    } else if (word == "element") {
      std::size_t count = 0;
      ls >> current >> count;
      if (current == "vertex") n_vertices = count;
      if (current == "face") n_faces = count;
    } else if (word == "property" && current == "vertex") {
      std::string type, name;
      ls >> type >> name;
      vertex_props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  const auto col = [&](const std::string& name) -> int {
    const auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
    return it == vertex_props.end() ? -1 : static_cast<int>(it - vertex_props.begin());
  };
  const int cx = col("x"), cy = col("y"), cz = col("z"), cl = col("label");
  if (cx < 0 || cy < 0 || cz < 0) throw Error(ErrorKind::kIo, "PLY vertices lack x/y/z");
  SurfaceMesh mesh;
  mesh.vertices.resize(n_vertices);
  if (cl >= 0) mesh.vertex_labels.resize(n_vertices);
  std::vector<double> row(vertex_props.size());
  for (std::size_t i = 0; i < n_vertices; ++i) {
    for (auto& r : row) {
      if (!(in >> r)) throw Error(ErrorKind::kIo, "truncated PLY vertex list");
    }
    mesh.vertices[i] = Vec3(row[cx], row[cy], row[cz]);
    if (cl >= 0) mesh.vertex_labels[i] = static_cast<std::uint16_t>(row[cl]);
  }
  mesh.triangles.resize(n_faces);
  for (std::size_t f = 0; f < n_faces; ++f) {
    int count = 0;
    if (!(in >> count) || count != 3) throw Error(ErrorKind::kIo, "PLY faces must be triangles");
    for (auto& v : mesh.triangles[f]) {
      if (!(in >> v)) throw Error(ErrorKind::kIo, "truncated PLY face list");
    }
  }
  try {
    mesh.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
  return mesh;
}

SurfaceMesh mesh_from_shape(const Eigen::VectorXd& shape, const std::vector<Triangle>& topology) {
  if (shape.size() % 3 != 0) throw Error(ErrorKind::kInvalidArgument, "shape vector length must be a multiple of 3");
  SurfaceMesh m;
  m.vertices.resize(static_cast<std::size_t>(shape.size() / 3));
  for (std::size_t i = 0; i < m.vertices.size(); ++i) m.vertices[i] = shape.segment<3>(3 * static_cast<Eigen::Index>(i));
  m.triangles = topology;
  m.validate();
  return m;
}

Eigen::VectorXd shape_from_mesh(const SurfaceMesh& mesh) {
  Eigen::VectorXd s(3 * static_cast<Eigen::Index>(mesh.vertices.size()));
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) s.segment<3>(3 * static_cast<Eigen::Index>(i)) = mesh.vertices[i];
  return s;
}

}  // namespace dentatlas
