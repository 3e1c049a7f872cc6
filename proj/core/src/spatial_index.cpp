#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dentatlas/shape.hpp"

namespace dentatlas {

namespace {

constexpr std::uint32_t kLeafSize = 8;

}  // namespace

PointIndex::PointIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error(ErrorKind::kInvalidArgument, "point index needs at least one point");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t PointIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= kLeafSize) return id;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void PointIndex::search(std::int32_t node, const Vec3& q, std::size_t& best, double& best_d2) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const double d2 = (points_[order_[i]] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && order_[i] < best)) {
        best_d2 = d2;
        best = order_[i];
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t near = diff < 0.0 ? n.left : n.right;
  const std::int32_t far = diff < 0.0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

std::size_t PointIndex::nearest(const Vec3& q) const {
  std::size_t best = points_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, q, best, best_d2);
  return best;
}

// ---------------------------------------------------------------------------

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

SurfaceLocator::SurfaceLocator(const SurfaceMesh& mesh) : vertices_(mesh.vertices), triangles_(mesh.triangles) {
  mesh.validate();
  if (triangles_.empty()) throw Error(ErrorKind::kInvalidArgument, "surface locator needs a non-empty mesh");
  lo_ = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo_;
  for (const auto& t : triangles_) {
    for (auto v : t) {
      lo_ = lo_.cwiseMin(vertices_[v]);
      hi = hi.cwiseMax(vertices_[v]);
    }
  }
  const Vec3 extent = (hi - lo_).cwiseMax(Vec3::Constant(1e-9));
  const double volume = extent.prod();
  cell_ = std::cbrt(volume / static_cast<double>(triangles_.size())) * 1.5;
  cell_ = std::max(cell_, extent.maxCoeff() / 128.0);
  for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / cell_)));
  cells_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
  const auto cell_of = [&](double x, int a) {
    return std::clamp(static_cast<int>(std::floor((x - lo_[a]) / cell_)), 0, dims_[a] - 1);
  };
  for (std::uint32_t t = 0; t < triangles_.size(); ++t) {
    Vec3 tlo = vertices_[triangles_[t][0]], thi = tlo;
    for (int v = 1; v < 3; ++v) {
      tlo = tlo.cwiseMin(vertices_[triangles_[t][v]]);
      thi = thi.cwiseMax(vertices_[triangles_[t][v]]);
    }
    for (int k = cell_of(tlo.z(), 2); k <= cell_of(thi.z(), 2); ++k)
      for (int j = cell_of(tlo.y(), 1); j <= cell_of(thi.y(), 1); ++j)
        for (int i = cell_of(tlo.x(), 0); i <= cell_of(thi.x(), 0); ++i)
          cells_[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims_[0]) * (j + static_cast<std::size_t>(dims_[1]) * k)]
              .push_back(t);
  }
}

SurfacePoint SurfaceLocator::closest(const Vec3& q) const {
  Index3 c;
  for (int a = 0; a < 3; ++a) {
    c[a] = std::clamp(static_cast<int>(std::floor((q[a] - lo_[a]) / cell_)), 0, dims_[a] - 1);
  }
  SurfacePoint best{Vec3::Zero(), Vec3::Zero(), triangles_.size(), std::numeric_limits<double>::infinity()};
  const auto visit = [&](int i, int j, int k) {
    for (const auto t : cells_[static_cast<std::size_t>(i) +
                               static_cast<std::size_t>(dims_[0]) * (j + static_cast<std::size_t>(dims_[1]) * k)]) {
      const auto& tri = triangles_[t];
      const Vec3 p = closest_point_on_triangle(q, vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
      const double d = (p - q).norm();
      if (d < best.distance || (d == best.distance && t < best.triangle)) {
        best.point = p;
        best.distance = d;
        best.triangle = t;
      }
    }
  };
  for (int r = 0;; ++r) {
    const int lo[3] = {c[0] - r, c[1] - r, c[2] - r};
    const int hi[3] = {c[0] + r, c[1] + r, c[2] + r};
    for (int k = std::max(lo[2], 0); k <= std::min(hi[2], dims_[2] - 1); ++k)
      for (int j = std::max(lo[1], 0); j <= std::min(hi[1], dims_[1] - 1); ++j)
        for (int i = std::max(lo[0], 0); i <= std::min(hi[0], dims_[0] - 1); ++i) {
          const bool shell = i == lo[0] || i == hi[0] || j == lo[1] || j == hi[1] || k == lo[2] || k == hi[2];
          if (shell) visit(i, j, k);
        }
    // Distance from q to any cell not yet visited.
    double bound = std::numeric_limits<double>::infinity();
    bool covered = true;
    for (int a = 0; a < 3; ++a) {
      if (lo[a] > 0) {
        covered = false;
        bound = std::min(bound, std::max(0.0, q[a] - (lo_[a] + lo[a] * cell_)));
      }
      if (hi[a] < dims_[a] - 1) {
        covered = false;
        bound = std::min(bound, std::max(0.0, lo_[a] + (hi[a] + 1) * cell_ - q[a]));
      }
    }
    if (covered || best.distance <= bound) break;
  }
  const auto& tri = triangles_[best.triangle];
  const Vec3 n = (vertices_[tri[1]] - vertices_[tri[0]]).cross(vertices_[tri[2]] - vertices_[tri[0]]);
  best.normal = n.normalized();
  return best;
}

double symmetric_surface_distance(const SurfaceMesh& a, const SurfaceMesh& b) {
  const SurfaceLocator la(a), lb(b);
  double sum = 0.0;
  for (const auto& v : a.vertices) sum += lb.closest(v).distance;
  for (const auto& v : b.vertices) sum += la.closest(v).distance;
  return sum / static_cast<double>(a.vertices.size() + b.vertices.size());
}

}  // namespace dentatlas
