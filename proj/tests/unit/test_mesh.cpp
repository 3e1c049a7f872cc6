#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "dentatlas/shape.hpp"
#include "support.hpp"

using namespace dentatlas;
using testing_support::cube_geometry;

namespace {

double signed_volume(const SurfaceMesh& m) {
  double v = 0.0;
  for (const auto& t : m.triangles) v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]])) / 6.0;
  return v;
}

LabelGrid ball_labels(int n, double r) {
  LabelGrid l(cube_geometry(n));
  const double c = 0.5 * (n - 1);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        if ((Vec3(i, j, k) - Vec3::Constant(c)).norm() <= r) l(i, j, k) = 11;
      }
  return l;
}

}  // namespace

TEST_CASE("empty volume gives an empty mesh") {
  const LabelGrid l(cube_geometry(6));
  CHECK(extract_surface(l).empty());
  CHECK(extract_surface(VolumeGrid(cube_geometry(6))).empty());
}

TEST_CASE("single voxel surface is a closed sphere-like polyhedron") {
  LabelGrid l(cube_geometry(5, 0.5));
  l(2, 2, 2) = 21;
  const auto m = extract_surface(l);
  CHECK(euler_characteristic(m) == 2);
  CHECK(is_closed_oriented(m));
  CHECK(signed_volume(m) > 0.0);
  // Octahedron with vertices on the six face-adjacent edge midpoints.
  CHECK(m.vertices.size() == 6);
  CHECK(m.triangles.size() == 8);
  CHECK(extract_surface(l, std::uint16_t{21}).vertex_labels.size() == 6);
  CHECK(extract_surface(l, std::uint16_t{22}).empty());
}

TEST_CASE("foreground touching the border is still closed") {
  LabelGrid l(cube_geometry(4));
  for (std::size_t n = 0; n < l.size(); ++n) l[n] = 1;
  const auto m = extract_surface(l);
  CHECK(euler_characteristic(m) == 2);
  CHECK(is_closed_oriented(m));
}

TEST_CASE("ball surface area approaches the sphere") {
  for (double r : {5.0, 8.0}) {
    const auto m = extract_surface(ball_labels(24, r));
    const double area = mesh_area(m);
    const double expected = 4.0 * std::numbers::pi * r * r;
    CHECK(std::abs(area - expected) / expected < 0.15);
    CHECK(euler_characteristic(m) == 2);
    CHECK(is_closed_oriented(m));
    CHECK(signed_volume(m) > 0.0);
  }
}

TEST_CASE("scalar isosurface of a smooth field") {
  const auto g = cube_geometry(20, 0.5);
  VolumeGrid v(g);
  const Vec3 c(4.75, 4.75, 4.75);
  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 20; ++j)
      for (int i = 0; i < 20; ++i) v(i, j, k) = static_cast<float>((g.physical_point(i, j, k) - c).norm());
  // inside is v > iso, so take the complement distance
  VolumeGrid inside(g);
  for (std::size_t n = 0; n < v.size(); ++n) inside[n] = 3.0f - v[n];
  const auto m = extract_surface(inside, 0.0);
  for (const auto& p : m.vertices) CHECK(std::abs((p - c).norm() - 3.0) < 0.05);
  CHECK(std::abs(mesh_area(m) - 4.0 * std::numbers::pi * 9.0) / (4.0 * std::numbers::pi * 9.0) < 0.05);
}

TEST_CASE("clean_mesh drops degenerate and duplicate triangles") {
  SurfaceMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(2, 0, 0), Vec3(5, 5, 5)};
  m.triangles = {{0, 1, 2}, {1, 2, 0}, {0, 1, 3}, {0, 0, 2}};
  const auto c = clean_mesh(m);
  CHECK(c.triangles.size() == 1);
  CHECK(c.vertices.size() == 3);
  m.triangles.push_back({0, 1, 9});
  CHECK_THROWS_AS(clean_mesh(m), Error);
}

TEST_CASE("PLY round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "dentatlas_ply_test";
  std::filesystem::create_directories(dir);
  auto m = extract_surface(ball_labels(10, 3.0));
  m.vertex_labels.assign(m.vertices.size(), 36);
  write_ply(dir / "ball.ply", m);
  const auto r = read_ply(dir / "ball.ply");
  CHECK(r.triangles == m.triangles);
  CHECK(r.vertex_labels == m.vertex_labels);
  REQUIRE(r.vertices.size() == m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK((r.vertices[i] - m.vertices[i]).norm() < 1e-5);
  CHECK_THROWS_AS(read_ply(dir / "missing.ply"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("point index agrees with brute force") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<Vec3> pts(500);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  const PointIndex index(pts);
  for (int q = 0; q < 200; ++q) {
    const Vec3 x(u(rng), u(rng), u(rng));
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if ((pts[i] - x).squaredNorm() < (pts[best] - x).squaredNorm()) best = i;
    }
    CHECK(index.nearest(x) == best);
  }
}

TEST_CASE("surface locator agrees with brute force") {
  const auto m = extract_surface(ball_labels(16, 5.0));
  const SurfaceLocator loc(m);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-4.0, 20.0);
  for (int q = 0; q < 100; ++q) {
    const Vec3 x(u(rng), u(rng), u(rng));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : m.triangles) {
      const Vec3 p = closest_point_on_triangle(x, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
      best = std::min(best, (p - x).norm());
    }
    CHECK(loc.closest(x).distance == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("closest point on a triangle") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK((closest_point_on_triangle(Vec3(0.2, 0.2, 3.0), a, b, c) - Vec3(0.2, 0.2, 0.0)).norm() < 1e-15);
  CHECK((closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c) - a).norm() < 1e-15);
  CHECK((closest_point_on_triangle(Vec3(2, 0.5, 0), a, b, c) - b).norm() < 1e-15);
  CHECK((closest_point_on_triangle(Vec3(1, 1, 0), a, b, c) - Vec3(0.5, 0.5, 0)).norm() < 1e-15);
}
