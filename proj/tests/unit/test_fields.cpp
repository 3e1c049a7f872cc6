#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dentatlas/register.hpp"
#include "support.hpp"

using namespace dentatlas;
using testing_support::cube_geometry;

namespace {

DisplacementField analytic_field(const GridGeometry& g, double amplitude_voxels, double wavelength_voxels) {
  DisplacementField u(g);
  const double k = 2.0 * std::numbers::pi / (wavelength_voxels * g.spacing.x());
  const double a = amplitude_voxels * g.spacing.x();
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const Vec3 p = g.physical_point(x, y, z);
        u.at(x, y, z) = a * Vec3(std::sin(k * p.y()), std::cos(k * p.z()), std::sin(k * p.x() + 0.3));
      }
  return u;
}

}  // namespace

TEST_CASE("warp by zero and constant fields") {
  const auto g = cube_geometry(10, 0.5);
  const auto v = testing_support::blob_volume(g, 1);
  CHECK(warp_volume(v, DisplacementField::zero(g)) == v);
  const auto shifted = warp_volume(v, DisplacementField::constant(g, Vec3(0.5, 0.0, 0.0)));
  for (int k = 0; k < 10; ++k)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 9; ++i) CHECK(shifted(i, j, k) == doctest::Approx(v(i + 1, j, k)).epsilon(1e-6));
  CHECK_THROWS_AS(warp_volume(v, DisplacementField::zero(cube_geometry(9))), Error);
}

TEST_CASE("compose_fields") {
  const auto g = cube_geometry(12, 0.7);
  const auto phi = analytic_field(g, 0.5, 8.0);
  const auto zero = DisplacementField::zero(g);
  CHECK(compose_fields(zero, phi).vectors == phi.vectors);
  CHECK(compose_fields(phi, zero).vectors == phi.vectors);

  const auto c = compose_fields(DisplacementField::constant(g, Vec3(0.1, 0.2, -0.3)),
                                DisplacementField::constant(g, Vec3(0.5, -0.1, 0.05)));
  for (const auto& v : c.vectors) CHECK((v - Vec3(0.6, 0.1, -0.25)).norm() < 1e-12);

  // Linear fields are reproduced exactly by trilinear sampling, so the direct
  // formula is an exact oracle wherever the sample stays inside the lattice.
  DisplacementField lin1(g), lin2(g);
  for (int z = 0; z < 12; ++z)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        const Vec3 p = g.physical_point(x, y, z);
        lin1.at(x, y, z) = 0.02 * Vec3(p.y(), -p.x(), p.z());
        lin2.at(x, y, z) = Vec3(0.03 * p.z(), 0.01 * p.x(), -0.02 * p.y());
      }
  const auto comp = compose_fields(lin1, lin2);
  for (int z = 2; z < 10; ++z)
    for (int y = 2; y < 10; ++y)
      for (int x = 2; x < 10; ++x) {
        const Vec3 p = g.physical_point(x, y, z);
        const Vec3 u2(0.03 * p.z(), 0.01 * p.x(), -0.02 * p.y());
        const Vec3 q = p + u2;
        const Vec3 expected = u2 + 0.02 * Vec3(q.y(), -q.x(), q.z());
        CHECK((comp.at(x, y, z) - expected).norm() < 1e-6);
      }
}

TEST_CASE("invert_field") {
  const auto g = cube_geometry(24, 0.5);
  const auto zero = invert_field(DisplacementField::zero(g));
  for (const auto& v : zero.vectors) CHECK(v.norm() == 0.0);

  const auto inv_c = invert_field(DisplacementField::constant(g, Vec3(0.3, -0.2, 0.1)));
  for (const auto& v : inv_c.vectors) CHECK((v + Vec3(0.3, -0.2, 0.1)).norm() < 1e-12);

  const auto phi = analytic_field(g, 1.0, 16.0);
  const auto inv = invert_field(phi);
  CHECK(composition_residual_voxels(phi, inv) < 0.05);
  CHECK(composition_residual_voxels(inv, phi) < 0.5);

  // A folding field cannot be inverted.
  const auto fold = analytic_field(g, 6.0, 6.0);
  CHECK_THROWS_AS(invert_field(fold), InversionError);
}

TEST_CASE("jacobian determinant") {
  const auto g = cube_geometry(8, 0.6);
  const auto one = jacobian_determinant(DisplacementField::zero(g));
  for (float v : one.data()) CHECK(v == 1.0f);
  DisplacementField lin(g);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) lin.at(x, y, z) = 0.1 * g.physical_point(x, y, z);
  const auto det = jacobian_determinant(lin);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) CHECK(det(x, y, z) == doctest::Approx(1.331).epsilon(1e-6));
  CHECK(min_interior_jacobian(lin) == doctest::Approx(1.331));
}

TEST_CASE("exponentiation of a small field approximates the field itself") {
  const auto g = cube_geometry(16);
  auto v = analytic_field(g, 0.05, 16.0);
  const auto e = exponentiate_field(v);
  for (std::size_t n = 0; n < v.vectors.size(); ++n) CHECK((e.vectors[n] - v.vectors[n]).norm() < 5e-3);
  const auto c = exponentiate_field(DisplacementField::constant(g, Vec3(1.5, 0.0, 0.0)));
  for (const auto& x : c.vectors) CHECK((x - Vec3(1.5, 0.0, 0.0)).norm() < 1e-9);
}

TEST_CASE("affine algebra") {
  AffineTransform a;
  a.linear = Eigen::AngleAxisd(0.3, Vec3(0.2, 1.0, -0.4).normalized()).toRotationMatrix() * 1.05;
  a.translation = Vec3(1.0, 2.0, -0.5);
  a.center = Vec3(4.0, 4.0, 4.0);
  const Vec3 p(1.0, -3.0, 2.5);
  CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
  CHECK((a.recentered(Vec3(-1.0, 0.0, 9.0)).apply(p) - a.apply(p)).norm() < 1e-12);
  AffineTransform b;
  b.linear = Eigen::Matrix3d::Identity() * 0.9;
  b.translation = Vec3(0.2, 0.0, 0.1);
  b.center = Vec3(1.0, 2.0, 3.0);
  CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);

  RigidTransform r;
  r.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Vec3::UnitZ()));
  r.translation = Vec3(0.5, 0.0, -1.0);
  r.center = Vec3(2.0, 2.0, 2.0);
  CHECK((r.inverse().apply(r.apply(p)) - p).norm() < 1e-12);
}
