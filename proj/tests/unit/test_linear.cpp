#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dentatlas/register.hpp"
#include "support.hpp"

using namespace dentatlas;
using testing_support::cube_geometry;

namespace {

RegistrationSchedule quick_schedule() {
  RegistrationSchedule s;
  s.shrink_factors = {4, 2, 1};
  s.smoothing_sigmas_voxels = {2, 1, 0};
  s.max_iterations = {60, 40, 20};
  return s;
}

ChannelPair pair_of(const VolumeGrid& v) {
  VolumeGrid guidance(v.geometry());
  for (std::size_t n = 0; n < v.size(); ++n) guidance[n] = v[n] > 0.3f ? 1.0f : 0.0f;
  return ChannelPair{v, guidance, 0.5, 0.5};
}

double rotation_error_degrees(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return Eigen::AngleAxisd(a * b.transpose()).angle() * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("self registration recovers the identity") {
  const auto g = cube_geometry(40, 1.0);
  const auto fixed = pair_of(testing_support::blob_volume(g, 5));
  const auto r = register_linear(fixed, fixed, LinearMode::kRigid, quick_schedule());
  CHECK(r.transform.translation.norm() < 0.05);
  CHECK(rotation_error_degrees(r.transform.linear, Eigen::Matrix3d::Identity()) < 0.1);
}

TEST_CASE("known rigid motion is recovered") {
  const auto g = cube_geometry(40, 1.0);
  const Vec3 c0(19.5, 19.5, 19.5);
  AffineTransform truth;
  truth.linear = Eigen::AngleAxisd(5.0 * std::numbers::pi / 180.0, Vec3::UnitZ()).toRotationMatrix();
  truth.translation = Vec3(2.4, -1.2, 0.8);
  truth.center = c0;
  const AffineTransform inv = truth.inverse();
  const auto fixed = pair_of(testing_support::blob_volume(g, 5));
  const auto moving = pair_of(testing_support::blob_volume(g, 5, 6, [&](const Vec3& p) -> Vec3 { return inv.apply(p); }));
  const auto r = register_linear(fixed, moving, LinearMode::kRigid, quick_schedule());
  const auto rec = r.transform.recentered(c0);
  CHECK((rec.translation - truth.translation).norm() < 0.2);
  CHECK(rotation_error_degrees(rec.linear, truth.linear) < 0.5);
  CHECK(std::abs(r.rigid.rotation.norm() - 1.0) < 1e-9);
  for (const auto& level : r.trace) {
    for (std::size_t i = 1; i < level.metric.size(); ++i) CHECK(level.metric[i] >= level.metric[i - 1]);
  }
}

TEST_CASE("affine mode recovers an anisotropic scaling") {
  const auto g = cube_geometry(40, 1.0);
  const Vec3 c0(19.5, 19.5, 19.5);
  AffineTransform truth;
  truth.linear = Vec3(1.06, 0.96, 1.0).asDiagonal();
  truth.center = c0;
  const AffineTransform inv = truth.inverse();
  const auto fixed = pair_of(testing_support::blob_volume(g, 12));
  const auto moving = pair_of(testing_support::blob_volume(g, 12, 6, [&](const Vec3& p) -> Vec3 { return inv.apply(p); }));
  const auto r = register_linear(fixed, moving, LinearMode::kAffine, quick_schedule());
  const auto rec = r.transform.recentered(c0);
  CHECK((rec.linear - truth.linear).cwiseAbs().maxCoeff() < 0.02);
  CHECK(rec.translation.norm() < 0.2);
  CHECK(rec.linear.determinant() > 0.0);
}

TEST_CASE("linear registration is invariant to affine intensity rescaling and deterministic") {
  const auto g = cube_geometry(32, 1.0);
  AffineTransform shift;
  shift.translation = Vec3(1.0, -0.5, 0.25);
  const auto fixed = pair_of(testing_support::blob_volume(g, 7));
  const auto moving = pair_of(testing_support::blob_volume(g, 7, 6, [&](const Vec3& p) -> Vec3 { return p - shift.translation; }));
  auto scaled = moving;
  for (std::size_t n = 0; n < scaled.intensity.size(); ++n) scaled.intensity[n] = 2.0f * moving.intensity[n];
  const auto a = register_linear(fixed, moving, LinearMode::kRigid, quick_schedule());
  const auto b = register_linear(fixed, scaled, LinearMode::kRigid, quick_schedule());
  const auto c = register_linear(fixed, moving, LinearMode::kRigid, quick_schedule());
  CHECK((a.transform.linear - b.transform.linear).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.transform.translation - b.transform.translation).norm() < 1e-6);
  CHECK(a.transform.linear == c.transform.linear);
  CHECK(a.transform.translation == c.transform.translation);
}

TEST_CASE("degenerate channels fail at initialisation") {
  const auto g = cube_geometry(16);
  const ChannelPair flat{VolumeGrid(g, 1.0f), VolumeGrid(g, 0.0f), 0.5, 0.5};
  const auto other = pair_of(testing_support::blob_volume(g, 1));
  CHECK_THROWS_AS(register_linear(other, flat, LinearMode::kRigid, quick_schedule()), Error);
}

TEST_CASE("schedule validation") {
  RegistrationSchedule s;
  CHECK_NOTHROW(s.validate());
  s.max_iterations.pop_back();
  CHECK_THROWS_AS(s.validate(), Error);
  s = RegistrationSchedule{};
  s.shrink_factors = {2, 4, 1, 1};
  CHECK_THROWS_AS(s.validate(), Error);
}
