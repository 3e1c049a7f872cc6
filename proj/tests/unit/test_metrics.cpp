#include <doctest.h>

#include <random>

#include "dentatlas/register.hpp"
#include "support.hpp"

using namespace dentatlas;
using testing_support::cube_geometry;

TEST_CASE("global correlation") {
  const auto g = cube_geometry(8);
  const auto a = testing_support::blob_volume(g, 2);
  CHECK(global_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  VolumeGrid neg(g);
  for (std::size_t n = 0; n < a.size(); ++n) neg[n] = 3.0f - a[n];
  CHECK(global_correlation(a, neg) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK_THROWS_AS(global_correlation(a, VolumeGrid(g, 1.0f)), Error);

  std::mt19937 rng(4);
  std::normal_distribution<float> d;
  VolumeGrid x(g), y(g);
  for (std::size_t n = 0; n < x.size(); ++n) {
    x[n] = d(rng);
    y[n] = 0.3f * x[n] + d(rng);
  }
  double mx = 0, my = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    mx += x[n];
    my += y[n];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    sxy += (x[n] - mx) * (y[n] - my);
    sxx += (x[n] - mx) * (x[n] - mx);
    syy += (y[n] - my) * (y[n] - my);
  }
  CHECK(global_correlation(x, y) == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-12));
}

TEST_CASE("local cc self-similarity and affine intensity invariance") {
  const auto g = cube_geometry(14);
  const auto a = testing_support::blob_volume(g, 6);
  const auto self = local_cc(a, a, 2);
  CHECK(self.valid_voxels > 0);
  CHECK(self.metric == doctest::Approx(1.0).epsilon(1e-9));
  double gmax = 0.0;
  for (const auto& v : self.gradient.vectors) gmax = std::max(gmax, v.norm());
  CHECK(gmax < 1e-6);

  VolumeGrid b(g);
  for (std::size_t n = 0; n < a.size(); ++n) b[n] = 2.0f * a[n] + 5.0f;
  CHECK(local_cc(a, b, 2).metric == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("local cc gradient matches a brute-force directional finite difference") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto g = cube_geometry(14, 0.8);
    const auto a = testing_support::wave_volume(g, 100 + seed);
    const auto b = testing_support::wave_volume(g, 200 + seed);
    const auto check = testing_support::cc_directional_check(a, b, 2, seed);
    CHECK(check.analytic == doctest::Approx(check.finite_difference).epsilon(1e-3));
  }
}
