#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dentatlas/register.hpp"
#include "dentatlas/volgrid.hpp"
#include "oracles.hpp"

namespace testing_support {

using dentatlas::GridGeometry;
using dentatlas::Vec3;
using dentatlas::VolumeGrid;

inline GridGeometry cube_geometry(int n, double spacing = 1.0, Vec3 origin = Vec3::Zero()) {
  GridGeometry g;
  g.dims = {n, n, n};
  g.spacing = Vec3::Constant(spacing);
  g.origin = origin;
  return g;
}

// Sum of anisotropic Gaussian blobs; smooth and structured enough for registration.
// `pull` maps each lattice point before evaluation, so the result is blob(pull(x)).
inline VolumeGrid blob_volume(const GridGeometry& g, std::uint64_t seed, int blobs = 6,
                              const std::function<Vec3(const Vec3&)>& pull = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Blob {
    Vec3 c, w;
    double a;
  };
  std::vector<Blob> list;
  const Vec3 extent((g.dims[0] - 1) * g.spacing.x(), (g.dims[1] - 1) * g.spacing.y(), (g.dims[2] - 1) * g.spacing.z());
  for (int b = 0; b < blobs; ++b) {
    Blob bl;
    for (int a = 0; a < 3; ++a) {
      bl.c[a] = g.origin[a] + extent[a] * (0.25 + 0.5 * unit(rng));
      bl.w[a] = extent[a] * (0.06 + 0.08 * unit(rng));
    }
    bl.a = 0.4 + 0.6 * unit(rng);
    list.push_back(bl);
  }
  VolumeGrid v(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 p = pull ? pull(g.physical_point(i, j, k)) : g.physical_point(i, j, k);
        double s = 0.0;
        for (const auto& bl : list) s += bl.a * std::exp(-0.5 * ((p - bl.c).array() / bl.w.array()).square().sum());
        v(i, j, k) = static_cast<float>(s);
      }
  return v;
}

using dentatlas::oracle::brute_local_cc;
using dentatlas::oracle::cc_directional_check;
using dentatlas::oracle::CcGradientCheck;
using dentatlas::oracle::sample_double;
using dentatlas::oracle::wave_volume;

}  // namespace testing_support
