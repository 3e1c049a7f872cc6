#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance suite.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "dentatlas/register.hpp"

namespace dentatlas::oracle {

// Sum of random plane waves with wavelengths of 6 to 14 voxels.
inline VolumeGrid wave_volume(const GridGeometry& g, std::uint64_t seed, int waves = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  std::vector<std::pair<Vec3, double>> k;
  std::vector<double> amp;
  for (int m = 0; m < waves; ++m) {
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    const double wavelength = (6.0 + 8.0 * unit(rng)) * g.spacing.mean();
    k.push_back({dir * (2.0 * std::numbers::pi / wavelength), 2.0 * std::numbers::pi * unit(rng)});
    amp.push_back(0.5 + unit(rng));
  }
  VolumeGrid v(g);
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const Vec3 p = g.physical_point(x, y, z);
        double s = 0.0;
        for (int m = 0; m < waves; ++m) s += amp[m] * std::sin(k[m].first.dot(p) + k[m].second);
        v(x, y, z) = static_cast<float>(s);
      }
  return v;
}

// Brute-force windowed CC: mean over voxels whose truncated (2r+1)^3 window
// has both variances above 1e-6 per voxel. Two-pass statistics per window.
inline double brute_local_cc(const std::vector<double>& a, const std::vector<double>& b, const Index3& d,
                             int r) {
  double sum = 0.0;
  std::size_t valid = 0;
  auto idx = [&](int i, int j, int k) { return static_cast<std::size_t>(i + d[0] * (j + d[1] * k)); };
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        std::vector<std::size_t> w;
        for (int z = std::max(0, k - r); z <= std::min(d[2] - 1, k + r); ++z)
          for (int y = std::max(0, j - r); y <= std::min(d[1] - 1, j + r); ++y)
            for (int x = std::max(0, i - r); x <= std::min(d[0] - 1, i + r); ++x) w.push_back(idx(x, y, z));
        double ma = 0.0, mb = 0.0;
        for (auto n : w) {
          ma += a[n];
          mb += b[n];
        }
        ma /= static_cast<double>(w.size());
        mb /= static_cast<double>(w.size());
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (auto n : w) {
          sab += (a[n] - ma) * (b[n] - mb);
          saa += (a[n] - ma) * (a[n] - ma);
          sbb += (b[n] - mb) * (b[n] - mb);
        }
        const double floor = 1e-6 * static_cast<double>(w.size());
        if (!(saa > floor) || !(sbb > floor)) continue;
        sum += sab * sab / (saa * sbb);
        ++valid;
      }
  return valid ? sum / static_cast<double>(valid) : 0.0;
}

// Trilinear sample of a double array at continuous index c (caller keeps c inside).
inline double sample_double(const std::vector<double>& v, const Index3& d, const Vec3& c) {
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::min(static_cast<int>(std::floor(c[a])), d[a] - 2);
    f[a] = c[a] - i0[a];
  }
  double s = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    int q[3];
    for (int a = 0; a < 3; ++a) {
      const int bit = (corner >> a) & 1;
      q[a] = i0[a] + bit;
      w *= bit ? f[a] : 1.0 - f[a];
    }
    s += w * v[static_cast<std::size_t>(q[0] + d[0] * (q[1] + d[1] * q[2]))];
  }
  return s;
}

struct CcGradientCheck {
  double analytic = 0.0;
  double finite_difference = 0.0;
};

// Directional derivative of the local CC along a smooth displacement of b's
// sampling positions that vanishes on the border, analytic versus central
// finite differences of the brute-force metric.
inline CcGradientCheck cc_directional_check(const VolumeGrid& a, const VolumeGrid& b, int radius,
                                           std::uint64_t seed) {
  const auto& g = a.geometry();
  const auto& d = g.dims;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vec3 freq[3], phase[3];
  for (int c = 0; c < 3; ++c) {
    freq[c] = Vec3(unit(rng), unit(rng), unit(rng)) * 0.4;
    phase[c] = Vec3(unit(rng), unit(rng), unit(rng)) * 3.0;
  }
  std::vector<Vec3> w(g.voxel_count());
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const double bump = std::sin(std::numbers::pi * i / (d[0] - 1)) * std::sin(std::numbers::pi * j / (d[1] - 1)) *
                            std::sin(std::numbers::pi * k / (d[2] - 1));
        Vec3 v;
        for (int c = 0; c < 3; ++c) {
          v[c] = bump * std::cos(freq[c].x() * i + phase[c].x()) * std::cos(freq[c].y() * j + phase[c].y()) *
                 std::cos(freq[c].z() * k + phase[c].z());
        }
        w[g.linear_index(i, j, k)] = v;
      }
  const auto res = local_cc(a, b, radius);
  CcGradientCheck out;
  for (std::size_t n = 0; n < w.size(); ++n) {
    out.analytic += res.gradient.vectors[n].dot((w[n].array() * g.spacing.array()).matrix());
  }
  const std::vector<double> da(a.data().begin(), a.data().end());
  const std::vector<double> db(b.data().begin(), b.data().end());
  const double eps = 1e-4;
  auto metric_at = [&](double e) {
    std::vector<double> moved(db.size());
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const std::size_t n = g.linear_index(i, j, k);
          moved[n] = sample_double(db, d, Vec3(i, j, k) + e * w[n]);
        }
    return brute_local_cc(da, moved, d, radius);
  };
  out.finite_difference = (metric_at(eps) - metric_at(-eps)) / (2.0 * eps);
  return out;
}

}  // namespace dentatlas::oracle
