#pragma once

// Interpolation kernels shared by the resampling, warping and field code.

#include <cmath>

#include "dentatlas/volgrid.hpp"

namespace dentatlas::detail {

// Continuous indices within this distance of the lattice hull count as inside.
inline constexpr double kHullTolerance = 1e-6;

struct AxisWeights {
  int i0 = 0;
  int i1 = 0;
  double f = 0.0;
};

inline bool axis_weights(double c, int n, AxisWeights& w) {
  if (!(c >= -kHullTolerance) || c > (n - 1) + kHullTolerance) return false;
  if (n == 1) {
    w = {0, 0, 0.0};
    return true;
  }
  if (c < 0.0) c = 0.0;
  if (c > n - 1) c = n - 1;
  int i0 = static_cast<int>(std::floor(c));
  if (i0 > n - 2) i0 = n - 2;
  w.i0 = i0;
  w.i1 = i0 + 1;
  w.f = c - i0;
  return true;
}

// Border-replicating variant: always succeeds.
inline void axis_weights_clamped(double c, int n, AxisWeights& w) {
  if (!(c >= 0.0)) c = 0.0;
  if (c > n - 1) c = n - 1;
  axis_weights(c, n, w);
}

template <typename T>
inline double interpolate(const T* data, const Index3& dims, const AxisWeights& wx, const AxisWeights& wy,
                          const AxisWeights& wz) {
  const std::size_t nx = static_cast<std::size_t>(dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims[1]);
  const std::size_t z0 = static_cast<std::size_t>(wz.i0) * nxy;
  const std::size_t z1 = static_cast<std::size_t>(wz.i1) * nxy;
  const std::size_t y0 = static_cast<std::size_t>(wy.i0) * nx;
  const std::size_t y1 = static_cast<std::size_t>(wy.i1) * nx;
  const std::size_t x0 = static_cast<std::size_t>(wx.i0);
  const std::size_t x1 = static_cast<std::size_t>(wx.i1);
  const double c00 = (1.0 - wx.f) * data[z0 + y0 + x0] + wx.f * data[z0 + y0 + x1];
  const double c10 = (1.0 - wx.f) * data[z0 + y1 + x0] + wx.f * data[z0 + y1 + x1];
  const double c01 = (1.0 - wx.f) * data[z1 + y0 + x0] + wx.f * data[z1 + y0 + x1];
  const double c11 = (1.0 - wx.f) * data[z1 + y1 + x0] + wx.f * data[z1 + y1 + x1];
  const double c0 = (1.0 - wy.f) * c00 + wy.f * c10;
  const double c1 = (1.0 - wy.f) * c01 + wy.f * c11;
  return (1.0 - wz.f) * c0 + wz.f * c1;
}

// Zero outside the lattice hull. `c` is a continuous index.
template <typename T>
inline double sample_index_zero(const T* data, const Index3& dims, const Vec3& c) {
  AxisWeights wx, wy, wz;
  if (!axis_weights(c.x(), dims[0], wx) || !axis_weights(c.y(), dims[1], wy) || !axis_weights(c.z(), dims[2], wz)) {
    return 0.0;
  }
  return interpolate(data, dims, wx, wy, wz);
}

// Clamped (border replicate) sampling of a scalar array.
template <typename T>
inline double sample_index_clamped(const T* data, const Index3& dims, const Vec3& c) {
  AxisWeights wx, wy, wz;
  axis_weights_clamped(c.x(), dims[0], wx);
  axis_weights_clamped(c.y(), dims[1], wy);
  axis_weights_clamped(c.z(), dims[2], wz);
  return interpolate(data, dims, wx, wy, wz);
}

// Nearest lattice index along one axis, or -1 when outside.
inline int nearest_index(double c, int n) {
  const long r = std::lround(c);
  if (r < 0 || r >= n) return -1;
  return static_cast<int>(r);
}

}  // namespace dentatlas::detail
