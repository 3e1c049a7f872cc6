#pragma once

#include <vector>

#include "dentatlas/register.hpp"
#include "sampling.hpp"

namespace dentatlas::detail {

static_assert(sizeof(Vec3) == 3 * sizeof(double), "fields are reinterpreted as packed doubles");

// Continuous index of lattice point (i, j, k) displaced by u millimetres.
inline Vec3 displaced_index(const GridGeometry& g, int i, int j, int k, const Vec3& u) {
  return Vec3(i + u.x() / g.spacing.x(), j + u.y() / g.spacing.y(), k + u.z() / g.spacing.z());
}

inline Vec3 sample_vector_clamped(const std::vector<Vec3>& data, const GridGeometry& g, const Vec3& c) {
  AxisWeights wx, wy, wz;
  axis_weights_clamped(c.x(), g.dims[0], wx);
  axis_weights_clamped(c.y(), g.dims[1], wy);
  axis_weights_clamped(c.z(), g.dims[2], wz);
  const auto at = [&](int i, int j, int k) -> const Vec3& { return data[g.linear_index(i, j, k)]; };
  const Vec3 c00 = (1.0 - wx.f) * at(wx.i0, wy.i0, wz.i0) + wx.f * at(wx.i1, wy.i0, wz.i0);
  const Vec3 c10 = (1.0 - wx.f) * at(wx.i0, wy.i1, wz.i0) + wx.f * at(wx.i1, wy.i1, wz.i0);
  const Vec3 c01 = (1.0 - wx.f) * at(wx.i0, wy.i0, wz.i1) + wx.f * at(wx.i1, wy.i0, wz.i1);
  const Vec3 c11 = (1.0 - wx.f) * at(wx.i0, wy.i1, wz.i1) + wx.f * at(wx.i1, wy.i1, wz.i1);
  const Vec3 c0 = (1.0 - wy.f) * c00 + wy.f * c10;
  const Vec3 c1 = (1.0 - wy.f) * c01 + wy.f * c11;
  return (1.0 - wz.f) * c0 + wz.f * c1;
}

// Resamples `v` through an affine map onto `target` (outside reads 0), walking
// the target lattice incrementally in continuous-index space.
template <typename T>
void warp_affine_raw(const T* src, const GridGeometry& sg, const AffineTransform& t, const GridGeometry& target,
                     std::vector<double>& out) {
  out.resize(target.voxel_count());
  // continuous source index = M * target_index + offset
  const Eigen::Matrix3d s_inv = sg.spacing.cwiseInverse().asDiagonal();
  const Eigen::Matrix3d m = s_inv * t.linear * target.spacing.asDiagonal();
  const Vec3 offset = s_inv * (t.apply(target.origin) - sg.origin);
  const Vec3 step_x = m.col(0);
  std::size_t n = 0;
  for (int k = 0; k < target.dims[2]; ++k)
    for (int j = 0; j < target.dims[1]; ++j) {
      const Vec3 row = offset + m.col(1) * j + m.col(2) * k;
      for (int i = 0; i < target.dims[0]; ++i, ++n) {
        out[n] = sample_index_zero(src, sg.dims, Vec3(row + step_x * i));
      }
    }
}

inline void warp_affine(const VolumeGrid& v, const AffineTransform& t, const GridGeometry& target,
                        std::vector<double>& out) {
  warp_affine_raw(v.data().data(), v.geometry(), t, target, out);
}

// det(I + grad u) at one voxel.
inline double jacobian_at(const DisplacementField& u, int i, int j, int k) {
  const auto& g = u.geometry;
  Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
  const int idx[3] = {i, j, k};
  for (int a = 0; a < 3; ++a) {
    const int n = g.dims[a];
    if (n < 2) continue;
    int lo = idx[a] - 1, hi = idx[a] + 1;
    if (lo < 0) lo = 0;
    if (hi > n - 1) hi = n - 1;
    int plo[3] = {i, j, k}, phi[3] = {i, j, k};
    plo[a] = lo;
    phi[a] = hi;
    const Vec3 d = (u.at(phi[0], phi[1], phi[2]) - u.at(plo[0], plo[1], plo[2])) / ((hi - lo) * g.spacing[a]);
    jac.col(a) += d;
  }
  return jac.determinant();
}

}  // namespace dentatlas::detail
