#pragma once

#include <span>
#include <vector>

#include "dentatlas/volgrid.hpp"

namespace dentatlas {

/// Separable Gaussian smoothing with sigma in voxels. The kernel is truncated at
/// 3 sigma and renormalised over in-bounds taps, so constants are preserved.
/// sigma <= 0 returns a copy.
VolumeGrid gaussian_smooth(const VolumeGrid& v, double sigma_voxels);

/// Same smoothing applied in place to a strided scalar array (used for field
/// components, stride 3).
void gaussian_smooth_inplace(std::span<double> values, const Index3& dims, double sigma_voxels, int stride = 1,
                             int component = 0);

/// Lattice used for one pyramid level: the physical extent of `g` covered by
/// roughly 1/shrink as many samples per axis. shrink == 1 returns `g`.
GridGeometry shrink_geometry(const GridGeometry& g, int shrink);

/// Sums over the (2r+1)^3 window truncated at the grid boundary.
void box_sum(std::span<const double> in, const Index3& dims, int radius, std::span<double> out);

}  // namespace dentatlas
