#pragma once

#include <vector>

#include "dentatlas/filters.hpp"
#include "sampling.hpp"

namespace dentatlas::detail {

// Smooths at full resolution (sigma in voxels of the input) and samples the
// result on the level lattice. Works in double throughout.
inline std::vector<double> pyramid_image(const VolumeGrid& img, double sigma_voxels, const GridGeometry& level) {
  std::vector<double> work(img.data().begin(), img.data().end());
  const auto& g = img.geometry();
  if (sigma_voxels > 0.0) gaussian_smooth_inplace(work, g.dims, sigma_voxels);
  if (level == g) return work;
  std::vector<double> out(level.voxel_count());
  std::size_t n = 0;
  for (int k = 0; k < level.dims[2]; ++k)
    for (int j = 0; j < level.dims[1]; ++j)
      for (int i = 0; i < level.dims[0]; ++i, ++n) {
        out[n] = sample_index_clamped(work.data(), g.dims, g.continuous_index(level.physical_point(i, j, k)));
      }
  return out;
}

}  // namespace dentatlas::detail
