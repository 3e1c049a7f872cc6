#pragma once

#include <span>
#include <vector>

#include "dentatlas/volgrid.hpp"

namespace dentatlas::detail {

// Windows whose per-voxel variance falls below this floor are ignored.
inline constexpr double kCcVarianceFloor = 1e-6;

struct CcKernelResult {
  double sum = 0.0;        // sum of CC over valid voxels
  std::size_t valid = 0;
  std::vector<double> d_a;  // d(sum)/d a(y), empty unless requested
  std::vector<double> d_b;  // d(sum)/d b(y)
};

CcKernelResult cc_kernel(std::span<const double> a, std::span<const double> b, const Index3& dims, int radius,
                         bool grad_a, bool grad_b);

// Central-difference gradient in physical units; one-sided at the border.
void central_gradient(std::span<const double> img, const GridGeometry& g, std::vector<Vec3>& out);

}  // namespace dentatlas::detail
