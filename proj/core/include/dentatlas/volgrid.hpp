#pragma once

// Volumetric grids, geometry-aware resampling and the segmentation-guided
// enhancement operators (crop, dilate, mask, reassign).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dentatlas/error.hpp"

namespace dentatlas {

using Index3 = std::array<int, 3>;
using Vec3 = Eigen::Vector3d;

/// Voxel lattice with physical placement. Voxel (i,j,k) sits at
/// origin + (i,j,k) * spacing (mm); storage is x-fastest.
struct GridGeometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t linear_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  Vec3 physical_point(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
  Vec3 continuous_index(const Vec3& p) const {
    return ((p - origin).array() / spacing.array()).matrix();
  }
  bool contains_index(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }

  friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
    return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin;
  }
};

/// Throws kInvalidArgument unless dims >= 1 and spacing > 0 (finite).
void validate_geometry(const GridGeometry& geometry);

template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(const GridGeometry& geometry, T fill = T{})
      : geometry_(geometry) {
    validate_geometry(geometry_);
    data_.assign(geometry_.voxel_count(), fill);
  }
  Grid(const GridGeometry& geometry, std::vector<T> data)
      : geometry_(geometry), data_(std::move(data)) {
    validate_geometry(geometry_);
    if (data_.size() != geometry_.voxel_count()) {
      throw Error(ErrorKind::kInvalidArgument, "grid data length does not match dims");
    }
    if constexpr (std::is_floating_point_v<T>) {
      for (const T v : data_) {
        if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "grid contains non-finite values");
      }
    }
  }

  const GridGeometry& geometry() const { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int i, int j, int k) { return data_[geometry_.linear_index(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data_[geometry_.linear_index(i, j, k)]; }
  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.geometry_ == b.geometry_ && a.data_ == b.data_;
  }

 private:
  GridGeometry geometry_;
  std::vector<T> data_;
};

using VolumeGrid = Grid<float>;
using LabelGrid = Grid<std::uint16_t>;

/// Inclusive voxel index box.
struct VoxelBox {
  Index3 min{0, 0, 0};
  Index3 max{0, 0, 0};

  friend bool operator==(const VoxelBox&, const VoxelBox&) = default;
};

// ---------------------------------------------------------------------------
// FDI tooth numbering (third molars excluded).

/// The 28 labels in arch order: upper 17..11, 21..27 then lower 47..41, 31..37.
const std::array<std::uint16_t, 28>& fdi_labels_arch_order();
/// Same 28 labels in ascending numeric order (11..17, 21..27, 31..37, 41..47).
const std::array<std::uint16_t, 28>& fdi_labels_sorted();
bool is_fdi_label(std::uint16_t label);
/// The 26 anatomically adjacent same-arch pairs.
std::vector<std::pair<std::uint16_t, std::uint16_t>> adjacent_tooth_pairs();

using ReassignmentTable = std::map<std::uint16_t, float>;

struct EnhancementConfig {
  int margin_voxels = 30;
  int dilation_radius_voxels = 15;
  ReassignmentTable reassignment_table;

  /// Config with the alternating 1.0 / 0.5 arch table.
  static EnhancementConfig defaults();
};

/// Alternates 1.0 and 0.5 along each arch so neighbours differ by 0.5.
ReassignmentTable default_reassignment_table();

/// Throws kInvalidArgument when two arch-adjacent teeth differ by less than 0.4
/// or a value lies outside [0,1].
void validate_reassignment_table(const ReassignmentTable& table);

// ---------------------------------------------------------------------------
// Sampling and resampling.

/// Trilinear sample at a physical point; points outside the voxel-centre hull read 0.
double sample_trilinear(const VolumeGrid& v, const Vec3& physical);

VolumeGrid resample_trilinear(const VolumeGrid& v, const Vec3& target_spacing);
/// Nearest-neighbour resampling onto the same lattice rule as resample_trilinear.
LabelGrid resample_nearest(const LabelGrid& l, const Vec3& target_spacing);
/// Trilinear resampling onto an arbitrary lattice (outside reads 0).
VolumeGrid resample_to_geometry(const VolumeGrid& v, const GridGeometry& target);
LabelGrid resample_to_geometry(const LabelGrid& l, const GridGeometry& target);
/// Lattice produced by resampling `g` to `target_spacing`.
GridGeometry resampled_geometry(const GridGeometry& g, const Vec3& target_spacing);

VolumeGrid normalize_intensity(const VolumeGrid& v);

// ---------------------------------------------------------------------------
// Enhancement.

VoxelBox bounding_box_of_labels(const LabelGrid& l);

/// Box grown by `margin` on every side and clamped to the grid.
VoxelBox expand_box(const VoxelBox& box, int margin, const Index3& dims);

template <typename T>
Grid<T> crop_with_margin(const Grid<T>& grid, const VoxelBox& box, int margin) {
  const auto& g = grid.geometry();
  for (int a = 0; a < 3; ++a) {
    if (box.min[a] < 0 || box.max[a] >= g.dims[a] || box.min[a] > box.max[a]) {
      throw Error(ErrorKind::kInvalidArgument, "crop box lies outside the grid");
    }
  }
  if (margin < 0) throw Error(ErrorKind::kInvalidArgument, "crop margin must be non-negative");
  const VoxelBox region = expand_box(box, margin, g.dims);
  GridGeometry out_geom;
  for (int a = 0; a < 3; ++a) out_geom.dims[a] = region.max[a] - region.min[a] + 1;
  out_geom.spacing = g.spacing;
  out_geom.origin = g.physical_point(region.min[0], region.min[1], region.min[2]);
  Grid<T> out(out_geom);
  for (int k = 0; k < out_geom.dims[2]; ++k) {
    for (int j = 0; j < out_geom.dims[1]; ++j) {
      for (int i = 0; i < out_geom.dims[0]; ++i) {
        out(i, j, k) = grid(i + region.min[0], j + region.min[1], k + region.min[2]);
      }
    }
  }
  return out;
}

/// Binary (0/1) dilation of the nonzero set by the Euclidean ball of the given
/// radius: offset o belongs to the ball iff |o|^2 <= radius^2.
LabelGrid dilate_labels(const LabelGrid& l, int radius);

/// Keeps values where mask != 0; geometries must match exactly.
VolumeGrid mask_by_labels(const VolumeGrid& v, const LabelGrid& mask);

VolumeGrid reassign_label_intensities(const LabelGrid& l, const ReassignmentTable& table);

/// Output of the crop -> dilate -> mask -> reassign chain.
struct EnhancedImage {
  VolumeGrid intensity;  ///< cropped and masked
  VolumeGrid guidance;   ///< reassigned segmentation
  LabelGrid labels;      ///< cropped labels
  VoxelBox crop_region;  ///< region of the input grid that was kept
};

EnhancedImage enhance(const VolumeGrid& intensity, const LabelGrid& labels, const EnhancementConfig& config);

// ---------------------------------------------------------------------------
// Overlap.

struct OverlapCounts {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t both = 0;
};

/// Dice from integer counts; throws kDegenerateInput when both sets are empty.
double dice_from_counts(const OverlapCounts& c);

/// Dice of the nonzero sets of two same-geometry grids.
double dice_coefficient(const LabelGrid& a, const LabelGrid& b);
/// Dice of {a == label_a} and {b == label_b}.
double dice_coefficient(const LabelGrid& a, std::uint16_t label_a, const LabelGrid& b, std::uint16_t label_b);

}  // namespace dentatlas
