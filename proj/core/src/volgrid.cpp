#include "dentatlas/volgrid.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "sampling.hpp"

namespace dentatlas {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kEmptyForeground: return "empty-foreground";
    case ErrorKind::kMissingLabel: return "missing-label";
    case ErrorKind::kInversionFailure: return "inversion-failure";
    case ErrorKind::kRegistrationFailure: return "registration-failure";
    case ErrorKind::kAveragingFailure: return "averaging-failure";
    case ErrorKind::kAlignmentFailure: return "alignment-failure";
    case ErrorKind::kNumericalFailure: return "numerical-failure";
    case ErrorKind::kGenerationFailure: return "generation-failure";
    case ErrorKind::kNotReachable: return "not-reachable";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

void validate_geometry(const GridGeometry& geometry) {
  for (int a = 0; a < 3; ++a) {
    if (geometry.dims[a] < 1) throw Error(ErrorKind::kInvalidArgument, "grid dims must be >= 1");
    if (!(geometry.spacing[a] > 0.0) || !std::isfinite(geometry.spacing[a])) {
      throw Error(ErrorKind::kInvalidArgument, "grid spacing must be positive and finite");
    }
    if (!std::isfinite(geometry.origin[a])) throw Error(ErrorKind::kInvalidArgument, "grid origin must be finite");
  }
}

// ---------------------------------------------------------------------------

const std::array<std::uint16_t, 28>& fdi_labels_arch_order() {
  static const std::array<std::uint16_t, 28> kOrder = {
      17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27,
      47, 46, 45, 44, 43, 42, 41, 31, 32, 33, 34, 35, 36, 37};
  return kOrder;
}

const std::array<std::uint16_t, 28>& fdi_labels_sorted() {
  static const std::array<std::uint16_t, 28> kSorted = [] {
    auto s = fdi_labels_arch_order();
    std::sort(s.begin(), s.end());
    return s;
  }();
  return kSorted;
}

bool is_fdi_label(std::uint16_t label) {
  const int quadrant = label / 10;
  const int position = label % 10;
  return quadrant >= 1 && quadrant <= 4 && position >= 1 && position <= 7;
}

std::vector<std::pair<std::uint16_t, std::uint16_t>> adjacent_tooth_pairs() {
  const auto& order = fdi_labels_arch_order();
  std::vector<std::pair<std::uint16_t, std::uint16_t>> pairs;
  for (int arch = 0; arch < 2; ++arch) {
    for (int p = 0; p + 1 < 14; ++p) pairs.emplace_back(order[arch * 14 + p], order[arch * 14 + p + 1]);
  }
  return pairs;
}

ReassignmentTable default_reassignment_table() {
  ReassignmentTable table;
  const auto& order = fdi_labels_arch_order();
  for (int n = 0; n < 28; ++n) {
    const int position = n % 14;
    table[order[n]] = (position % 2 == 0) ? 1.0f : 0.5f;
  }
  return table;
}

EnhancementConfig EnhancementConfig::defaults() {
  EnhancementConfig c;
  c.reassignment_table = default_reassignment_table();
  return c;
}

void validate_reassignment_table(const ReassignmentTable& table) {
  for (const auto& [label, value] : table) {
    if (label == 0 && value != 0.0f) throw Error(ErrorKind::kInvalidArgument, "background must map to 0");
    if (!(value >= 0.0f && value <= 1.0f)) {
      throw Error(ErrorKind::kInvalidArgument, "reassigned intensity for label " + std::to_string(label) +
                                                   " is outside [0,1]");
    }
  }
  for (const auto& [a, b] : adjacent_tooth_pairs()) {
    const auto ia = table.find(a);
    const auto ib = table.find(b);
    if (ia == table.end() || ib == table.end()) continue;
    if (std::abs(static_cast<double>(ia->second) - ib->second) < 0.4 - 1e-6) {
      throw Error(ErrorKind::kInvalidArgument, "teeth " + std::to_string(a) + " and " + std::to_string(b) +
                                                   " have reassigned contrast below 0.4");
    }
  }
}

// ---------------------------------------------------------------------------

double sample_trilinear(const VolumeGrid& v, const Vec3& physical) {
  return detail::sample_index_zero(v.data().data(), v.dims(), v.geometry().continuous_index(physical));
}

GridGeometry resampled_geometry(const GridGeometry& g, const Vec3& target_spacing) {
  for (int a = 0; a < 3; ++a) {
    if (!(target_spacing[a] > 0.0) || !std::isfinite(target_spacing[a])) {
      throw Error(ErrorKind::kInvalidArgument, "target spacing must be positive");
    }
  }
  GridGeometry out;
  out.spacing = target_spacing;
  out.origin = g.origin;
  for (int a = 0; a < 3; ++a) {
    const double extent = g.dims[a] * g.spacing[a] / target_spacing[a];
    out.dims[a] = std::max(1, static_cast<int>(std::ceil(extent - 1e-9)));
  }
  return out;
}

VolumeGrid resample_to_geometry(const VolumeGrid& v, const GridGeometry& target) {
  validate_geometry(target);
  VolumeGrid out(target);
  const float* src = v.data().data();
  const auto& sg = v.geometry();
  for (int k = 0; k < target.dims[2]; ++k) {
    for (int j = 0; j < target.dims[1]; ++j) {
      for (int i = 0; i < target.dims[0]; ++i) {
        const Vec3 c = sg.continuous_index(target.physical_point(i, j, k));
        out(i, j, k) = static_cast<float>(detail::sample_index_zero(src, sg.dims, c));
      }
    }
  }
  return out;
}

LabelGrid resample_to_geometry(const LabelGrid& l, const GridGeometry& target) {
  validate_geometry(target);
  LabelGrid out(target);
  const auto& sg = l.geometry();
  for (int k = 0; k < target.dims[2]; ++k) {
    for (int j = 0; j < target.dims[1]; ++j) {
      for (int i = 0; i < target.dims[0]; ++i) {
        const Vec3 c = sg.continuous_index(target.physical_point(i, j, k));
        const int si = detail::nearest_index(c.x(), sg.dims[0]);
        const int sj = detail::nearest_index(c.y(), sg.dims[1]);
        const int sk = detail::nearest_index(c.z(), sg.dims[2]);
        out(i, j, k) = (si < 0 || sj < 0 || sk < 0) ? 0 : l(si, sj, sk);
      }
    }
  }
  return out;
}

VolumeGrid resample_trilinear(const VolumeGrid& v, const Vec3& target_spacing) {
  return resample_to_geometry(v, resampled_geometry(v.geometry(), target_spacing));
}

LabelGrid resample_nearest(const LabelGrid& l, const Vec3& target_spacing) {
  return resample_to_geometry(l, resampled_geometry(l.geometry(), target_spacing));
}

VolumeGrid normalize_intensity(const VolumeGrid& v) {
  const auto values = v.data();
  if (values.empty()) throw Error(ErrorKind::kDegenerateInput, "empty volume");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw Error(ErrorKind::kDegenerateInput, "cannot normalize a constant volume");
  std::vector<float> out(values.size());
  const double range = hi - lo;
  for (std::size_t n = 0; n < values.size(); ++n) out[n] = static_cast<float>((values[n] - lo) / range);
  return VolumeGrid(v.geometry(), std::move(out));
}

// ---------------------------------------------------------------------------

VoxelBox bounding_box_of_labels(const LabelGrid& l) {
  const auto& d = l.dims();
  VoxelBox box{{d[0], d[1], d[2]}, {-1, -1, -1}};
  bool any = false;
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        if (l(i, j, k) == 0) continue;
        any = true;
        box.min = {std::min(box.min[0], i), std::min(box.min[1], j), std::min(box.min[2], k)};
        box.max = {std::max(box.max[0], i), std::max(box.max[1], j), std::max(box.max[2], k)};
      }
    }
  }
  if (!any) throw Error(ErrorKind::kEmptyForeground, "label grid has no foreground");
  return box;
}

VoxelBox expand_box(const VoxelBox& box, int margin, const Index3& dims) {
  VoxelBox out;
  for (int a = 0; a < 3; ++a) {
    out.min[a] = std::max(0, box.min[a] - margin);
    out.max[a] = std::min(dims[a] - 1, box.max[a] + margin);
  }
  return out;
}

namespace {

int integer_sqrt(int n) {
  int w = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while ((w + 1) * (w + 1) <= n) ++w;
  while (w * w > n) --w;
  return w;
}

}  // namespace

LabelGrid dilate_labels(const LabelGrid& l, int radius) {
  if (radius < 0) throw Error(ErrorKind::kInvalidArgument, "dilation radius must be non-negative");
  const auto& g = l.geometry();
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  std::vector<std::uint8_t> out(g.voxel_count(), 0);

  // The ball factors into x-runs: for every (dy, dz) in the disk the x half-width
  // is the largest w with w^2 + dy^2 + dz^2 <= r^2.
  struct DiskOffset {
    int dy, dz, w;
  };
  std::vector<DiskOffset> disk;
  const int r2 = radius * radius;
  for (int dz = -radius; dz <= radius; ++dz) {
    for (int dy = -radius; dy <= radius; ++dy) {
      const int rem = r2 - dy * dy - dz * dz;
      if (rem >= 0) disk.push_back({dy, dz, integer_sqrt(rem)});
    }
  }

  std::vector<int> prefix(static_cast<std::size_t>(nx) + 1);
  std::vector<std::uint8_t> row_dilated(static_cast<std::size_t>(radius + 1) * nx);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      const std::uint16_t* row = &l.data()[g.linear_index(0, j, k)];
      int first = -1, last = -1;
      prefix[0] = 0;
      for (int i = 0; i < nx; ++i) {
        const int fg = row[i] != 0 ? 1 : 0;
        prefix[i + 1] = prefix[i] + fg;
        if (fg) {
          if (first < 0) first = i;
          last = i;
        }
      }
      if (first < 0) continue;
      for (int w = 0; w <= radius; ++w) {
        const int lo = std::max(0, first - w);
        const int hi = std::min(nx - 1, last + w);
        std::uint8_t* dst = &row_dilated[static_cast<std::size_t>(w) * nx];
        for (int i = lo; i <= hi; ++i) {
          dst[i] = (prefix[std::min(nx, i + w + 1)] - prefix[std::max(0, i - w)]) > 0 ? 1 : 0;
        }
      }
      for (const auto& o : disk) {
        const int jo = j + o.dy;
        const int ko = k + o.dz;
        if (jo < 0 || jo >= ny || ko < 0 || ko >= nz) continue;
        std::uint8_t* dst = &out[g.linear_index(0, jo, ko)];
        const std::uint8_t* src = &row_dilated[static_cast<std::size_t>(o.w) * nx];
        const int lo = std::max(0, first - o.w);
        const int hi = std::min(nx - 1, last + o.w);
        for (int i = lo; i <= hi; ++i) dst[i] |= src[i];
      }
    }
  }
  return LabelGrid(g, std::vector<std::uint16_t>(out.begin(), out.end()));
}

VolumeGrid mask_by_labels(const VolumeGrid& v, const LabelGrid& mask) {
  if (!(v.geometry() == mask.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "mask geometry does not match the volume");
  }
  std::vector<float> out(v.size());
  for (std::size_t n = 0; n < v.size(); ++n) out[n] = mask[n] != 0 ? v[n] : 0.0f;
  return VolumeGrid(v.geometry(), std::move(out));
}

VolumeGrid reassign_label_intensities(const LabelGrid& l, const ReassignmentTable& table) {
  std::vector<float> out(l.size(), 0.0f);
  // Labels are small integers; a dense lookup avoids a map query per voxel.
  std::vector<float> lut(std::numeric_limits<std::uint16_t>::max() + 1, -1.0f);
  lut[0] = 0.0f;
  for (const auto& [label, value] : table) {
    if (label != 0) lut[label] = value;
  }
  for (std::size_t n = 0; n < l.size(); ++n) {
    const std::uint16_t label = l[n];
    const float value = lut[label];
    if (value < 0.0f) throw MissingLabelError(label);
    out[n] = value;
  }
  return VolumeGrid(l.geometry(), std::move(out));
}

EnhancedImage enhance(const VolumeGrid& intensity, const LabelGrid& labels, const EnhancementConfig& config) {
  if (!(intensity.geometry() == labels.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "intensity and label grids must share geometry");
  }
  if (config.margin_voxels < 0 || config.dilation_radius_voxels < 0) {
    throw Error(ErrorKind::kInvalidArgument, "margin and dilation radius must be non-negative");
  }
  const VoxelBox box = bounding_box_of_labels(labels);
  EnhancedImage out;
  out.crop_region = expand_box(box, config.margin_voxels, labels.dims());
  out.labels = crop_with_margin(labels, box, config.margin_voxels);
  const VolumeGrid cropped = crop_with_margin(intensity, box, config.margin_voxels);
  out.intensity = mask_by_labels(cropped, dilate_labels(out.labels, config.dilation_radius_voxels));
  out.guidance = reassign_label_intensities(out.labels, config.reassignment_table);
  return out;
}

// ---------------------------------------------------------------------------

double dice_from_counts(const OverlapCounts& c) {
  if (c.a + c.b == 0) throw Error(ErrorKind::kDegenerateInput, "Dice is undefined for two empty sets");
  return static_cast<double>(2 * c.both) / static_cast<double>(c.a + c.b);
}

double dice_coefficient(const LabelGrid& a, const LabelGrid& b) {
  if (!(a.geometry() == b.geometry())) throw Error(ErrorKind::kInvalidArgument, "Dice needs same-geometry grids");
  OverlapCounts c;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const bool in_a = a[n] != 0;
    const bool in_b = b[n] != 0;
    c.a += in_a;
    c.b += in_b;
    c.both += in_a && in_b;
  }
  return dice_from_counts(c);
}

double dice_coefficient(const LabelGrid& a, std::uint16_t label_a, const LabelGrid& b, std::uint16_t label_b) {
  if (!(a.geometry() == b.geometry())) throw Error(ErrorKind::kInvalidArgument, "Dice needs same-geometry grids");
  OverlapCounts c;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const bool in_a = a[n] == label_a;
    const bool in_b = b[n] == label_b;
    c.a += in_a;
    c.b += in_b;
    c.both += in_a && in_b;
  }
  return dice_from_counts(c);
}

}  // namespace dentatlas
