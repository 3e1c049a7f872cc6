#pragma once

// Groupwise template construction (iterated register / average / shape
// update) and atlas-based tooth labelling.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dentatlas/register.hpp"
#include "dentatlas/volgrid.hpp"

namespace dentatlas {

struct TemplatePair {
  VolumeGrid intensity_template;
  VolumeGrid guidance_template;  ///< averaged reassigned-segmentation channel
  int generation = 0;

  void validate() const;
};

struct AtlasIterationRecord {
  int iteration = 0;
  double mean_metric = 0.0;      ///< mean final SyN metric over the cohort
  double mean_field_norm = 0.0;  ///< foreground mean |mean forward field|, voxels
};

struct AtlasRun {
  std::vector<ChannelPair> cohort;
  RegistrationSchedule schedule;
  int outer_iterations = 10;
  double shape_update_step = 0.25;
  /// Worker threads for the per-subject registrations; 0 uses every core.
  int threads = 0;

  void validate() const;
};

struct AtlasResult {
  TemplatePair templates;
  /// Final subject transforms: template point x maps to affines[i](x + fields[i].forward(x)).
  std::vector<AffineTransform> affines;
  std::vector<DiffeoPair> fields;
  std::vector<AtlasIterationRecord> trace;
};

/// Lattice covering the union of the cohort's physical extents at the
/// spacing of the first subject.
GridGeometry common_geometry(const std::vector<ChannelPair>& cohort);

/// Voxelwise mean of each channel on the common lattice.
TemplatePair initialize_templates(const std::vector<ChannelPair>& cohort);

/// Translation is the arithmetic mean; the linear parts are averaged through
/// their principal matrix logarithms. Every transform is first re-expressed
/// about the first transform's centre.
AffineTransform average_affine_transforms(const std::vector<AffineTransform>& ts);

DisplacementField average_displacement_fields(const std::vector<DisplacementField>& fs);

/// Both channels become t(mean_affine^-1(x - step * mean_field(x))), which
/// moves the template content toward the cohort's mean shape.
TemplatePair apply_shape_update(const TemplatePair& t, const AffineTransform& mean_affine,
                                const DisplacementField& mean_field, double step);

/// Voxels where the guidance template exceeds a quarter of its maximum.
LabelGrid template_foreground(const TemplatePair& t);

/// Foreground mean of |u| in voxels.
double foreground_mean_norm_voxels(const DisplacementField& u, const LabelGrid& foreground);

AtlasResult build_atlas(const AtlasRun& run);

/// Hard atlas labels: each subject label map is carried onto the template
/// lattice through its final transform, and every template foreground voxel
/// takes the most frequent tooth label (ties to the smaller label).
LabelGrid atlas_labels(const AtlasResult& result, const std::vector<LabelGrid>& subject_labels);

/// CSV with columns iteration, mean_metric, mean_field_norm.
void write_trace_csv(const std::filesystem::path& path, const std::vector<AtlasIterationRecord>& trace);

// ---------------------------------------------------------------------------
// Label transfer.

struct ToothAssignment {
  std::uint16_t truth = 0;     ///< hidden ground-truth label
  std::uint16_t assigned = 0;  ///< 0 when no warped atlas tooth overlaps
  double dice = 0.0;
  bool success = false;
};

struct LabelTransferResult {
  std::vector<ToothAssignment> teeth;  ///< ordered by ground-truth label
  double success_rate = 0.0;
};

/// Each subject tooth (the voxels of one subject label, identity withheld)
/// takes the warped-atlas label of maximal Dice, ties to the smaller label.
LabelTransferResult assign_labels(const LabelGrid& warped_atlas, const LabelGrid& subject_labels);

/// Registers the atlas to the subject (affine, then SyN), carries the atlas
/// labels onto the subject lattice by nearest neighbour and assigns them.
LabelTransferResult atlas_label_transfer(const LabelGrid& atlas_labels, const ChannelPair& atlas_channels,
                                         const LabelGrid& subject_labels, const ChannelPair& subject_channels,
                                         const RegistrationSchedule& schedule);

/// Successes over teeth, pooled across subjects.
double labeling_success_rate(const std::vector<LabelTransferResult>& results);

}  // namespace dentatlas
