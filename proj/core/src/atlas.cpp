#include "dentatlas/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "parallel.hpp"

namespace dentatlas {

void TemplatePair::validate() const {
  if (!(intensity_template.geometry() == guidance_template.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "template channels must share geometry");
  }
  if (generation < 0) throw Error(ErrorKind::kInvalidArgument, "template generation must be >= 0");
  for (const auto* g : {&intensity_template, &guidance_template}) {
    for (float v : g->data()) {
      if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "template values must be finite");
    }
  }
}

void AtlasRun::validate() const {
  if (cohort.size() < 2) throw Error(ErrorKind::kInvalidArgument, "atlas building needs a cohort of at least 2");
  if (outer_iterations < 1) throw Error(ErrorKind::kInvalidArgument, "outer_iterations must be >= 1");
  if (!(shape_update_step > 0.0 && shape_update_step <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "shape_update_step must lie in (0, 1]");
  }
  if (threads < 0) throw Error(ErrorKind::kInvalidArgument, "threads must be >= 0");
  schedule.validate();
  for (const auto& c : cohort) c.validate();
}

GridGeometry common_geometry(const std::vector<ChannelPair>& cohort) {
  if (cohort.empty()) throw Error(ErrorKind::kInvalidArgument, "empty cohort");
  const Vec3 spacing = cohort.front().intensity.geometry().spacing;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  bool identical = true;
  for (const auto& c : cohort) {
    const auto& g = c.intensity.geometry();
    identical = identical && g == cohort.front().intensity.geometry();
    lo = lo.cwiseMin(g.origin);
    hi = hi.cwiseMax(g.physical_point(g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1));
  }
  if (identical) return cohort.front().intensity.geometry();
  GridGeometry out;
  out.spacing = spacing;
  out.origin = lo;
  for (int a = 0; a < 3; ++a) {
    out.dims[a] = static_cast<int>(std::ceil((hi[a] - lo[a]) / spacing[a] - 1e-9)) + 1;
  }
  return out;
}

TemplatePair initialize_templates(const std::vector<ChannelPair>& cohort) {
  const GridGeometry g = common_geometry(cohort);
  std::vector<double> si(g.voxel_count(), 0.0), sg(g.voxel_count(), 0.0);
  for (const auto& c : cohort) {
    c.validate();
    const auto accumulate = [&](const VolumeGrid& v, std::vector<double>& acc) {
      if (v.geometry() == g) {
        for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += v[n];
      } else {
        const VolumeGrid r = resample_to_geometry(v, g);
        for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += r[n];
      }
    };
    accumulate(c.intensity, si);
    accumulate(c.guidance, sg);
  }
  TemplatePair t;
  t.intensity_template = VolumeGrid(g);
  t.guidance_template = VolumeGrid(g);
  const double inv = 1.0 / static_cast<double>(cohort.size());
  for (std::size_t n = 0; n < si.size(); ++n) {
    t.intensity_template[n] = static_cast<float>(si[n] * inv);
    t.guidance_template[n] = static_cast<float>(sg[n] * inv);
  }
  return t;
}

AffineTransform average_affine_transforms(const std::vector<AffineTransform>& ts) {
  if (ts.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot average an empty transform list");
  const Vec3 center = ts.front().center;
  Eigen::Matrix3d log_sum = Eigen::Matrix3d::Zero();
  Vec3 translation = Vec3::Zero();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const AffineTransform t = ts[i].recentered(center);
    if (!(t.linear.determinant() > 0.0)) {
      throw Error(ErrorKind::kAveragingFailure, "transform " + std::to_string(i) + " does not preserve orientation");
    }
    const Eigen::EigenSolver<Eigen::Matrix3d> es(t.linear, false);
    for (int k = 0; k < 3; ++k) {
      const auto ev = es.eigenvalues()(k);
      if (std::abs(ev.imag()) <= 1e-12 * std::abs(ev) && ev.real() <= 0.0) {
        throw Error(ErrorKind::kAveragingFailure,
                    "transform " + std::to_string(i) + " has a non-positive real eigenvalue; no principal logarithm");
      }
    }
    const Eigen::Matrix3d l = t.linear.log();
    if (!l.allFinite()) {
      throw Error(ErrorKind::kAveragingFailure, "matrix logarithm of transform " + std::to_string(i) + " failed");
    }
    log_sum += l;
    translation += t.translation;
  }
  const double inv = 1.0 / static_cast<double>(ts.size());
  AffineTransform out;
  out.center = center;
  out.linear = (log_sum * inv).exp();
  out.translation = translation * inv;
  if (!out.linear.allFinite()) throw Error(ErrorKind::kAveragingFailure, "matrix exponential failed");
  return out;
}

DisplacementField average_displacement_fields(const std::vector<DisplacementField>& fs) {
  if (fs.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot average an empty field list");
  DisplacementField out(fs.front().geometry);
  for (const auto& f : fs) {
    if (!(f.geometry == out.geometry) || f.vectors.size() != out.vectors.size()) {
      throw Error(ErrorKind::kInvalidArgument, "displacement fields differ in geometry");
    }
    for (std::size_t n = 0; n < out.vectors.size(); ++n) out.vectors[n] += f.vectors[n];
  }
  const double inv = 1.0 / static_cast<double>(fs.size());
  for (auto& v : out.vectors) v *= inv;
  return out;
}

TemplatePair apply_shape_update(const TemplatePair& t, const AffineTransform& mean_affine,
                                const DisplacementField& mean_field, double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "shape update step must lie in (0, 1]");
  t.validate();
  if (!(mean_field.geometry == t.intensity_template.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "mean field must live on the template lattice");
  }
  const AffineTransform inv = mean_affine.inverse();
  DisplacementField u(mean_field.geometry);
  for (std::size_t n = 0; n < u.vectors.size(); ++n) u.vectors[n] = -step * mean_field.vectors[n];
  TemplatePair out;
  out.intensity_template = warp_volume(t.intensity_template, inv, u);
  out.guidance_template = warp_volume(t.guidance_template, inv, u);
  out.generation = t.generation + 1;
  return out;
}

LabelGrid template_foreground(const TemplatePair& t) {
  const auto values = t.guidance_template.data();
  const float peak = values.empty() ? 0.0f : *std::max_element(values.begin(), values.end());
  LabelGrid mask(t.guidance_template.geometry());
  if (!(peak > 0.0f)) return mask;
  for (std::size_t n = 0; n < values.size(); ++n) mask[n] = values[n] > 0.25f * peak ? 1 : 0;
  return mask;
}

double foreground_mean_norm_voxels(const DisplacementField& u, const LabelGrid& foreground) {
  if (!(u.geometry == foreground.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "field and foreground differ in geometry");
  }
  const Eigen::Array3d inv = u.geometry.spacing.array().inverse();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < u.vectors.size(); ++n) {
    if (foreground[n] == 0) continue;
    sum += (u.vectors[n].array() * inv).matrix().norm();
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::kEmptyForeground, "template foreground is empty");
  return sum / static_cast<double>(count);
}

AtlasResult build_atlas(const AtlasRun& run) {
  run.validate();
  const std::size_t n = run.cohort.size();
  AtlasResult result;
  result.templates = initialize_templates(run.cohort);
  result.affines.resize(n);
  result.fields.resize(n);
  std::vector<double> metrics(n);
  std::vector<VolumeGrid> warped_intensity(n), warped_guidance(n);

  for (int it = 1; it <= run.outer_iterations; ++it) {
    const ChannelPair fixed{result.templates.intensity_template, result.templates.guidance_template,
                            run.cohort.front().w_intensity, run.cohort.front().w_guidance};
    detail::parallel_for(n, run.threads, [&](std::size_t i) {
      try {
        const auto lin = register_linear(fixed, run.cohort[i], LinearMode::kAffine, run.schedule);
        auto syn = register_syn(fixed, run.cohort[i], lin.transform, run.schedule);
        warped_intensity[i] = warp_volume(run.cohort[i].intensity, lin.transform, syn.fields.forward);
        warped_guidance[i] = warp_volume(run.cohort[i].guidance, lin.transform, syn.fields.forward);
        result.affines[i] = lin.transform;
        result.fields[i] = std::move(syn.fields);
        metrics[i] = syn.final_metric;
      } catch (const Error& e) {
        throw Error(ErrorKind::kRegistrationFailure,
                    "atlas iteration " + std::to_string(it) + ", subject " + std::to_string(i) + ": " + e.what());
      }
    });

    TemplatePair averaged;
    const GridGeometry& g = result.templates.intensity_template.geometry();
    averaged.intensity_template = VolumeGrid(g);
    averaged.guidance_template = VolumeGrid(g);
    averaged.generation = result.templates.generation;
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
      double si = 0.0, sg = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        si += warped_intensity[i][v];
        sg += warped_guidance[i][v];
      }
      averaged.intensity_template[v] = static_cast<float>(si / static_cast<double>(n));
      averaged.guidance_template[v] = static_cast<float>(sg / static_cast<double>(n));
    }

    std::vector<DisplacementField> forward;
    forward.reserve(n);
    for (const auto& f : result.fields) forward.push_back(f.forward);
    const DisplacementField mean = average_displacement_fields(forward);
    const AffineTransform mean_affine = average_affine_transforms(result.affines);

    AtlasIterationRecord record;
    record.iteration = it;
    double msum = 0.0;
    for (double m : metrics) msum += m;
    record.mean_metric = msum / static_cast<double>(n);
    record.mean_field_norm = foreground_mean_norm_voxels(mean, template_foreground(result.templates));
    result.trace.push_back(record);

    result.templates = apply_shape_update(averaged, mean_affine, mean, run.shape_update_step);
  }
  return result;
}

LabelGrid atlas_labels(const AtlasResult& result, const std::vector<LabelGrid>& subject_labels) {
  if (subject_labels.size() != result.fields.size() || subject_labels.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "need one label map per atlas subject");
  }
  const GridGeometry& g = result.templates.intensity_template.geometry();
  std::vector<LabelGrid> carried;
  carried.reserve(subject_labels.size());
  for (std::size_t i = 0; i < subject_labels.size(); ++i) {
    carried.push_back(warp_labels(subject_labels[i], result.affines[i], result.fields[i].forward));
  }
  const LabelGrid foreground = template_foreground(result.templates);
  LabelGrid out(g);
  std::map<std::uint16_t, int> votes;
  for (std::size_t v = 0; v < g.voxel_count(); ++v) {
    if (foreground[v] == 0) continue;
    votes.clear();
    for (const auto& c : carried) {
      if (c[v] != 0) ++votes[c[v]];
    }
    int best = 0;
    for (const auto& [label, count] : votes) {
      if (count > best) {
        best = count;
        out[v] = label;
      }
    }
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<AtlasIterationRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "iteration,mean_metric,mean_field_norm\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.mean_metric << ',' << r.mean_field_norm << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace dentatlas
