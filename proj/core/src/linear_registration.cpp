#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dentatlas/filters.hpp"
#include "dentatlas/register.hpp"
#include "field_kernels.hpp"
#include "pyramid.hpp"

namespace dentatlas {

void RegistrationSchedule::validate() const {
  const std::size_t n = shrink_factors.size();
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "schedule needs at least one level");
  if (smoothing_sigmas_voxels.size() != n || max_iterations.size() != n) {
    throw Error(ErrorKind::kInvalidArgument, "schedule lists must have equal length");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (shrink_factors[l] < 1) throw Error(ErrorKind::kInvalidArgument, "shrink factors must be >= 1");
    if (l > 0 && shrink_factors[l] > shrink_factors[l - 1]) {
      throw Error(ErrorKind::kInvalidArgument, "shrink factors must be non-increasing");
    }
    if (smoothing_sigmas_voxels[l] < 0.0) throw Error(ErrorKind::kInvalidArgument, "smoothing sigmas must be >= 0");
    if (max_iterations[l] < 0) throw Error(ErrorKind::kInvalidArgument, "max iterations must be >= 0");
  }
  if (shrink_factors.back() != 1) throw Error(ErrorKind::kInvalidArgument, "the last shrink factor must be 1");
  if (cc_window_radius < 1) throw Error(ErrorKind::kInvalidArgument, "cc window radius must be >= 1");
  if (!(gradient_step > 0.0)) throw Error(ErrorKind::kInvalidArgument, "gradient step must be positive");
  if (convergence_window < 2) throw Error(ErrorKind::kInvalidArgument, "convergence window must be >= 2");
}

void ChannelPair::validate() const {
  if (!(intensity.geometry() == guidance.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "channels must share geometry");
  }
  if (w_intensity < 0.0 || w_guidance < 0.0 || !(w_intensity + w_guidance > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "channel weights must be non-negative and not both zero");
  }
}

Vec3 intensity_centroid(const VolumeGrid& v) {
  const auto values = v.data();
  const double lo = *std::min_element(values.begin(), values.end());
  const auto& g = v.geometry();
  Vec3 acc = Vec3::Zero();
  double wsum = 0.0;
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const double w = values[n] - lo;
        if (w <= 0.0) continue;
        acc += w * g.physical_point(i, j, k);
        wsum += w;
      }
  if (!(wsum > 0.0)) {
    return g.origin + 0.5 * Vec3((g.dims[0] - 1) * g.spacing.x(), (g.dims[1] - 1) * g.spacing.y(),
                                 (g.dims[2] - 1) * g.spacing.z());
  }
  return acc / wsum;
}

namespace {

constexpr double kInitialStep = 0.1;
constexpr double kMinStep = 1e-5;
constexpr double kDifferenceStep = 1e-3;

// Radius of gyration of the intensity mass; converts translations to the
// dimensionless parameter scale shared with rotations.
double length_scale(const VolumeGrid& v, const Vec3& centroid) {
  const auto values = v.data();
  const double lo = *std::min_element(values.begin(), values.end());
  const auto& g = v.geometry();
  double acc = 0.0, wsum = 0.0;
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const double w = values[n] - lo;
        if (w <= 0.0) continue;
        acc += w * (g.physical_point(i, j, k) - centroid).squaredNorm();
        wsum += w;
      }
  double scale = wsum > 0.0 ? std::sqrt(acc / wsum) : 0.0;
  if (!(scale > 0.0)) scale = 0.5 * (g.dims[0] * g.spacing.x());
  return scale;
}

struct LinearProblem {
  LinearMode mode;
  Vec3 center;
  double scale;

  int parameter_count() const { return mode == LinearMode::kRigid ? 6 : 12; }

  AffineTransform transform(const Eigen::VectorXd& p) const {
    AffineTransform t;
    t.center = center;
    if (mode == LinearMode::kRigid) {
      const Vec3 w = p.head<3>();
      const double angle = w.norm();
      t.linear = angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
      t.translation = scale * p.segment<3>(3);
    } else {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) t.linear(r, c) = (r == c ? 1.0 : 0.0) + p(3 * r + c);
      t.translation = scale * p.segment<3>(9);
    }
    return t;
  }
};

struct LevelChannel {
  double weight;
  std::vector<double> fixed_centered;
  double fixed_norm;
  VolumeGrid moving;
};

struct LinearLevel {
  GridGeometry geometry;
  std::vector<LevelChannel> channels;
};

LinearLevel build_level(const ChannelPair& fixed, const ChannelPair& moving, int shrink, double sigma_vox) {
  LinearLevel level;
  level.geometry = shrink_geometry(fixed.intensity.geometry(), shrink);
  const double wsum = fixed.w_intensity + fixed.w_guidance;
  const std::pair<double, std::pair<const VolumeGrid*, const VolumeGrid*>> inputs[2] = {
      {fixed.w_intensity / wsum, {&fixed.intensity, &moving.intensity}},
      {fixed.w_guidance / wsum, {&fixed.guidance, &moving.guidance}}};
  for (const auto& [w, imgs] : inputs) {
    if (!(w > 0.0)) continue;
    LevelChannel ch;
    ch.weight = w;
    ch.fixed_centered = detail::pyramid_image(*imgs.first, sigma_vox, level.geometry);
    double mean = 0.0;
    for (double v : ch.fixed_centered) mean += v;
    mean /= static_cast<double>(ch.fixed_centered.size());
    double ss = 0.0;
    for (double& v : ch.fixed_centered) {
      v -= mean;
      ss += v * v;
    }
    ch.fixed_norm = std::sqrt(ss);
    const GridGeometry mg = shrink_geometry(imgs.second->geometry(), shrink);
    const auto mv = detail::pyramid_image(*imgs.second, sigma_vox, mg);
    ch.moving = VolumeGrid(mg, std::vector<float>(mv.begin(), mv.end()));
    level.channels.push_back(std::move(ch));
  }
  return level;
}

// Weighted Pearson correlation; nullopt-like NaN when a channel degenerates.
double level_metric(const LinearLevel& level, const AffineTransform& t, std::vector<double>& scratch) {
  double metric = 0.0;
  for (const auto& ch : level.channels) {
    detail::warp_affine(ch.moving, t, level.geometry, scratch);
    double mean = 0.0;
    for (double v : scratch) mean += v;
    mean /= static_cast<double>(scratch.size());
    double dot = 0.0, ss = 0.0;
    for (std::size_t n = 0; n < scratch.size(); ++n) {
      const double d = scratch[n] - mean;
      dot += ch.fixed_centered[n] * d;
      ss += d * d;
    }
    if (!(ss > 0.0) || !(ch.fixed_norm > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    metric += ch.weight * dot / (ch.fixed_norm * std::sqrt(ss));
  }
  return metric;
}

struct StageResult {
  Eigen::VectorXd params;
  double metric;
};

StageResult run_stage(const ChannelPair& fixed, const ChannelPair& moving, const LinearProblem& problem,
                      Eigen::VectorXd params, const RegistrationSchedule& schedule,
                      std::vector<LinearLevelTrace>& trace) {
  std::vector<double> scratch;
  double f = 0.0;
  const double mean_spacing = fixed.intensity.geometry().spacing.mean();
  for (std::size_t l = 0; l < schedule.shrink_factors.size(); ++l) {
    const double sigma = schedule.sigmas_in_mm ? schedule.smoothing_sigmas_voxels[l] / mean_spacing
                                               : schedule.smoothing_sigmas_voxels[l];
    const LinearLevel level = build_level(fixed, moving, schedule.shrink_factors[l], sigma);
    auto eval = [&](const Eigen::VectorXd& p) {
      const double m = level_metric(level, problem.transform(p), scratch);
      return std::isfinite(m) ? m : -std::numeric_limits<double>::infinity();
    };
    f = level_metric(level, problem.transform(params), scratch);
    if (!std::isfinite(f)) {
      throw Error(ErrorKind::kRegistrationFailure, "linear registration metric is degenerate at initialisation");
    }
    LinearLevelTrace level_trace;
    level_trace.shrink = schedule.shrink_factors[l];
    level_trace.metric.push_back(f);
    double step = kInitialStep;
    Eigen::VectorXd grad(params.size());
    for (int it = 0; it < schedule.max_iterations[l]; ++it) {
      for (int d = 0; d < params.size(); ++d) {
        Eigen::VectorXd hi = params, lo = params;
        hi(d) += kDifferenceStep;
        lo(d) -= kDifferenceStep;
        const double fh = eval(hi), fl = eval(lo);
        grad(d) = (std::isfinite(fh) && std::isfinite(fl)) ? (fh - fl) / (2.0 * kDifferenceStep) : 0.0;
      }
      const double gnorm = grad.norm();
      if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
      const Eigen::VectorXd dir = grad / gnorm;
      bool improved = false;
      double gain = 0.0;
      while (step >= kMinStep) {
        const Eigen::VectorXd trial = params + step * dir;
        const double ft = eval(trial);
        if (ft > f) {
          params = trial;
          gain = ft - f;
          f = ft;
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
      level_trace.metric.push_back(f);
      if (gain < schedule.convergence_tol * std::max(1.0, std::abs(f))) break;
    }
    trace.push_back(std::move(level_trace));
  }
  return {params, f};
}

}  // namespace

LinearRegistrationResult register_linear(const ChannelPair& fixed, const ChannelPair& moving, LinearMode mode,
                                         const RegistrationSchedule& schedule) {
  schedule.validate();
  fixed.validate();
  moving.validate();

  const Vec3 center = intensity_centroid(fixed.intensity);
  const Vec3 moving_center = intensity_centroid(moving.intensity);
  const double scale = length_scale(fixed.intensity, center);

  LinearRegistrationResult result;
  LinearProblem rigid{LinearMode::kRigid, center, scale};
  Eigen::VectorXd p = Eigen::VectorXd::Zero(6);
  p.segment<3>(3) = (moving_center - center) / scale;
  StageResult stage = run_stage(fixed, moving, rigid, p, schedule, result.trace);
  const AffineTransform rigid_t = rigid.transform(stage.params);
  result.rigid.rotation = Eigen::Quaterniond(rigid_t.linear).normalized();
  result.rigid.translation = rigid_t.translation;
  result.rigid.center = center;
  result.transform = AffineTransform::from_rigid(result.rigid);
  result.final_metric = stage.metric;

  if (mode == LinearMode::kAffine) {
    LinearProblem affine{LinearMode::kAffine, center, scale};
    Eigen::VectorXd q(12);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) q(3 * r + c) = rigid_t.linear(r, c) - (r == c ? 1.0 : 0.0);
    q.segment<3>(9) = rigid_t.translation / scale;
    stage = run_stage(fixed, moving, affine, q, schedule, result.trace);
    result.transform = affine.transform(stage.params);
    if (!(result.transform.linear.determinant() > 0.0)) {
      throw Error(ErrorKind::kRegistrationFailure, "affine registration produced a non-orientation-preserving map");
    }
    result.final_metric = stage.metric;
  }
  return result;
}

}  // namespace dentatlas
