#include <algorithm>
#include <cmath>

#include "cc_kernel.hpp"
#include "dentatlas/filters.hpp"
#include "dentatlas/register.hpp"
#include "field_kernels.hpp"
#include "pyramid.hpp"

namespace dentatlas {

namespace {

constexpr double kMinStep = 1e-4;
constexpr double kGradientFloor = 1e-12;

struct SynChannel {
  double weight;
  std::vector<double> fixed;
  std::vector<double> moving;
};

struct SideGradients {
  double metric = 0.0;
  std::vector<Vec3> fixed_side;
  std::vector<Vec3> moving_side;
};

void warp_level(const std::vector<double>& img, const DisplacementField& u, std::vector<double>& out) {
  const auto& g = u.geometry;
  out.resize(img.size());
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3 c(i + u.vectors[n].x() / g.spacing.x(), j + u.vectors[n].y() / g.spacing.y(),
                     k + u.vectors[n].z() / g.spacing.z());
        out[n] = detail::sample_index_zero(img.data(), g.dims, c);
      }
}

// Metric at the midpoint and its gradient with respect to both half-maps.
SideGradients evaluate(const std::vector<SynChannel>& channels, const DisplacementField& u_fixed,
                       const DisplacementField& u_moving, int radius) {
  const auto& g = u_fixed.geometry;
  const std::size_t n_vox = g.voxel_count();
  SideGradients out;
  out.fixed_side.assign(n_vox, Vec3::Zero());
  out.moving_side.assign(n_vox, Vec3::Zero());
  std::vector<double> fw, mw;
  std::vector<Vec3> grad_f, grad_m;
  for (const auto& ch : channels) {
    warp_level(ch.fixed, u_fixed, fw);
    warp_level(ch.moving, u_moving, mw);
    const auto k = detail::cc_kernel(fw, mw, g.dims, radius, true, true);
    if (k.valid == 0) continue;
    const double scale = ch.weight / static_cast<double>(k.valid);
    out.metric += scale * k.sum;
    detail::central_gradient(fw, g, grad_f);
    detail::central_gradient(mw, g, grad_m);
    for (std::size_t n = 0; n < n_vox; ++n) {
      out.fixed_side[n] += (scale * k.d_a[n]) * grad_f[n];
      out.moving_side[n] += (scale * k.d_b[n]) * grad_m[n];
    }
  }
  return out;
}

// Smoothed ascent direction scaled so its largest displacement is `step` voxels.
DisplacementField scaled_update(const DisplacementField& smoothed, double step) {
  const double norm = smoothed.max_norm_voxels();
  DisplacementField out = smoothed;
  if (!(norm > kGradientFloor)) {
    std::fill(out.vectors.begin(), out.vectors.end(), Vec3::Zero());
    return out;
  }
  const double scale = step / norm;
  for (auto& v : out.vectors) v *= scale;
  return out;
}

// Least-squares slope of the last `window` metric values.
double trailing_slope(const std::vector<double>& values, int window) {
  const std::size_t w = static_cast<std::size_t>(window);
  const std::size_t start = values.size() - w;
  const double xm = 0.5 * static_cast<double>(w - 1);
  double ym = 0.0;
  for (std::size_t i = 0; i < w; ++i) ym += values[start + i];
  ym /= static_cast<double>(w);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    const double dx = static_cast<double>(i) - xm;
    sxy += dx * (values[start + i] - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<SynChannel> level_channels(const std::vector<std::pair<double, std::pair<const VolumeGrid*, VolumeGrid>>>& inputs,
                                       double sigma, const GridGeometry& level) {
  std::vector<SynChannel> out;
  for (const auto& [w, imgs] : inputs) {
    out.push_back({w, detail::pyramid_image(*imgs.first, sigma, level), detail::pyramid_image(imgs.second, sigma, level)});
  }
  return out;
}

}  // namespace

SynResult register_syn(const ChannelPair& fixed, const ChannelPair& moving, const AffineTransform& init,
                       const RegistrationSchedule& schedule) {
  schedule.validate();
  fixed.validate();
  moving.validate();
  const GridGeometry& fg = fixed.intensity.geometry();
  const double wsum = fixed.w_intensity + fixed.w_guidance;

  std::vector<std::pair<double, std::pair<const VolumeGrid*, VolumeGrid>>> inputs;
  if (fixed.w_intensity > 0.0) {
    inputs.push_back({fixed.w_intensity / wsum, {&fixed.intensity, warp_volume(moving.intensity, init, fg)}});
  }
  if (fixed.w_guidance > 0.0) {
    inputs.push_back({fixed.w_guidance / wsum, {&fixed.guidance, warp_volume(moving.guidance, init, fg)}});
  }

  SynResult result;
  DisplacementField u_fixed, u_moving;
  double metric = 0.0;
  for (std::size_t l = 0; l < schedule.shrink_factors.size(); ++l) {
    const GridGeometry level = shrink_geometry(fg, schedule.shrink_factors[l]);
    const double sigma = schedule.sigmas_in_mm ? schedule.smoothing_sigmas_voxels[l] / fg.spacing.mean()
                                               : schedule.smoothing_sigmas_voxels[l];
    const auto channels = level_channels(inputs, sigma, level);
    u_fixed = u_fixed.vectors.empty() ? DisplacementField::zero(level) : resample_field(u_fixed, level);
    u_moving = u_moving.vectors.empty() ? DisplacementField::zero(level) : resample_field(u_moving, level);

    SynLevelTrace trace;
    trace.shrink = schedule.shrink_factors[l];
    SideGradients current = evaluate(channels, u_fixed, u_moving, schedule.cc_window_radius);
    trace.metric.push_back(current.metric);
    double step = schedule.gradient_step;
    DisplacementField dir_fixed, dir_moving;
    bool have_directions = false;
    for (int it = 0; it < schedule.max_iterations[l]; ++it) {
      if (!have_directions) {
        DisplacementField gf(level), gm(level);
        gf.vectors = std::move(current.fixed_side);
        gm.vectors = std::move(current.moving_side);
        dir_fixed = smooth_field(gf, schedule.update_field_sigma);
        dir_moving = smooth_field(gm, schedule.update_field_sigma);
        have_directions = true;
      }
      if (!(dir_fixed.max_norm_voxels() > kGradientFloor) && !(dir_moving.max_norm_voxels() > kGradientFloor)) break;

      DisplacementField cand_fixed =
          smooth_field(compose_fields(u_fixed, exponentiate_field(scaled_update(dir_fixed, step))),
                       schedule.total_field_sigma);
      DisplacementField cand_moving =
          smooth_field(compose_fields(u_moving, exponentiate_field(scaled_update(dir_moving, step))),
                       schedule.total_field_sigma);
      if (!(min_interior_jacobian(cand_fixed) > 0.0) || !(min_interior_jacobian(cand_moving) > 0.0)) {
        ++trace.rejected_steps;
        step *= 0.5;
        if (step < kMinStep) {
          throw Error(ErrorKind::kRegistrationFailure, "diffeomorphic update folds at every step size");
        }
        continue;
      }
      SideGradients cand = evaluate(channels, cand_fixed, cand_moving, schedule.cc_window_radius);
      u_fixed = std::move(cand_fixed);
      u_moving = std::move(cand_moving);
      current = std::move(cand);
      have_directions = false;
      trace.metric.push_back(current.metric);
      if (static_cast<int>(trace.metric.size()) >= schedule.convergence_window &&
          trailing_slope(trace.metric, schedule.convergence_window) < schedule.convergence_tol) {
        break;
      }
    }
    metric = current.metric;
    result.trace.push_back(std::move(trace));
  }

  const DisplacementField fixed_inv = invert_field(u_fixed);
  const DisplacementField moving_inv = invert_field(u_moving);
  result.fields.forward = compose_fields(u_moving, fixed_inv);
  result.fields.inverse = invert_field(result.fields.forward, compose_fields(u_fixed, moving_inv));
  if (!(min_interior_jacobian(result.fields.forward) > 0.0) || !(min_interior_jacobian(result.fields.inverse) > 0.0)) {
    throw Error(ErrorKind::kRegistrationFailure, "registration produced a folding map");
  }
  const double back = composition_residual_voxels(result.fields.forward, result.fields.inverse);
  if (!(back < InversionOptions{}.max_residual_voxels)) throw InversionError(back, 0);
  result.final_metric = metric;
  return result;
}

}  // namespace dentatlas
