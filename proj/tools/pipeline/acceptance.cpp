#include "acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "commands.hpp"
#include "dentatlas/atlas.hpp"
#include "dentatlas/phantom.hpp"
#include "dentatlas/shape.hpp"
#include "oracles.hpp"

namespace dentatlas::cli {

using nlohmann::json;

namespace {

CriterionResult named(int id, const std::string& name) {
  CriterionResult r;
  r.id = id;
  r.name = name;
  return r;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

ChannelPair reassigned_channels(const VolumeGrid& intensity, const LabelGrid& labels) {
  return {intensity, reassign_label_intensities(labels, default_reassignment_table()), 0.5, 0.5};
}

double mean_tooth_distance(const LabelGrid& labels, const PhantomTemplate& t) {
  double sum = 0.0;
  for (const auto& [label, truth] : t.meshes) {
    const SurfaceMesh m = extract_surface(labels, label);
    if (m.empty()) return std::numeric_limits<double>::infinity();
    sum += symmetric_surface_distance(m, truth);
  }
  return sum / static_cast<double>(t.meshes.size());
}

Eigen::MatrixXd as_matrix(const std::vector<Vec3>& v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

// Sum of Gaussian bumps scaled so the largest displacement over `pts` is `peak`.
std::vector<Vec3> bump_displacements(const std::vector<Vec3>& pts, double width, double peak, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::vector<std::pair<Vec3, Vec3>> bumps;
  for (int b = 0; b < 3; ++b) bumps.push_back({pts[pick(rng)], Vec3(normal(rng), normal(rng), normal(rng))});
  std::vector<Vec3> u(pts.size(), Vec3::Zero());
  double largest = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (const auto& [c, a] : bumps) u[i] += a * std::exp(-(pts[i] - c).squaredNorm() / (2.0 * width * width));
    largest = std::max(largest, u[i].norm());
  }
  for (auto& v : u) v *= peak / largest;
  return u;
}

double bbox_diagonal(const std::vector<Vec3>& pts) {
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

bool monotone(const std::vector<double>& objective) {
  for (std::size_t k = 1; k < objective.size(); ++k) {
    if (objective[k] > objective[k - 1] + 1e-9 * std::abs(objective[k - 1])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

CriterionResult linear_recovery(const AcceptanceOptions&) {
  CriterionResult r = named(1, "linear recovery");
  const PhantomTemplate t = generate_template(11, {64, 64, 64}, 0.4);
  const auto& g = t.intensity.geometry();
  AffineTransform truth;
  truth.center = g.physical_point(32, 32, 32);
  truth.linear = Eigen::AngleAxisd(5.0 * std::numbers::pi / 180.0, Vec3(1.0, -2.0, 1.5).normalized()).toRotationMatrix();
  truth.translation = Vec3(2.4, -1.2, 0.8);
  const AffineTransform inv = truth.inverse();
  const LabelGrid moved_labels = warp_labels(t.labels, inv, DisplacementField(g));
  const ChannelPair fixed = reassigned_channels(t.intensity, t.labels);
  const ChannelPair moving = reassigned_channels(warp_volume(t.intensity, inv, g), moved_labels);

  const auto start = std::chrono::steady_clock::now();
  const auto lin = register_linear(fixed, moving, LinearMode::kRigid, RegistrationSchedule{});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const double spacing = g.spacing.mean();
  const double t_err = (lin.transform.apply(truth.center) - truth.apply(truth.center)).norm() / spacing;
  const double r_err =
      Eigen::AngleAxisd(lin.transform.linear * truth.linear.transpose()).angle() * 180.0 / std::numbers::pi;
  r.passed = t_err < 0.2 && r_err < 0.5 && seconds < 30.0;
  r.metrics = {{"translation_error_voxels", t_err}, {"rotation_error_degrees", r_err}, {"register_seconds", seconds}};
  r.summary = "translation error " + fmt(t_err) + " voxel (< 0.2), rotation error " + fmt(r_err) +
              " deg (< 0.5), " + fmt(seconds, 3) + " s (< 30)";
  return r;
}

CriterionResult diffeomorphism_suite(const AcceptanceOptions&) {
  CriterionResult r = named(2, "diffeomorphism suite");
  const PhantomTemplate t = generate_template(12, {64, 64, 64}, 0.4);
  const auto a2 = synthesize_subject(t, 1, 2.0, 0.02);
  const auto a4 = synthesize_subject(t, 2, 4.0, 0.02);
  const auto b2 = synthesize_subject(t, 3, 2.0, 0.02, true);
  const ChannelPair templ = reassigned_channels(t.intensity, t.labels);
  const std::vector<std::pair<std::string, std::pair<ChannelPair, ChannelPair>>> pairs = {
      {"self", {templ, templ}},
      {"template-subject amplitude 2", {templ, reassigned_channels(a2.intensity, a2.labels)}},
      {"subject amplitude 4-template", {reassigned_channels(a4.intensity, a4.labels), templ}},
      {"subject-subject", {reassigned_channels(a2.intensity, a2.labels), reassigned_channels(b2.intensity, b2.labels)}},
  };
  bool ok = true;
  double worst_residual = 0.0, worst_jacobian = std::numeric_limits<double>::infinity();
  json runs = json::array();
  for (const auto& [name, pair] : pairs) {
    const auto syn = register_syn(pair.first, pair.second, AffineTransform{}, RegistrationSchedule{});
    const double jf = min_interior_jacobian(syn.fields.forward);
    const double ji = min_interior_jacobian(syn.fields.inverse);
    const double rf = composition_residual_voxels(syn.fields.forward, syn.fields.inverse);
    const double ri = composition_residual_voxels(syn.fields.inverse, syn.fields.forward);
    ok = ok && jf > 0.0 && ji > 0.0 && rf < 0.5 && ri < 0.5;
    worst_residual = std::max({worst_residual, rf, ri});
    worst_jacobian = std::min({worst_jacobian, jf, ji});
    runs.push_back({{"pair", name}, {"min_jacobian_forward", jf}, {"min_jacobian_inverse", ji},
                    {"residual_forward_inverse", rf}, {"residual_inverse_forward", ri}});
  }
  r.passed = ok;
  r.metrics = {{"runs", runs}, {"worst_residual_voxels", worst_residual}, {"min_jacobian", worst_jacobian},
               {"residual_target_0_1_met", worst_residual < 0.1}};
  r.summary = "min Jacobian " + fmt(worst_jacobian) + " (> 0), worst round trip " + fmt(worst_residual) +
              " voxel (< 0.5; target 0.1 " + (worst_residual < 0.1 ? "met" : "not met") + ") over " +
              std::to_string(pairs.size()) + " registrations";
  return r;
}

CriterionResult unbiased_atlas(const AcceptanceOptions& options) {
  CriterionResult r = named(3, "unbiased atlas");
  const PhantomTemplate t = generate_template(7, {96, 96, 96}, 0.4);
  const auto cohort = phantom_cohort(t, 8, 2024, 2.0, 0.02);
  const EnhancementConfig enhancement = EnhancementConfig::defaults();
  AtlasRun run;
  run.outer_iterations = 5;
  run.threads = options.threads;
  std::vector<LabelGrid> labels;
  std::vector<double> subject_distance;
  for (const auto& s : cohort) {
    const EnhancedImage e = enhance(normalize_intensity(s.intensity), s.labels, enhancement);
    run.cohort.push_back({e.intensity, e.guidance, 0.5, 0.5});
    labels.push_back(e.labels);
    subject_distance.push_back(mean_tooth_distance(s.labels, t));
  }
  const auto start = std::chrono::steady_clock::now();
  const AtlasResult a = build_atlas(run);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const LabelGrid atlas = atlas_labels(a, labels);
  const double atlas_distance = mean_tooth_distance(atlas, t);

  std::vector<DisplacementField> forward;
  for (const auto& f : a.fields) forward.push_back(f.forward);
  const double bias =
      foreground_mean_norm_voxels(average_displacement_fields(forward), template_foreground(a.templates));

  double min_jacobian = std::numeric_limits<double>::infinity(), worst_residual = 0.0;
  for (const auto& f : a.fields) {
    min_jacobian = std::min({min_jacobian, min_interior_jacobian(f.forward), min_interior_jacobian(f.inverse)});
    worst_residual = std::max(worst_residual, composition_residual_voxels(f.forward, f.inverse));
  }
  const int threads = std::min(8, static_cast<int>(options.threads > 0 ? options.threads
                                                                        : std::max(1u, std::thread::hardware_concurrency())));
  const double budget = 30.0 * 60.0 * 8.0 / threads;
  const double closest_subject = *std::min_element(subject_distance.begin(), subject_distance.end());
  r.passed = atlas_distance < closest_subject && bias < 0.5 && seconds < budget;
  json trace = json::array();
  for (const auto& rec : a.trace) {
    trace.push_back({{"iteration", rec.iteration}, {"mean_metric", rec.mean_metric},
                     {"mean_field_norm", rec.mean_field_norm}});
  }
  r.metrics = {{"atlas_to_template_mm", atlas_distance},
               {"subject_to_template_mm", subject_distance},
               {"mean_field_foreground_norm_voxels", bias},
               {"build_seconds", seconds},
               {"threads", threads},
               {"budget_seconds", budget},
               {"min_jacobian", min_jacobian},
               {"worst_round_trip_voxels", worst_residual},
               {"trace", trace}};
  r.summary = "atlas-template distance " + fmt(atlas_distance) + " mm vs closest subject " + fmt(closest_subject) +
              " mm, mean field " + fmt(bias) + " voxel (< 0.5), " + fmt(seconds / 60.0, 3) + " min on " +
              std::to_string(threads) + " thread(s) (budget " + fmt(budget / 60.0, 3) + " min)";
  return r;
}

CriterionResult enhancement_benefit(const AcceptanceOptions& options) {
  CriterionResult r = named(4, "enhancement benefit");
  const PhantomTemplate t = generate_template(21, {64, 64, 64}, 0.4);
  const auto cohort = phantom_cohort(t, 16, 77, 2.0, 0.1);
  PipelineConfig c;
  c.threads = options.threads;
  std::vector<LabelTransferResult> guided(cohort.size()), plain(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const VolumeGrid intensity = normalize_intensity(cohort[i].intensity);
    guided[i] = transfer_labels(t.intensity, t.labels, intensity, cohort[i].labels, true, c);
    plain[i] = transfer_labels(t.intensity, t.labels, intensity, cohort[i].labels, false, c);
  }
  const double g = labeling_success_rate(guided), p = labeling_success_rate(plain);
  r.passed = g >= p && g >= 0.9;
  std::vector<double> gs, ps;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    gs.push_back(guided[i].success_rate);
    ps.push_back(plain[i].success_rate);
  }
  r.metrics = {{"guided_success_rate", g}, {"intensity_only_success_rate", p},
               {"guided_per_subject", gs}, {"intensity_only_per_subject", ps}};
  r.summary = "guided " + fmt(g) + " vs intensity-only " + fmt(p) + " over " + std::to_string(cohort.size()) +
              " subjects (guided >= intensity-only, guided >= 0.9)";
  return r;
}

CriterionResult dice_oracle(const AcceptanceOptions&) {
  CriterionResult r = named(5, "dice oracle");
  std::mt19937_64 rng(5);
  int mismatches = 0, comparisons = 0;
  for (int trial = 0; trial < 100; ++trial) {
    GridGeometry g;
    for (int a = 0; a < 3; ++a) g.dims[a] = 3 + static_cast<int>(rng() % 10);
    LabelGrid x(g), y(g);
    const double density = 0.1 + 0.8 * static_cast<double>(rng() % 1000) / 1000.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      if (static_cast<double>(rng() % 1000) / 1000.0 < density) x[n] = static_cast<std::uint16_t>(1 + rng() % 4);
      if (static_cast<double>(rng() % 1000) / 1000.0 < density) y[n] = static_cast<std::uint16_t>(1 + rng() % 4);
    }
    x[0] = 1;
    std::uint64_t nx = 0, ny = 0, both = 0;
    std::map<std::uint16_t, std::uint64_t> lx, ly, lboth;
    for (std::size_t n = 0; n < x.size(); ++n) {
      nx += x[n] != 0;
      ny += y[n] != 0;
      both += x[n] != 0 && y[n] != 0;
      ++lx[x[n]];
      ++ly[y[n]];
      if (x[n] == y[n]) ++lboth[x[n]];
    }
    ++comparisons;
    if (dice_coefficient(x, y) != static_cast<double>(2 * both) / static_cast<double>(nx + ny)) ++mismatches;
    for (std::uint16_t l = 1; l <= 4; ++l) {
      if (lx[l] + ly[l] == 0) continue;
      ++comparisons;
      if (dice_coefficient(x, l, y, l) != static_cast<double>(2 * lboth[l]) / static_cast<double>(lx[l] + ly[l])) {
        ++mismatches;
      }
    }
  }
  r.passed = mismatches == 0;
  r.metrics = {{"comparisons", comparisons}, {"mismatches", mismatches}};
  r.summary = std::to_string(mismatches) + " mismatches in " + std::to_string(comparisons) +
              " exact comparisons over 100 random grid pairs";
  return r;
}

CriterionResult cpd_properties(const AcceptanceOptions&) {
  CriterionResult r = named(6, "cpd");
  const PhantomTemplate t = generate_template(3, {64, 64, 64}, 0.4);
  const std::vector<Vec3>& pts = t.meshes.at(16).vertices;
  const auto n = static_cast<Eigen::Index>(pts.size());
  const Eigen::MatrixXd y = as_matrix(pts);
  const double diag = bbox_diagonal(pts);
  CpdConfig cfg;
  cfg.max_points = pts.size();

  const auto self = cpd_nonrigid(y, y, cfg);
  Eigen::Index self_correct = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index arg = 0;
    self.posterior.col(j).maxCoeff(&arg);
    self_correct += arg == j;
  }

  const auto u = bump_displacements(pts, 0.35 * diag, 0.05 * diag, 9);
  std::vector<Eigen::Index> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  std::mt19937_64 rng(10);
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::MatrixXd x(n, 3);
  for (Eigen::Index j = 0; j < n; ++j) x.row(j) = (pts[order[j]] + u[order[j]]).transpose();
  const auto deformed = cpd_nonrigid(y, x, cfg);
  double err = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) err += (deformed.moved.row(i).transpose() - (pts[i] + u[i])).norm();
  err /= static_cast<double>(n) * diag;

  const Eigen::Index outliers = n / 9;
  Eigen::MatrixXd xo(n + outliers, 3);
  xo.topRows(n) = x;
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < outliers; ++j) {
    for (int a = 0; a < 3; ++a) xo(n + j, a) = lo[a] + unit(rng) * (hi[a] - lo[a]);
  }
  CpdConfig ocfg = cfg;
  ocfg.w = 0.1;
  ocfg.max_points = static_cast<std::size_t>(n + outliers);
  const auto noisy = cpd_nonrigid(y, xo, ocfg);
  Eigen::Index inlier_correct = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index arg = 0;
    noisy.posterior.col(j).maxCoeff(&arg);
    inlier_correct += arg == order[j];
  }
  const double accuracy = static_cast<double>(inlier_correct) / static_cast<double>(n);
  const bool mono = monotone(self.objective) && monotone(deformed.objective) && monotone(noisy.objective);
  r.passed = self_correct == n && err < 0.01 && accuracy >= 0.95 && mono;
  r.metrics = {{"points", n},
               {"self_identity_matches", self_correct},
               {"deformation_error_fraction_of_diagonal", err},
               {"outlier_inlier_accuracy", accuracy},
               {"objective_monotone", mono},
               {"iterations", {self.iterations, deformed.iterations, noisy.iterations}}};
  r.summary = "self matches " + std::to_string(self_correct) + "/" + std::to_string(n) + ", deformation error " +
              fmt(100.0 * err) + "% of diagonal (< 1%), inlier accuracy " + fmt(100.0 * accuracy) +
              "% (>= 95%), objective " + (mono ? "monotone" : "NOT monotone");
  return r;
}

CriterionResult pca_properties(const AcceptanceOptions&) {
  CriterionResult r = named(7, "pca");
  const PhantomTemplate t = generate_template(4, {64, 64, 64}, 0.4);
  const SurfaceMesh& base = t.meshes.at(36);
  const double diag = bbox_diagonal(base.vertices);
  std::vector<std::vector<Vec3>> modes;
  for (int k = 0; k < 3; ++k) modes.push_back(bump_displacements(base.vertices, 0.4 * diag, 1.0, 100 + k));
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  const double sd[3] = {0.06 * diag, 0.04 * diag, 0.02 * diag};
  CorrespondedShapeSet set;
  set.topology = base.triangles;
  for (int s = 0; s < 50; ++s) {
    double c[3];
    for (int k = 0; k < 3; ++k) c[k] = sd[k] * normal(rng);
    Eigen::VectorXd shape(3 * static_cast<Eigen::Index>(base.vertices.size()));
    for (std::size_t i = 0; i < base.vertices.size(); ++i) {
      Vec3 p = base.vertices[i];
      for (int k = 0; k < 3; ++k) p += c[k] * modes[k][i];
      p += 0.001 * diag * Vec3(normal(rng), normal(rng), normal(rng));
      shape.segment<3>(3 * static_cast<Eigen::Index>(i)) = p;
    }
    set.shapes.push_back(shape);
    set.source_ids.push_back("shape_" + std::to_string(s));
  }
  const ShapeModel model = pca_fit(set);
  const double first3 = model.explained_variance_ratio.head(std::min(3, model.mode_count())).sum();
  const Eigen::MatrixXd gram = model.modes.transpose() * model.modes;
  const double ortho = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  double recon = 0.0;
  for (const auto& s : set.shapes) {
    const Eigen::VectorXd back = pca_synthesize(model, pca_project(model, s));
    recon = std::max(recon, (back - s).norm() / (s - model.mean).norm());
  }
  const int k85 = explained_variance_report(model, 0.85);
  r.passed = first3 >= 0.95 && ortho < 1e-10 && recon < 1e-6 && k85 <= 3;
  r.metrics = {{"first_three_ratio", first3}, {"orthonormality_error", ortho}, {"reconstruction_error", recon},
               {"k_at_0_85", k85}, {"modes", model.mode_count()}};
  r.summary = "first 3 PCs explain " + fmt(100.0 * first3) + "% (>= 95%), orthonormality " + fmt(ortho, 3) +
              " (< 1e-10), reconstruction " + fmt(recon, 3) + " (< 1e-6), k(0.85) = " + std::to_string(k85) +
              " (<= 3)";
  return r;
}

CriterionResult cc_gradient(const AcceptanceOptions&) {
  CriterionResult r = named(8, "local cc gradient");
  GridGeometry g;
  g.dims = {14, 14, 14};
  g.spacing = Vec3::Constant(0.8);
  double worst = 0.0;
  json rows = json::array();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = oracle::wave_volume(g, 100 + seed);
    const auto b = oracle::wave_volume(g, 200 + seed);
    const auto check = oracle::cc_directional_check(a, b, 2, seed);
    const double rel = std::abs(check.analytic - check.finite_difference) / std::abs(check.finite_difference);
    worst = std::max(worst, rel);
    rows.push_back({{"analytic", check.analytic}, {"finite_difference", check.finite_difference}, {"relative", rel}});
  }
  r.passed = worst < 1e-3;
  r.metrics = {{"pairs", rows}, {"worst_relative_error", worst}};
  r.summary = "worst relative error " + fmt(worst, 3) + " over 10 volume pairs (< 1e-3)";
  return r;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

CriterionResult determinism(const AcceptanceOptions& options) {
  CriterionResult r = named(9, "determinism");
  const fs::path root = (options.work_dir.empty() ? fs::temp_directory_path() / "dentatlas_acceptance" : options.work_dir) /
                        "determinism";
  fs::remove_all(root);
  PipelineConfig c;
  c.threads = options.threads;
  c.phantom.dims = 48;
  c.phantom.spacing = 0.5;
  c.phantom.n = 4;
  c.phantom.seed = 99;
  c.working_spacing = 0.5;
  c.enhancement.margin_voxels = 6;
  c.enhancement.dilation_radius_voxels = 4;
  c.registration.shrink_factors = {4, 2, 1};
  c.registration.smoothing_sigmas_voxels = {2, 1, 0};
  c.registration.max_iterations = {30, 20, 10};
  c.registration.cc_window_radius = 2;
  c.atlas.outer_iterations = 2;
  c.shape.cpd.max_points = 400;
  const auto pipeline = [&](const fs::path& out) {
    phantom_make(c, out / "phantom");
    atlas_build(c, out / "phantom" / "manifest.json", out / "atlas");
    correspond_command(c, out / "atlas", out / "phantom" / "manifest.json", 16, out / "correspond");
    pca_command(c, out / "correspond", c.shape.pca_threshold, out / "pca");
  };
  pipeline(root / "run");
  fs::rename(root / "run", root / "first");
  pipeline(root / "run");
  const auto a = snapshot(root / "first");
  const auto b = snapshot(root / "run");
  int differing = 0;
  json diffs = json::array();
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      diffs.push_back(name);
    }
  }
  for (const auto& [name, bytes] : b) {
    if (!a.count(name)) {
      ++differing;
      diffs.push_back(name);
    }
  }
  r.passed = differing == 0 && !a.empty();
  r.metrics = {{"files", a.size()}, {"differing", diffs}};
  r.summary = std::to_string(a.size()) + " output files compared, " + std::to_string(differing) + " differ";
  if (r.passed) fs::remove_all(root);
  return r;
}

}  // namespace

std::vector<int> criterion_ids() { return {1, 2, 3, 4, 5, 6, 7, 8, 9}; }

CriterionResult run_criterion(int id, const AcceptanceOptions& options) {
  using Fn = CriterionResult (*)(const AcceptanceOptions&);
  static const std::map<int, std::pair<const char*, Fn>> table = {
      {1, {"linear recovery", linear_recovery}},   {2, {"diffeomorphism suite", diffeomorphism_suite}},
      {3, {"unbiased atlas", unbiased_atlas}},     {4, {"enhancement benefit", enhancement_benefit}},
      {5, {"dice oracle", dice_oracle}},           {6, {"cpd", cpd_properties}},
      {7, {"pca", pca_properties}},                {8, {"local cc gradient", cc_gradient}},
      {9, {"determinism", determinism}},
  };
  const auto it = table.find(id);
  if (it == table.end()) throw Error(ErrorKind::kConfig, "unknown acceptance criterion " + std::to_string(id));
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = it->second.second(options);
  } catch (const std::exception& e) {
    r = named(id, it->second.first);
    r.summary = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string format_line(const CriterionResult& r) {
  return std::string(r.passed ? "[PASS] " : "[FAIL] ") + std::to_string(r.id) + " " + r.name + ": " + r.summary +
         " [" + fmt(r.seconds, 3) + " s]";
}

json to_json(const CriterionResult& r) {
  return {{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"summary", r.summary},
          {"metrics", r.metrics}, {"seconds", r.seconds}};
}

}  // namespace dentatlas::cli
