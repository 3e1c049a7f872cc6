#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "dentatlas/atlas.hpp"
#include "dentatlas/phantom.hpp"
#include "support.hpp"

using namespace dentatlas;
using testing_support::cube_geometry;

namespace {

VolumeGrid random_volume(const GridGeometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  VolumeGrid v(g);
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = u(rng);
  return v;
}

DisplacementField random_field(const GridGeometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> u(0.0, 1.0);
  DisplacementField f(g);
  for (auto& v : f.vectors) v = Vec3(u(rng), u(rng), u(rng));
  return f;
}

AffineTransform rotation_about(const Vec3& axis, double angle, const Vec3& center) {
  AffineTransform t;
  t.linear = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  t.center = center;
  return t;
}

RegistrationSchedule quick_schedule() {
  RegistrationSchedule s;
  s.shrink_factors = {2, 1};
  s.smoothing_sigmas_voxels = {1, 0};
  s.max_iterations = {20, 10};
  s.cc_window_radius = 2;
  return s;
}

Vec3 centroid(const VolumeGrid& v) {
  const auto& g = v.geometry();
  Vec3 acc = Vec3::Zero();
  double w = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        acc += v(i, j, k) * g.physical_point(i, j, k);
        w += v(i, j, k);
      }
  return acc / w;
}

const PhantomTemplate& small_phantom() {
  static const PhantomTemplate t = generate_template(2, {40, 40, 40}, 0.6);
  return t;
}

ChannelPair phantom_channels(const VolumeGrid& intensity, const LabelGrid& labels) {
  return {intensity, reassign_label_intensities(labels, default_reassignment_table()), 0.5, 0.5};
}

}  // namespace

TEST_CASE("initial templates are voxelwise means") {
  const auto g = cube_geometry(6);
  const auto a = random_volume(g, 1), b = random_volume(g, 2), c = random_volume(g, 3);
  SUBCASE("identical images") {
    const auto t = initialize_templates({{a, b, 0.5, 0.5}, {a, b, 0.5, 0.5}, {a, b, 0.5, 0.5}});
    for (std::size_t n = 0; n < a.size(); ++n) {
      CHECK(t.intensity_template[n] == doctest::Approx(a[n]).epsilon(1e-7));
      CHECK(t.guidance_template[n] == doctest::Approx(b[n]).epsilon(1e-7));
    }
    CHECK(t.generation == 0);
  }
  SUBCASE("independent accumulation") {
    const auto t = initialize_templates({{a, c, 0.5, 0.5}, {b, a, 0.5, 0.5}, {c, b, 0.5, 0.5}});
    for (std::size_t n = 0; n < a.size(); ++n) {
      const double mi = (static_cast<double>(a[n]) + b[n] + c[n]) / 3.0;
      CHECK(t.intensity_template[n] == static_cast<float>(mi));
      CHECK(t.guidance_template[n] == static_cast<float>(mi));
    }
  }
  SUBCASE("union lattice for shifted inputs") {
    const auto shifted = cube_geometry(6, 1.0, Vec3(2, 0, 0));
    VolumeGrid d(shifted);
    for (std::size_t n = 0; n < d.size(); ++n) d[n] = 1.0f;
    VolumeGrid e(g);
    for (std::size_t n = 0; n < e.size(); ++n) e[n] = 1.0f;
    const auto t = initialize_templates({{e, e, 0.5, 0.5}, {d, d, 0.5, 0.5}});
    const auto& tg = t.intensity_template.geometry();
    CHECK(tg.dims == Index3{8, 6, 6});
    CHECK(t.intensity_template(0, 0, 0) == doctest::Approx(0.5));
    CHECK(t.intensity_template(3, 2, 2) == doctest::Approx(1.0));
    CHECK(t.intensity_template(7, 2, 2) == doctest::Approx(0.5));
  }
  CHECK_THROWS_AS(initialize_templates({}), Error);
}

TEST_CASE("affine averaging in log space") {
  const Vec3 c(1, 2, 3);
  SUBCASE("identities") {
    AffineTransform id;
    id.center = c;
    const auto m = average_affine_transforms({id, id, id});
    CHECK((m.linear - Eigen::Matrix3d::Identity()).norm() < 1e-14);
    CHECK(m.translation.norm() < 1e-14);
  }
  SUBCASE("translations") {
    AffineTransform a, b;
    a.translation = Vec3(1, 0, 2);
    b.translation = Vec3(3, -4, 0);
    const auto m = average_affine_transforms({a, b});
    CHECK((m.translation - Vec3(2, -2, 1)).norm() < 1e-14);
    CHECK((m.linear - Eigen::Matrix3d::Identity()).norm() < 1e-14);
  }
  SUBCASE("opposite rotations cancel") {
    const Vec3 axis(1, 2, -1);
    const auto m = average_affine_transforms({rotation_about(axis, 0.3, c), rotation_about(axis, -0.3, c)});
    CHECK((m.linear - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(m.translation.norm() < 1e-12);
  }
  SUBCASE("rotations about one axis average their angles") {
    const Vec3 axis(0, 0, 1);
    const auto m = average_affine_transforms({rotation_about(axis, 0.1, c), rotation_about(axis, 0.5, c)});
    CHECK((m.linear - rotation_about(axis, 0.3, c).linear).norm() < 1e-12);
  }
  SUBCASE("later centres do not change the mean map") {
    const AffineTransform a = rotation_about(Vec3(0, 1, 0), 0.2, c);
    const AffineTransform b = rotation_about(Vec3(0, 1, 0), -0.1, Vec3(-5, 4, 0));
    const auto m1 = average_affine_transforms({a, b});
    const auto m2 = average_affine_transforms({a, b.recentered(Vec3(9, 9, 9))});
    const Vec3 p(3, -1, 2);
    CHECK((m1.apply(p) - m2.apply(p)).norm() < 1e-12);
  }
  SUBCASE("failures") {
    AffineTransform flip;
    flip.linear = Eigen::Vector3d(-1, 1, 1).asDiagonal();
    try {
      average_affine_transforms({flip});
      FAIL("expected an averaging failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kAveragingFailure);
    }
    const AffineTransform half_turn = rotation_about(Vec3(0, 0, 1), std::numbers::pi, c);
    try {
      average_affine_transforms({half_turn});
      FAIL("expected an averaging failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kAveragingFailure);
    }
    CHECK_THROWS_AS(average_affine_transforms({}), Error);
  }
}

TEST_CASE("displacement field averaging") {
  const auto g = cube_geometry(5);
  const auto f = random_field(g, 4), h = random_field(g, 5), k = random_field(g, 6);
  DisplacementField neg(g);
  for (std::size_t n = 0; n < neg.vectors.size(); ++n) neg.vectors[n] = -f.vectors[n];
  for (const auto& v : average_displacement_fields({f, neg}).vectors) CHECK(v.norm() == 0.0);
  const auto same = average_displacement_fields({f, f});
  for (std::size_t n = 0; n < f.vectors.size(); ++n) CHECK((same.vectors[n] - f.vectors[n]).norm() < 1e-15);
  const auto m = average_displacement_fields({f, h, k});
  for (std::size_t n = 0; n < f.vectors.size(); ++n) {
    for (int a = 0; a < 3; ++a) {
      const double expected = (f.vectors[n][a] + h.vectors[n][a] + k.vectors[n][a]) / 3.0;
      CHECK(m.vectors[n][a] == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(average_displacement_fields({f, random_field(cube_geometry(4), 1)}), Error);
}

TEST_CASE("shape update") {
  const auto g = cube_geometry(24);
  const auto blob = testing_support::blob_volume(g, 8, 5);
  TemplatePair t{blob, blob, 3};
  SUBCASE("identity update") {
    const auto u = apply_shape_update(t, AffineTransform{}, DisplacementField(g), 0.25);
    CHECK(u.generation == 4);
    for (std::size_t n = 0; n < blob.size(); ++n) CHECK(u.intensity_template[n] == doctest::Approx(blob[n]).epsilon(1e-12));
  }
  SUBCASE("constant field, full step") {
    const Vec3 c(1.5, -0.5, 0.75);
    const auto u = apply_shape_update(t, AffineTransform{}, DisplacementField::constant(g, c), 1.0);
    const auto oracle = warp_volume(blob, DisplacementField::constant(g, -c));
    for (std::size_t n = 0; n < blob.size(); ++n) CHECK(u.intensity_template[n] == oracle[n]);
    CHECK((centroid(u.intensity_template) - centroid(blob) - c).norm() < 0.1);
  }
  SUBCASE("quarter steps accumulate") {
    const Vec3 c(2.0, 0.0, -1.0);
    TemplatePair cur = t;
    for (int s = 0; s < 4; ++s) cur = apply_shape_update(cur, AffineTransform{}, DisplacementField::constant(g, c), 0.25);
    CHECK(cur.generation == 7);
    CHECK((centroid(cur.intensity_template) - centroid(blob) - c).norm() < 0.15);
  }
  SUBCASE("update then its negation returns the template") {
    DisplacementField field(g);
    for (int k = 0; k < 24; ++k)
      for (int j = 0; j < 24; ++j)
        for (int i = 0; i < 24; ++i) {
          const Vec3 p = g.physical_point(i, j, k);
          field.at(i, j, k) = 0.6 * Vec3(std::sin(p.y() / 5.0), std::cos(p.z() / 6.0), std::sin(p.x() / 4.0));
        }
    AffineTransform a = rotation_about(Vec3(1, 1, 0), 0.02, Vec3::Constant(11.5));
    a.translation = Vec3(0.3, -0.2, 0.1);
    const auto forward = apply_shape_update(t, a, field, 1.0);
    DisplacementField neg(g);
    for (std::size_t n = 0; n < neg.vectors.size(); ++n) neg.vectors[n] = -field.vectors[n];
    const auto back = apply_shape_update(forward, a.inverse(), neg, 1.0);
    double diff = 0.0;
    std::size_t count = 0;
    float lo = blob[0], hi = blob[0];
    for (std::size_t n = 0; n < blob.size(); ++n) {
      lo = std::min(lo, blob[n]);
      hi = std::max(hi, blob[n]);
    }
    for (int k = 3; k < 21; ++k)
      for (int j = 3; j < 21; ++j)
        for (int i = 3; i < 21; ++i) {
          diff += std::abs(back.intensity_template(i, j, k) - blob(i, j, k));
          ++count;
        }
    CHECK(diff / count < 1e-2 * (hi - lo));
  }
  CHECK_THROWS_AS(apply_shape_update(t, AffineTransform{}, DisplacementField(g), 0.0), Error);
  CHECK_THROWS_AS(apply_shape_update(t, AffineTransform{}, DisplacementField(g), 1.5), Error);
  CHECK_THROWS_AS(apply_shape_update(t, AffineTransform{}, DisplacementField(cube_geometry(5)), 0.5), Error);
}

TEST_CASE("atlas of identical subjects is stationary") {
  const auto& p = small_phantom();
  const ChannelPair subject = phantom_channels(p.intensity, p.labels);
  AtlasRun run;
  run.cohort = {subject, subject};
  run.schedule = quick_schedule();
  run.outer_iterations = 2;
  const auto r = build_atlas(run);
  CHECK(r.templates.generation == 2);
  REQUIRE(r.trace.size() == 2);
  double worst = 0.0;
  for (std::size_t n = 0; n < p.intensity.size(); ++n) {
    worst = std::max(worst, static_cast<double>(std::abs(r.templates.intensity_template[n] - p.intensity[n])));
    worst = std::max(worst, static_cast<double>(std::abs(r.templates.guidance_template[n] - subject.guidance[n])));
  }
  CHECK(worst < 1e-3);
  for (const auto& f : r.fields) {
    CHECK(f.forward.max_norm_voxels() < 0.1);
    CHECK(f.inverse.max_norm_voxels() < 0.1);
  }
  for (const auto& rec : r.trace) CHECK(rec.mean_field_norm < 0.1);
  const auto labels = atlas_labels(r, {p.labels, p.labels});
  CHECK(dice_coefficient(labels, p.labels) > 0.97);

  const auto dir = std::filesystem::temp_directory_path() / "dentatlas_trace_test";
  std::filesystem::create_directories(dir);
  write_trace_csv(dir / "trace.csv", r.trace);
  std::ifstream in(dir / "trace.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "iteration,mean_metric,mean_field_norm");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("atlas run validation") {
  const auto g = cube_geometry(8);
  const auto v = random_volume(g, 1);
  AtlasRun run;
  run.cohort = {{v, v, 0.5, 0.5}};
  CHECK_THROWS_AS(build_atlas(run), Error);
  run.cohort.push_back(run.cohort.front());
  run.outer_iterations = 0;
  CHECK_THROWS_AS(build_atlas(run), Error);
  run.outer_iterations = 1;
  run.shape_update_step = 0.0;
  CHECK_THROWS_AS(build_atlas(run), Error);
}

TEST_CASE("label assignment by maximal Dice") {
  const auto& p = small_phantom();
  SUBCASE("self assignment") {
    const auto r = assign_labels(p.labels, p.labels);
    CHECK(r.teeth.size() == 28);
    CHECK(r.success_rate == 1.0);
    for (const auto& t : r.teeth) CHECK(t.dice == 1.0);
  }
  SUBCASE("permutation equivariance") {
    std::map<std::uint16_t, std::uint16_t> perm;
    const auto& fdi = fdi_labels_sorted();
    for (std::size_t i = 0; i < fdi.size(); ++i) perm[fdi[i]] = fdi[(i + 5) % fdi.size()];
    LabelGrid relabelled = p.labels;
    for (std::size_t n = 0; n < relabelled.size(); ++n) {
      if (relabelled[n] != 0) relabelled[n] = perm[relabelled[n]];
    }
    const auto a = assign_labels(p.labels, p.labels);
    const auto b = assign_labels(relabelled, p.labels);
    REQUIRE(a.teeth.size() == b.teeth.size());
    for (std::size_t i = 0; i < a.teeth.size(); ++i) {
      CHECK(b.teeth[i].assigned == perm[a.teeth[i].assigned]);
      CHECK(b.teeth[i].dice == a.teeth[i].dice);
    }
    CHECK(b.success_rate == 0.0);
  }
  SUBCASE("no overlap leaves a tooth unassigned") {
    LabelGrid empty(p.labels.geometry());
    const auto r = assign_labels(empty, p.labels);
    for (const auto& t : r.teeth) {
      CHECK(t.assigned == 0);
      CHECK_FALSE(t.success);
    }
  }
}

TEST_CASE("self label transfer succeeds everywhere") {
  const auto& p = small_phantom();
  const ChannelPair c = phantom_channels(p.intensity, p.labels);
  const auto r = atlas_label_transfer(p.labels, c, p.labels, c, quick_schedule());
  CHECK(r.success_rate == 1.0);
  for (const auto& t : r.teeth) CHECK(t.dice == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pooled labelling success rate") {
  std::mt19937_64 rng(12);
  std::vector<LabelTransferResult> results(5);
  std::size_t total = 0, ok = 0;
  for (auto& r : results) {
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      ToothAssignment t;
      t.success = rng() % 3 != 0;
      r.teeth.push_back(t);
      ++total;
      if (t.success) ++ok;
    }
  }
  CHECK(labeling_success_rate(results) == static_cast<double>(ok) / static_cast<double>(total));
  LabelTransferResult all, half;
  all.teeth.assign(4, ToothAssignment{11, 11, 1.0, true});
  half.teeth = {ToothAssignment{11, 11, 1.0, true}, ToothAssignment{12, 0, 0.0, false}};
  CHECK(labeling_success_rate({all}) == 1.0);
  CHECK(labeling_success_rate({half}) == 0.5);
  CHECK_THROWS_AS(labeling_success_rate({}), Error);
}
