#include <doctest.h>

#include <set>

#include "dentatlas/phantom.hpp"

using namespace dentatlas;

namespace {

const PhantomTemplate& small_template() {
  static const PhantomTemplate t = generate_template(7, {64, 64, 64}, 0.6);
  return t;
}

std::set<std::uint16_t> inventory(const LabelGrid& l) {
  std::set<std::uint16_t> s;
  for (std::size_t n = 0; n < l.size(); ++n) {
    if (l[n] != 0) s.insert(l[n]);
  }
  return s;
}

}  // namespace

TEST_CASE("template is deterministic in its seed") {
  const auto& a = small_template();
  const auto b = generate_template(7, {64, 64, 64}, 0.6);
  CHECK(a.intensity.values() == b.intensity.values());
  CHECK(a.labels.values() == b.labels.values());
  const auto c = generate_template(8, {64, 64, 64}, 0.6);
  CHECK(a.labels.values() != c.labels.values());
}

TEST_CASE("template has 28 labelled teeth with closed genus-0 surfaces") {
  const auto& t = small_template();
  const auto& fdi = fdi_labels_sorted();
  CHECK(inventory(t.labels) == std::set<std::uint16_t>(fdi.begin(), fdi.end()));
  REQUIRE(t.teeth.size() == 28);
  for (std::size_t i = 0; i < 28; ++i) CHECK(t.teeth[i].label == fdi_labels_arch_order()[i]);
  REQUIRE(t.meshes.size() == 28);
  for (const auto& [label, mesh] : t.meshes) {
    INFO("tooth " << label);
    CHECK(euler_characteristic(mesh) == 2);
    CHECK(is_closed_oriented(mesh));
  }
}

TEST_CASE("template intensities separate teeth from background away from boundaries") {
  const auto& t = small_template();
  const auto& d = t.labels.dims();
  double tooth_min = 1.0, bg_max = 0.0;
  int enamel = 0;
  for (int k = 1; k + 1 < d[2]; ++k)
    for (int j = 1; j + 1 < d[1]; ++j)
      for (int i = 1; i + 1 < d[0]; ++i) {
        const float v = t.intensity(i, j, k);
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        const std::uint16_t l = t.labels(i, j, k);
        if (l != 0 && v > 0.9f) ++enamel;
        bool uniform = true;
        for (int dk = -1; dk <= 1; ++dk)
          for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) uniform = uniform && t.labels(i + di, j + dj, k + dk) == l;
        if (!uniform) continue;
        if (l == 0) {
          bg_max = std::max(bg_max, static_cast<double>(v));
        } else {
          tooth_min = std::min(tooth_min, static_cast<double>(v));
        }
      }
  CHECK(enamel > 0);
  CHECK(tooth_min > 0.6);
  CHECK(bg_max < 0.3);
}

TEST_CASE("tooth classification matches the label grid") {
  const auto& t = small_template();
  const auto& g = t.labels.geometry();
  for (const auto& tooth : t.teeth) {
    CHECK(tooth.classify(tooth.crown_center, 0.5) == 1);
    const Vec3 apex = tooth.crown_center + tooth.frame.col(2) * (tooth.root_length * 0.5);
    CHECK(tooth.classify(apex, 0.5) == 1);
    const Vec3 far = tooth.crown_center - tooth.frame.col(2) * (2.0 * tooth.crown_half.z());
    CHECK(tooth.classify(far, 0.5) == 0);
    const Vec3 c = g.continuous_index(tooth.crown_center);
    CHECK(t.labels(static_cast<int>(std::lround(c.x())), static_cast<int>(std::lround(c.y())),
                   static_cast<int>(std::lround(c.z()))) == tooth.label);
  }
}

TEST_CASE("zero amplitude subject reproduces the template bitwise") {
  const auto& t = small_template();
  const auto s = synthesize_subject(t, 3, 0.0, 0.0);
  CHECK(s.intensity.values() == t.intensity.values());
  CHECK(s.labels.values() == t.labels.values());
  for (const auto& v : s.field.vectors) CHECK(v.norm() == 0.0);
}

TEST_CASE("deformation gradient matches finite differences") {
  const auto& t = small_template();
  const auto s = synthesize_subject(t, 11, 3.0, 0.0);
  const double h = 1e-5;
  for (const auto& tooth : t.teeth) {
    const Vec3 x = tooth.crown_center + Vec3(0.3, -0.2, 0.1);
    Eigen::Matrix3d fd;
    for (int a = 0; a < 3; ++a) {
      const Vec3 e = Vec3::Unit(a) * h;
      fd.col(a) = (s.deformation.displacement(x + e) - s.deformation.displacement(x - e)) / (2.0 * h);
    }
    CHECK((fd - s.deformation.gradient(x)).norm() < 1e-7);
  }
}

TEST_CASE("subject deformation is diffeomorphic and sized by the amplitude") {
  const auto& t = small_template();
  const auto& g = t.labels.geometry();
  for (double amp : {2.0, 4.0}) {
    const auto s = synthesize_subject(t, 5, amp, 0.02);
    CHECK(s.deformation.min_jacobian(g) > 0.0);
    double peak = 0.0;
    for (const auto& v : s.field.vectors) peak = std::max(peak, v.norm());
    CHECK(peak > 0.8 * amp * 0.6);
    CHECK(peak < 1.5 * amp * 0.6);
    CHECK(inventory(s.labels) == inventory(t.labels));
  }
}

TEST_CASE("tracked vertices are preimages of template vertices") {
  const auto& t = small_template();
  const auto s = synthesize_subject(t, 5, 2.0, 0.0);
  REQUIRE(s.tracked_vertices.size() == t.meshes.size());
  for (const auto& [label, mesh] : t.meshes) {
    const auto& tracked = s.tracked_vertices.at(label);
    REQUIRE(tracked.size() == mesh.vertices.size());
    for (std::size_t i = 0; i < tracked.size(); i += 7) {
      CHECK((tracked[i] + s.deformation.displacement(tracked[i]) - mesh.vertices[i]).norm() < 1e-9);
    }
  }
}

TEST_CASE("antithetic cohort has a vanishing mean field") {
  const auto& t = small_template();
  const auto cohort = phantom_cohort(t, 8, 21, 2.0, 0.01);
  REQUIRE(cohort.size() == 8);
  const double spacing = 0.6;
  const auto pair_mean = mean_field({cohort[0], cohort[1]});
  for (const auto& v : pair_mean.vectors) CHECK(v.norm() < 1e-9);
  const auto m = mean_field(cohort);
  double worst = 0.0;
  for (const auto& v : m.vectors) worst = std::max(worst, v.norm() / spacing);
  CHECK(worst < 0.05);
  const auto expected = inventory(t.labels);
  for (const auto& s : cohort) CHECK(inventory(s.labels) == expected);
  CHECK(cohort[0].intensity.values() != cohort[2].intensity.values());
  CHECK_THROWS_AS(phantom_cohort(t, 3, 21, 2.0, 0.0), Error);
}

TEST_CASE("phantom arguments are validated") {
  CHECK_THROWS_AS(generate_template(1, {16, 64, 64}, 0.6), Error);
  CHECK_THROWS_AS(generate_template(1, {64, 64, 64}, 0.0), Error);
  CHECK_THROWS_AS(synthesize_subject(small_template(), 1, -1.0, 0.0), Error);
  try {
    generate_template(1, {32, 32, 32}, 0.6);
    FAIL("expected overlapping teeth on a 32 voxel grid");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kGenerationFailure);
  }
}
