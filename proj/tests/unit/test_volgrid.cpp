#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "dentatlas/volgrid.hpp"
#include "support.hpp"

using namespace dentatlas;
using testing_support::cube_geometry;

TEST_CASE("resample at the input spacing is bitwise identity") {
  const auto v = testing_support::blob_volume(cube_geometry(12, 0.5), 3);
  CHECK(resample_trilinear(v, Vec3::Constant(0.5)) == v);
}

TEST_CASE("resample of a constant volume is constant inside the domain") {
  const VolumeGrid v(cube_geometry(5, 1.0), 2.5f);
  const auto out = resample_trilinear(v, Vec3(0.3, 0.7, 0.45));
  const auto& g = out.geometry();
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 p = g.physical_point(i, j, k);
        if ((p.array() <= 4.0).all()) CHECK(out(i, j, k) == doctest::Approx(2.5).epsilon(1e-6));
      }
}

TEST_CASE("2x2x2 grid upsampled to half spacing matches hand trilinear weights") {
  GridGeometry g = cube_geometry(2, 0.8, Vec3(1.0, -2.0, 0.5));
  const std::vector<float> corners{1, 2, 3, 4, 5, 6, 7, 8};
  const VolumeGrid v(g, corners);
  const auto out = resample_trilinear(v, Vec3::Constant(0.4));
  REQUIRE(out.dims() == Index3{4, 4, 4});
  CHECK(out.geometry().origin == g.origin);
  auto oracle = [&](double fx, double fy, double fz) {
    double s = 0.0;
    for (int c = 0; c < 8; ++c) {
      const int i = c & 1, j = (c >> 1) & 1, k = (c >> 2) & 1;
      s += corners[c] * (i ? fx : 1 - fx) * (j ? fy : 1 - fy) * (k ? fz : 1 - fz);
    }
    return s;
  };
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        if (i == 3 || j == 3 || k == 3) {
          CHECK(out(i, j, k) == 0.0f);
        } else {
          CHECK(out(i, j, k) == doctest::Approx(oracle(0.5 * i, 0.5 * j, 0.5 * k)).epsilon(1e-6));
        }
      }
}

TEST_CASE("resample rejects non-positive spacing") {
  const VolumeGrid v(cube_geometry(3));
  CHECK_THROWS_AS(resample_trilinear(v, Vec3(1.0, 0.0, 1.0)), Error);
}

TEST_CASE("normalize_intensity") {
  GridGeometry g;
  g.dims = {3, 1, 1};
  const auto out = normalize_intensity(VolumeGrid(g, std::vector<float>{100, 300, 500}));
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == doctest::Approx(0.5));
  CHECK(out[2] == 1.0f);

  const VolumeGrid unit(g, std::vector<float>{0.0f, 0.25f, 1.0f});
  CHECK(normalize_intensity(unit) == unit);

  CHECK_THROWS_AS(normalize_intensity(VolumeGrid(g, 4.0f)), Error);

  std::mt19937 rng(11);
  std::uniform_real_distribution<float> dist(-50.0f, 80.0f);
  GridGeometry h = cube_geometry(6);
  std::vector<float> values(h.voxel_count());
  for (auto& x : values) x = dist(rng);
  const auto n = normalize_intensity(VolumeGrid(h, values));
  CHECK(*std::min_element(n.data().begin(), n.data().end()) == 0.0f);
  CHECK(*std::max_element(n.data().begin(), n.data().end()) == 1.0f);
  std::vector<std::size_t> order_in(values.size()), order_out(values.size());
  std::iota(order_in.begin(), order_in.end(), 0);
  order_out = order_in;
  std::stable_sort(order_in.begin(), order_in.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::stable_sort(order_out.begin(), order_out.end(), [&](auto a, auto b) { return n[a] < n[b]; });
  CHECK(order_in == order_out);
}

TEST_CASE("bounding box of labels") {
  LabelGrid l(cube_geometry(10));
  CHECK_THROWS_AS(bounding_box_of_labels(l), Error);
  l(5, 6, 7) = 11;
  CHECK(bounding_box_of_labels(l) == VoxelBox{{5, 6, 7}, {5, 6, 7}});

  LabelGrid full(cube_geometry(4), 21);
  CHECK(bounding_box_of_labels(full) == VoxelBox{{0, 0, 0}, {3, 3, 3}});

  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    GridGeometry g;
    g.dims = {9, 7, 11};
    LabelGrid r(g);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(g.voxel_count()) - 1);
    for (int s = 0; s < 4; ++s) r[pick(rng)] = 31;
    VoxelBox brute{{99, 99, 99}, {-1, -1, -1}};
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i) {
          if (!r(i, j, k)) continue;
          const int idx[3] = {i, j, k};
          for (int a = 0; a < 3; ++a) {
            brute.min[a] = std::min(brute.min[a], idx[a]);
            brute.max[a] = std::max(brute.max[a], idx[a]);
          }
        }
    CHECK(bounding_box_of_labels(r) == brute);
  }
}

TEST_CASE("crop_with_margin") {
  GridGeometry g = cube_geometry(20, 0.4, Vec3(3.0, -1.0, 2.0));
  VolumeGrid v = testing_support::blob_volume(g, 9);
  const VoxelBox box{{4, 5, 6}, {8, 9, 10}};

  const auto exact = crop_with_margin(v, box, 0);
  CHECK(exact.dims() == Index3{5, 5, 5});
  CHECK(exact(0, 0, 0) == v(4, 5, 6));

  const auto corner = crop_with_margin(v, VoxelBox{{0, 0, 0}, {2, 2, 2}}, 30);
  CHECK(corner.dims() == Index3{20, 20, 20});
  CHECK(corner.geometry().origin == g.origin);

  const auto cropped = crop_with_margin(v, box, 3);
  const auto& cg = cropped.geometry();
  for (int k = 0; k < cg.dims[2]; ++k)
    for (int j = 0; j < cg.dims[1]; ++j)
      for (int i = 0; i < cg.dims[0]; ++i) {
        const Vec3 p = cg.physical_point(i, j, k);
        const Vec3 c = g.continuous_index(p);
        const int si = static_cast<int>(std::lround(c.x())), sj = static_cast<int>(std::lround(c.y())),
                  sk = static_cast<int>(std::lround(c.z()));
        CHECK((g.physical_point(si, sj, sk) - p).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(cropped(i, j, k) == v(si, sj, sk));
      }
}

TEST_CASE("crop arithmetic for a 400^3 grid with margin 30") {
  // Index arithmetic only: expand_box does the work for crop_with_margin.
  const VoxelBox region = expand_box(VoxelBox{{40, 40, 40}, {60, 60, 60}}, 30, Index3{400, 400, 400});
  CHECK(region == VoxelBox{{10, 10, 10}, {90, 90, 90}});
  CHECK(region.max[0] - region.min[0] + 1 == 81);
}

namespace {

LabelGrid brute_dilate(const LabelGrid& l, int r) {
  const auto& g = l.geometry();
  LabelGrid out(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (!l(i, j, k)) continue;
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              if (dx * dx + dy * dy + dz * dz > r * r) continue;
              if (g.contains_index(i + dx, j + dy, k + dz)) out(i + dx, j + dy, k + dz) = 1;
            }
      }
  return out;
}

}  // namespace

TEST_CASE("dilate_labels with a Euclidean ball") {
  LabelGrid single(cube_geometry(7));
  single(3, 3, 3) = 12;
  CHECK(dilate_labels(single, 0)(3, 3, 3) == 1);
  const auto one = dilate_labels(single, 1);
  CHECK(std::count(one.data().begin(), one.data().end(), 1) == 7);

  std::mt19937 rng(17);
  GridGeometry g;
  g.dims = {17, 14, 12};
  LabelGrid r(g);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(g.voxel_count()) - 1);
  for (int s = 0; s < 6; ++s) r[pick(rng)] = 44;
  LabelGrid previous = dilate_labels(r, 0);
  for (int radius : {1, 2, 3, 5}) {
    const auto d = dilate_labels(r, radius);
    CHECK(d == brute_dilate(r, radius));
    for (std::size_t n = 0; n < d.size(); ++n) {
      if (previous[n]) CHECK(d[n] == 1);
    }
    previous = d;
  }
}

TEST_CASE("mask_by_labels") {
  const auto v = testing_support::blob_volume(cube_geometry(6), 4);
  CHECK(mask_by_labels(v, LabelGrid(v.geometry(), 1)) == v);
  CHECK(mask_by_labels(v, LabelGrid(v.geometry(), 0)) == VolumeGrid(v.geometry(), 0.0f));
  std::mt19937 rng(2);
  LabelGrid m(v.geometry());
  for (std::size_t n = 0; n < m.size(); ++n) m[n] = static_cast<std::uint16_t>(rng() & 1u);
  const auto out = mask_by_labels(v, m);
  for (std::size_t n = 0; n < m.size(); ++n) CHECK(out[n] == v[n] * static_cast<float>(m[n]));
  CHECK_THROWS_AS(mask_by_labels(v, LabelGrid(cube_geometry(5), 1)), Error);
}

TEST_CASE("reassignment table") {
  const auto table = default_reassignment_table();
  CHECK(table.size() == 28);
  const auto pairs = adjacent_tooth_pairs();
  CHECK(pairs.size() == 26);
  for (const auto& [a, b] : pairs) CHECK(std::abs(table.at(a) - table.at(b)) >= 0.4f);

  LabelGrid empty(cube_geometry(3));
  CHECK(reassign_label_intensities(empty, table) == VolumeGrid(empty.geometry(), 0.0f));

  LabelGrid two(cube_geometry(4));
  for (std::size_t n = 0; n < two.size(); ++n) two[n] = n % 3 == 0 ? 0 : (n % 3 == 1 ? 11 : 12);
  const auto out = reassign_label_intensities(two, table);
  for (std::size_t n = 0; n < two.size(); ++n) CHECK(out[n] == (two[n] ? table.at(two[n]) : 0.0f));

  ReassignmentTable partial = table;
  partial.erase(12);
  try {
    reassign_label_intensities(two, partial);
    FAIL("expected a missing-label error");
  } catch (const MissingLabelError& e) {
    CHECK(e.label() == 12);
  }
}

TEST_CASE("enhancement is deterministic") {
  GridGeometry g = cube_geometry(40);
  const auto v = testing_support::blob_volume(g, 21);
  LabelGrid l(g);
  for (int k = 15; k < 22; ++k)
    for (int j = 15; j < 25; ++j)
      for (int i = 12; i < 20; ++i) l(i, j, k) = 11;
  for (int k = 15; k < 22; ++k)
    for (int j = 15; j < 25; ++j)
      for (int i = 21; i < 28; ++i) l(i, j, k) = 21;
  EnhancementConfig cfg = EnhancementConfig::defaults();
  cfg.margin_voxels = 4;
  cfg.dilation_radius_voxels = 2;
  const auto a = enhance(v, l, cfg);
  const auto b = enhance(v, l, cfg);
  CHECK(a.intensity == b.intensity);
  CHECK(a.guidance == b.guidance);
  CHECK(a.crop_region == VoxelBox{{8, 11, 11}, {31, 28, 25}});
  CHECK(a.intensity.dims() == Index3{24, 18, 15});
}

TEST_CASE("dice coefficient") {
  GridGeometry g = cube_geometry(6);
  LabelGrid a(g), b(g);
  CHECK_THROWS_AS(dice_coefficient(a, b), Error);
  for (int k = 1; k < 3; ++k)
    for (int j = 1; j < 3; ++j)
      for (int i = 1; i < 3; ++i) {
        a(i, j, k) = 1;
        b(i + 1, j, k) = 1;
      }
  CHECK(dice_coefficient(a, a) == 1.0);
  CHECK(dice_coefficient(a, b) == 0.5);
  LabelGrid c(g);
  c(5, 5, 5) = 1;
  CHECK(dice_coefficient(a, c) == 0.0);
  CHECK(dice_coefficient(a, b) == dice_coefficient(b, a));
}
