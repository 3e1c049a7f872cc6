#include <benchmark/benchmark.h>

#include <cmath>

#include "dentatlas/phantom.hpp"
#include "dentatlas/register.hpp"
#include "dentatlas/shape.hpp"

using namespace dentatlas;

namespace {

const PhantomTemplate& phantom() {
  static const PhantomTemplate t = generate_template(1, {64, 64, 64}, 0.4);
  return t;
}

const PhantomSubject& subject() {
  static const PhantomSubject s = synthesize_subject(phantom(), 5, 2.0, 0.02);
  return s;
}

Eigen::MatrixXd points_of(const SurfaceMesh& m) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(m.vertices.size()), 3);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = m.vertices[i].transpose();
  return p;
}

}  // namespace

static void BM_LocalCc(benchmark::State& state) {
  const auto& a = phantom().intensity;
  const auto& b = subject().intensity;
  const int radius = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(local_cc(a, b, radius).metric);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.size()));
}
BENCHMARK(BM_LocalCc)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_WarpVolume(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(warp_volume(phantom().intensity, subject().field));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(phantom().intensity.size()));
}
BENCHMARK(BM_WarpVolume)->Unit(benchmark::kMillisecond);

static void BM_InvertField(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(invert_field(subject().field));
}
BENCHMARK(BM_InvertField)->Unit(benchmark::kMillisecond);

static void BM_MarchingCubes(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(extract_surface(phantom().labels, std::uint16_t{36}));
}
BENCHMARK(BM_MarchingCubes)->Unit(benchmark::kMillisecond);

static void BM_SurfaceDistance(benchmark::State& state) {
  const SurfaceMesh a = phantom().meshes.at(36);
  const SurfaceMesh b = extract_surface(subject().labels, std::uint16_t{36});
  for (auto _ : state) benchmark::DoNotOptimize(symmetric_surface_distance(a, b));
}
BENCHMARK(BM_SurfaceDistance)->Unit(benchmark::kMillisecond);

static void BM_CpdNonrigid(benchmark::State& state) {
  const Eigen::MatrixXd y = points_of(phantom().meshes.at(36));
  const Eigen::MatrixXd x = points_of(extract_surface(subject().labels, std::uint16_t{36}));
  CpdConfig cfg;
  cfg.max_points = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cpd_nonrigid(y, x, cfg).sigma2);
}
BENCHMARK(BM_CpdNonrigid)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
