#include <benchmark/benchmark.h>

#include <numbers>

#include "se3reg/correspondence.hpp"
#include "se3reg/multiview.hpp"
#include "se3reg/pairwise.hpp"
#include "se3reg/rng.hpp"
#include "se3reg/synthbench.hpp"

using namespace se3reg;

namespace {

bench::SyntheticPair make_pair(std::size_t points) {
  const auto model = bench::make_model(bench::ModelKind::Sphere, points, 1);
  bench::PairOptions opts;
  opts.angle_max = std::numbers::pi / 6;
  opts.sigma_rel = 0.0025;
  opts.outlier_fraction = 0.3;
  return bench::generate_pair(model, opts, 7);
}

}  // namespace

static void BM_ExpLogRoundtrip(benchmark::State& state) {
  Rng rng(3);
  std::vector<Twist> twists;
  for (int k = 0; k < 1024; ++k) {
    twists.push_back({rng.unit_vector() * rng.uniform(0.0, 3.0),
                      rng.unit_vector() * rng.uniform(0.0, 2.0)});
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const Twist back = log_se3(exp_se3(twists[i++ & 1023]));
    benchmark::DoNotOptimize(back);
  }
}
BENCHMARK(BM_ExpLogRoundtrip);

static void BM_BuildLinearTerms(benchmark::State& state) {
  const auto pair = make_pair(static_cast<std::size_t>(state.range(0)));
  const RigidMotion m;
  for (auto _ : state) {
    auto terms = build_linear_terms(pair.corrs, m);
    benchmark::DoNotOptimize(terms);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildLinearTerms)->Arg(1000)->Arg(10000);

static void BM_IrlsSolve(benchmark::State& state) {
  const auto pair = make_pair(1000);
  const auto terms = build_linear_terms(pair.corrs, RigidMotion{});
  for (auto _ : state) {
    const Twist v = irls_solve(terms, LossKind::l_half(),
                               static_cast<int>(state.range(0)), 1e-12);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_IrlsSolve)->Arg(1)->Arg(2)->Arg(3);

static void BM_EstimatePairwise(benchmark::State& state) {
  const auto pair = make_pair(static_cast<std::size_t>(state.range(0)));
  SolverConfig config;
  config.residual_floor = 1e-12 * pair.diameter;
  for (auto _ : state) {
    const auto result = estimate_pairwise(pair.corrs, config);
    benchmark::DoNotOptimize(result);
  }
  state.SetLabel("motion step, S=" + std::to_string(state.range(0)));
}
BENCHMARK(BM_EstimatePairwise)->Arg(1000)->Arg(10000)
    ->Unit(benchmark::kMillisecond);

static void BM_NearestNeighbor(benchmark::State& state) {
  const auto cloud =
      bench::make_model(bench::ModelKind::Blobs,
                        static_cast<std::size_t>(state.range(0)), 5);
  const SpatialIndex index(cloud);
  Rng rng(11);
  std::vector<Vec3> queries;
  for (int k = 0; k < 1024; ++k) queries.push_back(rng.normal3(1.0));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto hit = index.nearest(queries[i++ & 1023]);
    benchmark::DoNotOptimize(hit);
  }
}
BENCHMARK(BM_NearestNeighbor)->Arg(10000)->Arg(100000);

static void BM_EstimateMultiview(benchmark::State& state) {
  const auto model = bench::make_model(bench::ModelKind::Blobs, 600, 2);
  bench::ViewSetOptions opts;
  opts.views = static_cast<int>(state.range(0));
  opts.ring_edges = true;
  opts.pairs_per_edge = 300;
  opts.sigma_rel = 0.0025;
  opts.outlier_fraction = 0.3;
  const auto set = bench::generate_viewset(model, opts, 3);
  SolverConfig config;
  config.k_irls = 3;
  config.epsilon = 1e-7;
  config.residual_floor = 1e-12 * set.diameter;
  for (auto _ : state) {
    const auto result = estimate_multiview(set.graph, config);
    benchmark::DoNotOptimize(result);
  }
}
BENCHMARK(BM_EstimateMultiview)->Arg(6)->Arg(12)
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
