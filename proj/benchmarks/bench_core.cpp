#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>

#include "lunasim/mapping/grid_codec.hpp"
#include "lunasim/mapping/merge.hpp"
#include "lunasim/mapping/scan_integrator.hpp"
#include "lunasim/nav/planner.hpp"
#include "lunasim/rover/rover.hpp"
#include "lunasim/scenario/mission.hpp"
#include "lunasim/scenario/scenario.hpp"
#include "lunasim/sim/kernel.hpp"
#include "merge_pairs.hpp"
#include "synthetic.hpp"

using namespace lunasim;

namespace {

std::string read_scenario(const char* name) {
  std::ifstream in(std::string(LUNASIM_SCENARIO_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const world::GroundTruthGrid& esric_truth() {
  static const auto truth = world::load_world(scenario::parse_scenario_text(read_scenario("esa_esric_final.scn")).world);
  return truth;
}

rover::Rover make_rover(Pose2 start) {
  rover::RoverConfig c;
  c.name = "leo1";
  c.start = start;
  return rover::Rover(c, sim::RngStream(1, "bench"));
}

}  // namespace

static void BM_Raycast360(benchmark::State& state) {
  const auto& truth = esric_truth();
  for (auto _ : state) {
    int hits = 0;
    for (int i = 0; i < 360; ++i) hits += world::raycast(truth, {24.0, 14.0}, i * 0.0174533, 8.0).has_value();
    benchmark::DoNotOptimize(hits);
  }
  state.SetItemsProcessed(state.iterations() * 360);
}
BENCHMARK(BM_Raycast360);

static void BM_ScanIntegrate(benchmark::State& state) {
  const auto& truth = esric_truth();
  auto r = make_rover({24.0, 14.0, 0.0});
  const auto scan = r.sense_scan(truth);
  mapping::OccupancyGrid grid({14.0, 4.0, 0.0}, 0.1, 200, 200);
  mapping::ScanIntegrator integrator;
  for (auto _ : state) {
    integrator.integrate(grid, r.odom_pose(), scan);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan.beams()));
}
BENCHMARK(BM_ScanIntegrate);

static void BM_PlanAcrossArena(benchmark::State& state) {
  const auto& truth = esric_truth();
  const auto grid = testing::observe(truth, {}, {}, truth.cols(), truth.rows(), [](Vec2) { return true; });
  const nav::CostMap costs(grid, {});
  const double r = grid.resolution();
  const CellIndex start{static_cast<int>(3.0 / r), static_cast<int>(3.0 / r)};
  const CellIndex goal{static_cast<int>(47.0 / r), static_cast<int>(33.0 / r)};
  std::size_t expansions = 0;
  for (auto _ : state) {
    const auto res = nav::plan(costs, start, goal, r);
    expansions = res.expansions;
    benchmark::DoNotOptimize(res.path.length_m);
  }
  state.counters["expansions"] = static_cast<double>(expansions);
}
BENCHMARK(BM_PlanAcrossArena)->Unit(benchmark::kMillisecond);

static void BM_MatchAndEstimate(benchmark::State& state) {
  sim::RngStream rng(11, "bench.merge");
  const auto pair = testing::make_map_pair(rng, true);
  for (auto _ : state) {
    const auto res = mapping::match_and_estimate(pair.a, pair.b);
    benchmark::DoNotOptimize(res.status);
  }
}
BENCHMARK(BM_MatchAndEstimate)->Unit(benchmark::kMillisecond);

static void BM_MergeThreeMaps(benchmark::State& state) {
  const auto& truth = esric_truth();
  const auto full = testing::observe(truth, {}, {}, truth.cols(), truth.rows(), [](Vec2) { return true; });
  const mapping::OccupancyGrid base({0.0, 0.0, 0.0}, 0.1, truth.cols(), truth.rows());
  std::vector<mapping::LocalMap> locals;
  for (int i = 0; i < 3; ++i) locals.push_back({&full, Pose2{}});
  for (auto _ : state) {
    auto merged = mapping::merge(base, locals);
    benchmark::DoNotOptimize(merged.grid.width());
  }
}
BENCHMARK(BM_MergeThreeMaps)->Unit(benchmark::kMillisecond);

static void BM_GridCodecRoundTrip(benchmark::State& state) {
  const auto& truth = esric_truth();
  const auto full = testing::observe(truth, {}, {}, truth.cols(), truth.rows(), [](Vec2) { return true; });
  std::size_t size = 0;
  for (auto _ : state) {
    const auto bytes = mapping::encode_grid(full);
    size = bytes.size();
    auto back = mapping::decode_grid(bytes);
    benchmark::DoNotOptimize(back.width());
  }
  state.counters["encoded_bytes"] = static_cast<double>(size);
}
BENCHMARK(BM_GridCodecRoundTrip);

static void BM_KernelEvents(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    sim::Kernel k(1);
    const auto h = k.register_handler("bench");
    std::uint64_t fired = 0;
    for (int i = 0; i < n; ++i) k.schedule(i * 1e-3, h, [&fired] { ++fired; });
    k.run_until(n * 1e-3);
    benchmark::DoNotOptimize(fired);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_KernelEvents)->Arg(1 << 16);

static void BM_MinimalMission(benchmark::State& state) {
  const auto text = read_scenario("minimal.scn");
  for (auto _ : state) {
    scenario::Mission m(text);
    m.run();
    benchmark::DoNotOptimize(m.log().checksum());
  }
  state.counters["sim_s_per_wall_s"] = benchmark::Counter(600.0 * static_cast<double>(state.iterations()),
                                                          benchmark::Counter::kIsRate);
}
BENCHMARK(BM_MinimalMission)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
