#include <benchmark/benchmark.h>

#include "cifuv/attack_sim.hpp"

using namespace cifuv;
using namespace cifuv::attack;

namespace {

ExperimentConfig c2_config(double select_weak, std::int64_t rounds) {
    ExperimentConfig config;
    config.seed = 7;
    config.rounds = rounds;
    config.profiles = {model::SystemProfile{"sys1", 4096.0, select_weak},
                       model::SystemProfile{"sys2", 16384.0, 1.0 - select_weak}};
    return config;
}

} // namespace

static void BM_RunRound(benchmark::State& state) {
    const auto config = c2_config(0.75, 1);
    std::uint64_t round = 0;
    for (auto _ : state) {
        SplitMix64 rng(SplitMix64::stream_seed(7, round++));
        benchmark::DoNotOptimize(run_round(config, rng));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(round));
}
BENCHMARK(BM_RunRound);

static void BM_RunExperiment1k(benchmark::State& state) {
    const auto config = c2_config(0.5, 1000);
    for (auto _ : state) benchmark::DoNotOptimize(run_experiment(config));
}
BENCHMARK(BM_RunExperiment1k)->Unit(benchmark::kMillisecond);

static void BM_PAllChosen(benchmark::State& state) {
    std::vector<model::SystemProfile> profiles;
    for (int i = 0; i < 32; ++i)
        profiles.push_back(model::SystemProfile{"s", 1024.0 + i, 1.0 / 32.0});
    for (auto _ : state) benchmark::DoNotOptimize(model::p_all_chosen(profiles));
}
BENCHMARK(BM_PAllChosen);
