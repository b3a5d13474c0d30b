// Serial reference kernels against their OpenMP counterparts, plus the lift
// re-ranker used by the power study.

#include <algorithm>
#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include "grs/kernels.hpp"
#include "grs/simlab.hpp"

using namespace grs;
using namespace grs::kernels;

namespace {

std::vector<SortKey> population_keys(std::size_t n) {
    const auto values = sim::gen_lognormal_values(static_cast<std::int64_t>(n), -3, 3, 1);
    const auto keys = sim::synthetic_tiebreak_keys(static_cast<std::int64_t>(n), 1);
    std::vector<SortKey> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {values[i], keys[i], static_cast<std::uint32_t>(i)};
    return out;
}

std::vector<Rank> shuffled_ranks(std::size_t n) {
    std::vector<Rank> r(n);
    std::iota(r.begin(), r.end(), 1);
    std::mt19937_64 gen(2);
    std::shuffle(r.begin(), r.end(), gen);
    return r;
}

template <void (*Sort)(std::vector<SortKey>&)>
void BM_SortKeys(benchmark::State& state) {
    const auto base = population_keys(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        state.PauseTiming();
        auto keys = base;
        state.ResumeTiming();
        Sort(keys);
        benchmark::DoNotOptimize(keys.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

std::vector<Rank> omp_local_ranks(std::span<const Rank> g) { return omp::local_ranks(g, 1'000'000); }

template <std::vector<Rank> (*Local)(std::span<const Rank>)>
void BM_LocalRanks(benchmark::State& state) {
    // An experiment of the given size drawn from a population of one million.
    const auto ranks = shuffled_ranks(1'000'000);
    const std::span<const Rank> experiment(ranks.data(), static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(Local(experiment));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <RankMoments (*Moments)(std::span<const Rank>, std::span<const std::uint32_t>, std::span<const std::uint32_t>)>
void BM_RankMoments(benchmark::State& state) {
    const auto ranks = shuffled_ranks(1'000'000);
    std::vector<std::uint32_t> idx(ranks.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::mt19937_64 gen(3);
    std::shuffle(idx.begin(), idx.end(), gen);
    const auto half = static_cast<std::size_t>(state.range(0)) / 2;
    const std::span<const std::uint32_t> t(idx.data(), half), c(idx.data() + half, half);
    for (auto _ : state) benchmark::DoNotOptimize(Moments(ranks, t, c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LiftRerank(benchmark::State& state) {
    const std::int64_t n = 1'000'000;
    const auto values = sim::gen_lognormal_values(n, -5, 7, 1);
    const auto keys = sim::synthetic_tiebreak_keys(n, 1);
    const auto sorted = sort_population(values, keys);
    const auto ranks = omp::ranks_from_sorted(sorted);
    const auto half = state.range(0) / 2;
    sim::SplitSampler sampler(n, half, half);
    sim::LiftReranker reranker(sorted, ranks);
    std::uint64_t rep = 0;
    for (auto _ : state) {
        state.PauseTiming();
        RandomStream rng(1, RandomStream::Domain::benchmark, rep++);
        const auto split = sampler.sample(rng);
        state.ResumeTiming();
        benchmark::DoNotOptimize(reranker.rerank(split.treatment, split.control, 0.2));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_SortKeys<serial::sort_keys>)->Name("sort_keys/serial")->Arg(200'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SortKeys<omp::sort_keys>)->Name("sort_keys/omp")->Arg(200'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalRanks<serial::local_ranks>)->Name("local_ranks/serial")->Arg(20'000)->Arg(200'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalRanks<omp_local_ranks>)->Name("local_ranks/omp")->Arg(20'000)->Arg(200'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RankMoments<serial::rank_moments>)->Name("rank_moments/serial")->Arg(20'000)->Arg(200'000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RankMoments<omp::rank_moments>)->Name("rank_moments/omp")->Arg(20'000)->Arg(200'000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LiftRerank)->Name("lift_rerank")->Arg(200'000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
