#include "grs/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <bit>

namespace grs::kernels::omp {

namespace {

constexpr std::size_t kParallelThreshold = 1 << 14;

bool run_parallel(std::size_t n) {
    return n >= kParallelThreshold && omp_get_max_threads() > 1 && !omp_in_parallel();
}

} // namespace

void sort_keys(std::vector<SortKey>& keys) {
    const std::size_t n = keys.size();
    if (!run_parallel(n)) {
        std::sort(keys.begin(), keys.end(), key_less);
        return;
    }

    const auto chunks = static_cast<std::size_t>(omp_get_max_threads());
    std::vector<std::size_t> bounds(chunks + 1);
    for (std::size_t k = 0; k <= chunks; ++k) bounds[k] = n * k / chunks;

#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < chunks; ++k) {
        std::sort(keys.begin() + bounds[k], keys.begin() + bounds[k + 1], key_less);
    }

    std::vector<SortKey> buffer(n);
    SortKey* src = keys.data();
    SortKey* dst = buffer.data();
    for (std::size_t width = 1; width < chunks; width *= 2) {
        const std::size_t pairs = (chunks + 2 * width - 1) / (2 * width);
#pragma omp parallel for schedule(static)
        for (std::size_t p = 0; p < pairs; ++p) {
            const std::size_t lo = bounds[std::min(2 * p * width, chunks)];
            const std::size_t mid = bounds[std::min(2 * p * width + width, chunks)];
            const std::size_t hi = bounds[std::min(2 * p * width + 2 * width, chunks)];
            std::merge(src + lo, src + mid, src + mid, src + hi, dst + lo, key_less);
        }
        std::swap(src, dst);
    }
    if (src != keys.data()) keys.swap(buffer);
}

std::vector<Rank> ranks_from_sorted(std::span<const SortKey> sorted) {
    const std::size_t n = sorted.size();
    std::vector<Rank> ranks(n);
#pragma omp parallel for schedule(static) if (run_parallel(n))
    for (std::size_t i = 0; i < n; ++i) {
        ranks[sorted[i].index] = static_cast<Rank>(i) + 1;
    }
    return ranks;
}

std::vector<Rank> local_ranks(std::span<const Rank> global_ranks, Rank population) {
    const std::size_t m = global_ranks.size();
    const auto words = static_cast<std::size_t>(population / 64 + 1);
    std::vector<std::uint64_t> bits(words, 0);
    bool bad = false;

#pragma omp parallel for schedule(static) if (run_parallel(m)) reduction(|| : bad)
    for (std::size_t i = 0; i < m; ++i) {
        const Rank r = global_ranks[i];
        if (r < 1 || r > population) {
            bad = true;
            continue;
        }
        const std::uint64_t mask = std::uint64_t{1} << (r & 63);
        const std::uint64_t old = std::atomic_ref<std::uint64_t>(bits[r >> 6]).fetch_or(mask);
        if (old & mask) bad = true;
    }
    if (bad) throw Error("global ranks are not distinct values in 1..N");

    // Exclusive prefix popcount per word, blocked by thread.
    std::vector<std::uint32_t> prefix(words);
    const bool par = run_parallel(words);
    const int nthreads = par ? omp_get_max_threads() : 1;
    std::vector<std::uint64_t> block_sum(static_cast<std::size_t>(nthreads) + 1, 0);
#pragma omp parallel num_threads(nthreads) if (par)
    {
        const auto t = static_cast<std::size_t>(omp_get_thread_num());
        const auto nt = static_cast<std::size_t>(omp_get_num_threads());
        const std::size_t lo = words * t / nt;
        const std::size_t hi = words * (t + 1) / nt;
        std::uint64_t acc = 0;
        for (std::size_t w = lo; w < hi; ++w) acc += static_cast<std::uint64_t>(std::popcount(bits[w]));
        block_sum[t + 1] = acc;
#pragma omp barrier
#pragma omp single
        for (std::size_t k = 1; k <= nt; ++k) block_sum[k] += block_sum[k - 1];
        acc = block_sum[t];
        for (std::size_t w = lo; w < hi; ++w) {
            prefix[w] = static_cast<std::uint32_t>(acc);
            acc += static_cast<std::uint64_t>(std::popcount(bits[w]));
        }
    }

    std::vector<Rank> local(m);
#pragma omp parallel for schedule(static) if (run_parallel(m))
    for (std::size_t i = 0; i < m; ++i) {
        const Rank r = global_ranks[i];
        const std::uint64_t below = bits[r >> 6] & ((std::uint64_t{1} << (r & 63)) - 1);
        local[i] = static_cast<Rank>(prefix[r >> 6]) + std::popcount(below) + 1;
    }
    return local;
}

RankMoments rank_moments(std::span<const Rank> ranks,
                         std::span<const std::uint32_t> treatment,
                         std::span<const std::uint32_t> control) {
    RankMoments total;
    total.n_treatment = static_cast<std::int64_t>(treatment.size());
    total.n_control = static_cast<std::int64_t>(control.size());

    // OpenMP has no reduction for __int128; combine per-thread partials.
#pragma omp parallel if (run_parallel(treatment.size() + control.size()))
    {
        WideInt st = 0, sc = 0, sq = 0;
#pragma omp for schedule(static) nowait
        for (std::size_t k = 0; k < treatment.size(); ++k) {
            const WideInt r = ranks[treatment[k]];
            st += r;
            sq += r * r;
        }
#pragma omp for schedule(static) nowait
        for (std::size_t k = 0; k < control.size(); ++k) {
            const WideInt r = ranks[control[k]];
            sc += r;
            sq += r * r;
        }
#pragma omp critical(grs_rank_moments)
        {
            total.sum_treatment += st;
            total.sum_control += sc;
            total.sum_squares += sq;
        }
    }
    return total;
}

} // namespace grs::kernels::omp
