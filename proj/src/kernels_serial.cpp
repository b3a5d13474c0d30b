#include "grs/kernels.hpp"

#include <algorithm>
#include <numeric>

namespace grs::kernels::serial {

void sort_keys(std::vector<SortKey>& keys) {
    std::sort(keys.begin(), keys.end(), key_less);
}

std::vector<Rank> ranks_from_sorted(std::span<const SortKey> sorted) {
    std::vector<Rank> ranks(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        ranks[sorted[i].index] = static_cast<Rank>(i) + 1;
    }
    return ranks;
}

std::vector<Rank> local_ranks(std::span<const Rank> global_ranks) {
    std::vector<std::size_t> order(global_ranks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return global_ranks[a] < global_ranks[b];
    });
    std::vector<Rank> local(global_ranks.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        local[order[i]] = static_cast<Rank>(i) + 1;
    }
    return local;
}

RankMoments rank_moments(std::span<const Rank> ranks,
                         std::span<const std::uint32_t> treatment,
                         std::span<const std::uint32_t> control) {
    RankMoments m;
    m.n_treatment = static_cast<std::int64_t>(treatment.size());
    m.n_control = static_cast<std::int64_t>(control.size());
    for (auto i : treatment) {
        const WideInt r = ranks[i];
        m.sum_treatment += r;
        m.sum_squares += r * r;
    }
    for (auto i : control) {
        const WideInt r = ranks[i];
        m.sum_control += r;
        m.sum_squares += r * r;
    }
    return m;
}

} // namespace grs::kernels::serial
