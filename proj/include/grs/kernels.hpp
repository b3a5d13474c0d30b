#pragma once

// Data-parallel building blocks behind the rank-once/test-many pipeline.
//
// Every kernel exists twice: `serial::` is the straightforward reference
// used by the tests, `omp::` is the OpenMP implementation used in
// production paths. Both must produce identical output for identical input,
// independent of the thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "grs/types.hpp"

namespace grs::kernels {

/// Composite sort key. `index` is the record's position in its input and
/// only decides order when both value and tiebreak collide.
struct SortKey {
    double value;
    std::uint64_t tiebreak;
    std::uint32_t index;
};

inline bool key_less(const SortKey& a, const SortKey& b) noexcept {
    if (a.value < b.value) return true;
    if (b.value < a.value) return false;
    if (a.tiebreak != b.tiebreak) return a.tiebreak < b.tiebreak;
    return a.index < b.index;
}

namespace serial {

void sort_keys(std::vector<SortKey>& keys);

/// ranks[keys[i].index] = i + 1 for a sorted key array.
std::vector<Rank> ranks_from_sorted(std::span<const SortKey> sorted);

/// Within-subset ranks of distinct global ranks, by argsort.
std::vector<Rank> local_ranks(std::span<const Rank> global_ranks);

RankMoments rank_moments(std::span<const Rank> ranks,
                         std::span<const std::uint32_t> treatment,
                         std::span<const std::uint32_t> control);

} // namespace serial

namespace omp {

/// Chunked sort followed by pairwise merge rounds.
void sort_keys(std::vector<SortKey>& keys);

std::vector<Rank> ranks_from_sorted(std::span<const SortKey> sorted);

/// Within-subset ranks through a presence bitmap over 1..population and
/// per-word prefix popcounts: O(population / 64 + subset size).
std::vector<Rank> local_ranks(std::span<const Rank> global_ranks, Rank population);

RankMoments rank_moments(std::span<const Rank> ranks,
                         std::span<const std::uint32_t> treatment,
                         std::span<const std::uint32_t> control);

} // namespace omp

} // namespace grs::kernels
