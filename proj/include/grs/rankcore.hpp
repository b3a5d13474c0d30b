#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "grs/kernels.hpp"
#include "grs/types.hpp"

namespace grs {

/// One user's metric observation.
struct MetricRecord {
    std::string user_id;
    double value = 0.0;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// Seeded 64-bit tiebreak key for a user id. Depends only on (id, seed),
/// never on where the record sits in its input.
std::uint64_t tiebreak_key(std::string_view user_id, std::uint64_t seed) noexcept;

/// Population-wide distinct ranks produced by one seeded sort.
///
/// Ranks are a bijection onto 1..N, ascending in value; equal values are
/// ordered by `tiebreak_key`. A table is immutable once built and safe for
/// concurrent reads.
class GlobalRankTable {
public:
    /// Rebuilds a table from previously exported ranks; validates that the
    /// ranks form a bijection onto 1..N and that ids are unique.
    static GlobalRankTable from_ranks(std::vector<std::string> user_ids,
                                      std::vector<Rank> ranks,
                                      std::uint64_t tiebreak_seed);

    GlobalRankTable(const GlobalRankTable& other);
    GlobalRankTable& operator=(const GlobalRankTable& other);
    GlobalRankTable(GlobalRankTable&&) noexcept = default;
    GlobalRankTable& operator=(GlobalRankTable&&) noexcept = default;

    std::size_t population_size() const noexcept { return ids_.size(); }
    std::uint64_t tiebreak_seed() const noexcept { return seed_; }

    /// Position of `user_id` in the table, if present.
    std::optional<std::size_t> find(std::string_view user_id) const;

    /// Throws `Error` naming the id when the user is unknown.
    Rank rank_of(std::string_view user_id) const;

    std::span<const std::string> user_ids() const noexcept { return ids_; }
    std::span<const Rank> ranks() const noexcept { return ranks_; }

    friend bool operator==(const GlobalRankTable& a, const GlobalRankTable& b) {
        return a.seed_ == b.seed_ && a.ids_ == b.ids_ && a.ranks_ == b.ranks_;
    }

private:
    friend GlobalRankTable compute_global_ranks(std::span<const MetricRecord>, std::uint64_t);

    GlobalRankTable(std::vector<std::string> ids, std::vector<Rank> ranks, std::uint64_t seed);

    void build_index();

    std::vector<std::string> ids_;
    std::vector<Rank> ranks_;
    // Views into ids_; rebuilt on copy.
    std::unordered_map<std::string_view, std::size_t> index_;
    std::uint64_t seed_ = 0;
};

/// Sorts the population once by (value, tiebreak_key(id, seed)).
///
/// Throws on an empty population, a duplicate id or a non-finite value.
GlobalRankTable compute_global_ranks(std::span<const MetricRecord> records,
                                     std::uint64_t tiebreak_seed);

/// Index-level ranking for callers that already hold values and keys in
/// parallel arrays. Returns the sorted key array; ranks follow from
/// `kernels::omp::ranks_from_sorted`.
std::vector<kernels::SortKey> sort_population(std::span<const double> values,
                                              std::span<const std::uint64_t> tiebreak_keys);

/// Ranks of `users` among themselves, ordered by global rank.
std::vector<Rank> local_ranks(const GlobalRankTable& table,
                              std::span<const std::string> users);

/// Number of full-population sorts performed by this process.
std::uint64_t global_sort_count() noexcept;

} // namespace grs
