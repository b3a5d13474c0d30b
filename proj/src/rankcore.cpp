#include "grs/rankcore.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace grs {

namespace {

std::atomic<std::uint64_t> g_global_sorts{0};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

std::uint64_t tiebreak_key(std::string_view user_id, std::uint64_t seed) noexcept {
    return splitmix64(fnv1a64(user_id) ^ splitmix64(seed));
}

GlobalRankTable::GlobalRankTable(std::vector<std::string> ids, std::vector<Rank> ranks,
                                 std::uint64_t seed)
    : ids_(std::move(ids)), ranks_(std::move(ranks)), seed_(seed) {
    build_index();
}

GlobalRankTable::GlobalRankTable(const GlobalRankTable& other)
    : ids_(other.ids_), ranks_(other.ranks_), seed_(other.seed_) {
    build_index();
}

GlobalRankTable& GlobalRankTable::operator=(const GlobalRankTable& other) {
    if (this != &other) {
        GlobalRankTable copy(other);
        *this = std::move(copy);
    }
    return *this;
}

void GlobalRankTable::build_index() {
    index_.clear();
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            throw Error("duplicate user_id '" + ids_[i] + "'");
        }
    }
}

GlobalRankTable GlobalRankTable::from_ranks(std::vector<std::string> user_ids,
                                            std::vector<Rank> ranks,
                                            std::uint64_t tiebreak_seed) {
    if (user_ids.empty()) throw Error("empty population");
    if (user_ids.size() != ranks.size()) throw Error("rank table: id and rank counts differ");
    const auto n = static_cast<Rank>(ranks.size());
    std::vector<bool> seen(ranks.size(), false);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        const Rank r = ranks[i];
        if (r < 1 || r > n || seen[static_cast<std::size_t>(r - 1)]) {
            throw Error("rank table: ranks are not a bijection onto 1.." + std::to_string(n) +
                        " (user '" + user_ids[i] + "')");
        }
        seen[static_cast<std::size_t>(r - 1)] = true;
    }
    return GlobalRankTable(std::move(user_ids), std::move(ranks), tiebreak_seed);
}

std::optional<std::size_t> GlobalRankTable::find(std::string_view user_id) const {
    const auto it = index_.find(user_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Rank GlobalRankTable::rank_of(std::string_view user_id) const {
    const auto pos = find(user_id);
    if (!pos) throw Error("unknown user '" + std::string(user_id) + "'");
    return ranks_[*pos];
}

GlobalRankTable compute_global_ranks(std::span<const MetricRecord> records,
                                     std::uint64_t tiebreak_seed) {
    if (records.empty()) throw Error("empty population");

    std::vector<std::string> ids;
    ids.reserve(records.size());
    std::vector<kernels::SortKey> keys(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!std::isfinite(rec.value)) {
            throw Error("non-finite value for user '" + rec.user_id + "'");
        }
        ids.push_back(rec.user_id);
        keys[i] = {rec.value, tiebreak_key(rec.user_id, tiebreak_seed),
                   static_cast<std::uint32_t>(i)};
    }
    GlobalRankTable table(std::move(ids), {}, tiebreak_seed);

    kernels::omp::sort_keys(keys);
    g_global_sorts.fetch_add(1, std::memory_order_relaxed);

    // A full 64-bit key collision inside a tied block would leave the order
    // to input position; resolve it by id so file order never matters.
    for (std::size_t lo = 0; lo < keys.size();) {
        std::size_t hi = lo + 1;
        while (hi < keys.size() && keys[hi].value == keys[lo].value &&
               keys[hi].tiebreak == keys[lo].tiebreak) {
            ++hi;
        }
        if (hi - lo > 1) {
            std::sort(keys.begin() + static_cast<std::ptrdiff_t>(lo),
                      keys.begin() + static_cast<std::ptrdiff_t>(hi),
                      [&](const kernels::SortKey& a, const kernels::SortKey& b) {
                          return table.ids_[a.index] < table.ids_[b.index];
                      });
        }
        lo = hi;
    }

    table.ranks_ = kernels::omp::ranks_from_sorted(keys);
    return table;
}

std::vector<kernels::SortKey> sort_population(std::span<const double> values,
                                              std::span<const std::uint64_t> tiebreak_keys) {
    if (values.empty()) throw Error("empty population");
    if (values.size() != tiebreak_keys.size()) throw Error("values and tiebreak keys differ in length");
    std::vector<kernels::SortKey> keys(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        keys[i] = {values[i], tiebreak_keys[i], static_cast<std::uint32_t>(i)};
    }
    kernels::omp::sort_keys(keys);
    g_global_sorts.fetch_add(1, std::memory_order_relaxed);
    return keys;
}

std::vector<Rank> local_ranks(const GlobalRankTable& table, std::span<const std::string> users) {
    std::vector<Rank> global(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) global[i] = table.rank_of(users[i]);
    return kernels::omp::local_ranks(global, static_cast<Rank>(table.population_size()));
}

std::uint64_t global_sort_count() noexcept {
    return g_global_sorts.load(std::memory_order_relaxed);
}

} // namespace grs
