#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace grs {

/// Ranks are 1-based and distinct within a population.
using Rank = std::int64_t;

/// Accumulator wide enough for sums of squared ranks at N ~ 1e8.
using WideInt = __int128;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Integer moments of one experiment's ranks.
struct RankMoments {
    std::int64_t n_treatment = 0;
    std::int64_t n_control = 0;
    WideInt sum_treatment = 0;
    WideInt sum_control = 0;
    WideInt sum_squares = 0; // over both groups
};

enum class Group : std::uint8_t { treatment, control };

} // namespace grs
