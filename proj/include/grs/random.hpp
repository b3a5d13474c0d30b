#pragma once

#include <cstdint>
#include <random>

namespace grs {

/// Independent, reproducible random streams keyed by (seed, domain, id).
///
/// Draws avoid the standard distributions, whose output is not specified
/// across library implementations.
class RandomStream {
public:
    enum class Domain : std::uint64_t { population = 1, replication = 2, benchmark = 3, assignment = 4 };

    RandomStream(std::uint64_t seed, Domain domain, std::uint64_t id);

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound), bound >= 1.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform double in the open interval (0, 1).
    double unit_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal by inversion.
    double normal();

private:
    std::mt19937_64 engine_;
};

} // namespace grs
