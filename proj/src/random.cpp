#include "grs/random.hpp"

#include "grs/hypotest.hpp"

namespace grs {

RandomStream::RandomStream(std::uint64_t seed, Domain domain, std::uint64_t id) {
    const auto d = static_cast<std::uint64_t>(domain);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(id),
                      static_cast<std::uint32_t>(id >> 32)};
    engine_.seed(seq);
}

// Lemire's multiply-shift with rejection.
std::uint64_t RandomStream::below(std::uint64_t bound) {
    unsigned __int128 product = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            product = static_cast<unsigned __int128>(next()) * bound;
            low = static_cast<std::uint64_t>(product);
        }
    }
    return static_cast<std::uint64_t>(product >> 64);
}

double RandomStream::normal() {
    return normal_quantile(unit_open());
}

} // namespace grs
