#pragma once

#include <cstdint>
#include <limits>

namespace olg {

// splitmix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based stream: draw n of stream s under seed k is a pure function of (k, s, n),
/// so per-path streams reproduce regardless of scheduling. Satisfies
/// UniformRandomBitGenerator for use with <random> distributions.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_(mix64(seed ^ mix64(stream_id + 0x632be59bd9b4e019ULL))), seed_(seed), stream_(stream_id) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix64(key_ + mix64(counter_++)); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    // Independent child stream, e.g. one per simulated path.
    RngStream split(std::uint64_t child) const { return {mix64(key_ ^ 0xa0761d6478bd642fULL), child}; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace olg
