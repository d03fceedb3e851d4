#pragma once

#include <cstdint>
#include <random>

namespace pfq {

// Seeded random stream. Independent substreams are derived from a
// (seed, stream id) pair, so parallel Monte Carlo is reproducible for a
// fixed worker count.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    static Rng substream(std::uint64_t seed, std::uint64_t stream);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::uint64_t next_u64() { return engine_(); }
    std::size_t index(std::size_t n);

    std::uint64_t seed() const noexcept { return seed_; }

private:
    Rng(std::uint64_t seed, std::seed_seq& seq);

    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace pfq
