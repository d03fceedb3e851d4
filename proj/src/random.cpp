#include "pfq/random.hpp"

namespace pfq {

namespace {

std::seed_seq make_seq(std::uint64_t seed, std::uint64_t stream)
{
    return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                         0x9e3779b9u};
}

} // namespace

Rng::Rng(std::uint64_t seed, std::seed_seq& seq) : seed_(seed), engine_(seq) {}

Rng::Rng(std::uint64_t seed) : seed_(seed)
{
    auto seq = make_seq(seed, 0);
    engine_.seed(seq);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream)
{
    auto seq = make_seq(seed, stream + 1);
    return Rng(seed, seq);
}

std::size_t Rng::index(std::size_t n)
{
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

} // namespace pfq
