#pragma once

#include <cstdint>
#include <random>

namespace milab {

using Rng = std::mt19937_64;

// splitmix64 finaliser; mixes a base seed with stream indices so that
// per-slide / per-epoch / per-bag generators are independent and do not
// depend on evaluation order.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace milab
