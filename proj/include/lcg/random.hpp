#pragma once

#include <cstdint>
#include <random>

#include "lcg/tensor.hpp"

namespace lcg {

using Rng = std::mt19937_64;

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng);
Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng);

/// Independent child seed for stream `index` of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace lcg
