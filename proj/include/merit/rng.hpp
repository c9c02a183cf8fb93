#pragma once

#include "merit/tensor.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace merit {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Child seed for a named component; children of one root are independent
/// and stable across runs.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) noexcept;

/// mt19937_64 with distribution code spelled out here, so streams do not
/// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Entries drawn uniformly from [-bound, bound].
Tensor uniform_tensor(Rng& rng, Shape shape, double bound);

}  // namespace merit
