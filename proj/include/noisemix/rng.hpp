#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace noisemix {

/// Mixes a 64-bit value through the splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic child seed for stream `index` of `parent`. Used to give every
/// generated record, trial and worker its own independent generator.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// Child seed keyed by a string tag (method names, purposes).
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept;

/// Seeded generator owned by exactly one caller. Not thread-safe; hand each
/// worker its own instance.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on (0, 1]; safe to take the log of.
    double uniform_open0() noexcept;
    double normal();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace noisemix
