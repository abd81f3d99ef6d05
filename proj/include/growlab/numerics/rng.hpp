#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace growlab {

/// FNV-1a 64-bit hash; stable across platforms and compilers.
std::uint64_t stable_hash(std::string_view text) noexcept;

/// Per-component seed: `seed XOR stable_hash(role)`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view role) noexcept;

/// Deterministic generator built on std::mt19937_64, whose output sequence
/// is fixed by the C++ standard. All distributions are implemented here
/// rather than through <random>'s distribution classes, whose algorithms are
/// implementation-defined, so a seed replays identically on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n) by rejection sampling (no modulo bias).
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace growlab
