#pragma once

// Counter-based random numbers (Philox4x32-10). Each Monte Carlo trial owns an
// independent stream keyed by (seed, trial_index), so results do not depend on
// how trials are scheduled across workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace exitrate {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    constexpr std::uint64_t kMul0 = 0xD2511F53u;
    constexpr std::uint64_t kMul1 = 0xCD9E8D57u;
    const std::uint64_t p0 = kMul0 * ctr[0];
    const std::uint64_t p1 = kMul1 * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) philox_round(ctr, key);
    return ctr;
}

}  // namespace detail

/// Deterministic stream of standard normal variates for one (seed, trial) pair.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t trial_index)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          trial_(trial_index) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const auto words = detail::philox10(
            {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
             static_cast<std::uint32_t>(trial_), static_cast<std::uint32_t>(trial_ >> 32)},
            key_);
        ++block_;
        const std::uint64_t u0 =
            (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
        const std::uint64_t u1 =
            (static_cast<std::uint64_t>(words[2]) << 32) | words[3];
        // u in (0,1] for the log, [0,1) for the angle
        const double a = 1.0 - static_cast<double>(u0 >> 11) * 0x1.0p-53;
        const double b = static_cast<double>(u1 >> 11) * 0x1.0p-53;
        const double radius = std::sqrt(-2.0 * std::log(a));
        const double angle = 2.0 * std::numbers::pi * b;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform variate in [0,1), consuming one block.
    double next_uniform() {
        const auto words = detail::philox10(
            {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
             static_cast<std::uint32_t>(trial_), static_cast<std::uint32_t>(trial_ >> 32)},
            key_);
        ++block_;
        const std::uint64_t u =
            (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
        return static_cast<double>(u >> 11) * 0x1.0p-53;
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t trial_;
    std::uint64_t block_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace exitrate
