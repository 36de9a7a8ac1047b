#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
//
// Every draw is a pure function of (key, counter), so scenario k / step j can be
// generated on any thread in any order and always yields the same value.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gsvie {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter apply(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
        return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }
};

/// A stream of the counter-based generator: (seed, stream id). Draws are addressed
/// by (index, lane), never by mutable state.
class RandomStream {
public:
    constexpr RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

    /// Child stream; splitting is a keyed hash, so children of distinct parents do not collide
    /// in practice and the same (parent, index) always gives the same child.
    constexpr RandomStream split(std::uint64_t index) const noexcept {
        const auto block = raw(index, 0xFFFFFFFFu);
        return RandomStream(seed_ ^ (std::uint64_t{block[0]} << 32 | block[1]),
                            std::uint64_t{block[2]} << 32 | block[3]);
    }

    /// Four 32-bit words for counter (index, lane).
    constexpr std::array<std::uint32_t, 4> raw(std::uint64_t index, std::uint32_t lane) const noexcept {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                      lane ^ static_cast<std::uint32_t>(stream_),
                                      static_cast<std::uint32_t>(stream_ >> 32)};
        const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
        return Philox4x32::apply(ctr, key);
    }

    /// Uniform in the open interval (0, 1) with 53 random bits.
    double uniform(std::uint64_t index, std::uint32_t lane = 0) const noexcept {
        const auto w = raw(index, lane);
        return to_open_unit(w[0], w[1]);
    }

    /// Standard normal via Box-Muller on one counter block.
    double normal(std::uint64_t index, std::uint32_t lane = 0) const noexcept {
        const auto w = raw(index, lane);
        const double u1 = to_open_unit(w[0], w[1]);
        const double u2 = to_open_unit(w[2], w[3]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// +1 or -1 with equal probability.
    int sign(std::uint64_t index, std::uint32_t lane = 0) const noexcept {
        return (raw(index, lane)[0] & 1u) ? 1 : -1;
    }

    constexpr std::uint64_t seed() const noexcept { return seed_; }
    constexpr std::uint64_t stream() const noexcept { return stream_; }

private:
    static double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = (std::uint64_t{hi} << 21) ^ (lo >> 11);  // 53 bits
        return (static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
};

}  // namespace gsvie
