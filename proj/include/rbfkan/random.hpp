#ifndef RBFKAN_RANDOM_HPP
#define RBFKAN_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rbfkan
{

/// splitmix64, used only to expand a 64-bit seed into xoshiro state.
constexpr std::uint64_t splitmix64(std::uint64_t &state) noexcept
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256** 1.0 (Blackman & Vigna). Every derived quantity below is defined
/// bit-exactly so that datasets and initial weights agree across platforms.
class Xoshiro256
{
public:
    explicit Xoshiro256(std::uint64_t seed) noexcept
    {
        std::uint64_t sm = seed;
        for (auto &w : s_) {
            w = splitmix64(sm);
        }
    }

    std::uint64_t next() noexcept
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer on [0, bound) via the high word of a 128-bit product.
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per call.
    double normal() noexcept
    {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
};

} // namespace rbfkan

#endif
