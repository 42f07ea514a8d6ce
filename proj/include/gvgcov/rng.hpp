#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace gvgcov
{
    /// SplitMix64 finalizer; used to derive independent stream seeds.
    constexpr std::uint64_t mix64(std::uint64_t z) noexcept
    {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept
    {
        std::uint64_t h = mix64(base);
        for (std::uint64_t k : keys)
            h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
        return h;
    }

    /// mt19937_64 with hand-rolled uniform mappings. The standard distributions
    /// are implementation-defined; these are not, so traces stay byte-identical
    /// across standard libraries.
    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed) : engine_(seed) {}

        /// Uniform in [0, 1).
        double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

        /// Uniform integer in [0, n), rejection-sampled. n must be > 0.
        std::uint64_t below(std::uint64_t n)
        {
            const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
            std::uint64_t v;
            do
                v = engine_();
            while (v >= limit);
            return v % n;
        }

    private:
        std::mt19937_64 engine_;
    };
}
