#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pathssl {

/// Deterministic random stream (xoshiro256++ seeded through splitmix64).
///
/// Every randomized operation in the library takes an Rng by value or
/// reference instead of touching global state. Child streams are derived
/// from the parent's origin seed, not its current position, so a unit of
/// work keyed by (master seed, unit id) produces the same values no matter
/// how many sibling units ran before it. That is what makes parallel runs
/// bit-identical to serial ones.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Child stream for a keyed sub-unit of work.
    Rng derive(std::uint64_t key) const;
    /// Child stream keyed by a string identifier (e.g. a patch id).
    Rng derive(std::string_view id) const;

    std::uint64_t next_u64();
    std::uint32_t next_u32();

    /// Uniform double in [0, 1).
    double uniform();
    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n); n must be > 0. Unbiased (rejection).
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal (Box-Muller, one value per call).
    double normal();
    double normal(double mean, double stddev);
    /// Poisson draw. Exact for all lambda >= 0 (Knuth below 10, PTRS above).
    std::uint64_t poisson(double lambda);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    std::uint64_t origin_seed() const { return origin_seed_; }

private:
    std::uint64_t state_[4];
    std::uint64_t origin_seed_;
};

/// 64-bit FNV-1a, used to key rng streams by string identifiers.
std::uint64_t fnv1a64(std::string_view s);

} // namespace pathssl
