#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace hwmnet {

// Deterministic, portable random generator (xoshiro256++ seeded through
// splitmix64). std::* distributions are implementation-defined, so uniform
// draws are derived from raw bits here; identical seeds give bitwise
// identical sequences on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent stream keyed by (seed, k1, k2, k3). Used for per-sample
    // patch streams so the draw sequence is a pure function of the key.
    static Rng keyed(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                     std::uint64_t k3 = 0);

    std::uint64_t next_u64();
    double next_double();                      // [0, 1)
    double uniform(double lo, double hi);      // [lo, hi)
    std::int64_t next_below(std::int64_t n);   // [0, n)
    bool next_bool();

private:
    std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace hwmnet
