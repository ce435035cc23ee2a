#include "hwmnet/rng.hpp"

#include "hwmnet/errors.hpp"

namespace hwmnet {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {
std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}
}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
        s = splitmix64(x);
    }
}

Rng Rng::keyed(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2, std::uint64_t k3) {
    std::uint64_t x = seed;
    std::uint64_t mixed = splitmix64(x);
    x = mixed ^ k1;
    mixed = splitmix64(x);
    x = mixed ^ k2;
    mixed = splitmix64(x);
    x = mixed ^ k3;
    return Rng(splitmix64(x));
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

std::int64_t Rng::next_below(std::int64_t n) {
    require(n > 0, "Rng::next_below: n must be positive");
    using u128 = unsigned __int128;
    return static_cast<std::int64_t>(
        (u128(next_u64()) * u128(static_cast<std::uint64_t>(n))) >> 64);
}

bool Rng::next_bool() {
    return (next_u64() >> 63) != 0;
}

}  // namespace hwmnet
