#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace hyperl1 {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b * 0x9e3779b97f4a7c15ULL);
    splitmix64(s);
    return s;
}

}  // namespace detail

// Counter-free deterministic stream. Streams are keyed by (seed, purpose,
// counter) so independent consumers never share a sequence; the state is a
// single u64, which makes checkpointing trivial and platform-independent.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) { skip_warmup(); }

    RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t counter = 0)
        : state_(detail::mix_key(detail::mix_key(seed, detail::fnv1a64(purpose)), counter)) {
        skip_warmup();
    }

    std::uint64_t next_u64() { return detail::splitmix64(state_); }

    // Uniform on (0, 1]; never returns 0 so it is safe under log().
    double uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only: stateless per call, two u64 draws each.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    void skip_warmup() {
        next_u64();
        next_u64();
    }

    std::uint64_t state_;
};

}  // namespace hyperl1
