#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace sajsq {

// Splittable counter-based generator in the splitmix64 family (Steele,
// Lea, Flood).  Sub-streams are derived by folding a path of stream ids
// into the seed through the finalizer, so every (seed, path) pair yields
// an independent, reproducible stream.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class RngStream {
  public:
    RngStream() = default;
    explicit RngStream(std::uint64_t seed) : state_(mix64(seed ^ 0x9E3779B97F4A7C15ull)) {}

    static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = mix64(seed ^ 0x9E3779B97F4A7C15ull);
        for (std::uint64_t id : path) {
            s = mix64(s + 0x9E3779B97F4A7C15ull * (id + 1));
        }
        RngStream r;
        r.state_ = s;
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    // Uniform on [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1], safe as a log argument.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection to kill modulo bias; a single retry is already rare.
        const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Standard normal via Box-Muller (deterministic across platforms,
    // unlike std::normal_distribution).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u = uniform_pos();
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 6.283185307179586476925286766559 * v;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t state_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Logical stream ids; every engine derives its streams as
// derive(seed, {replication, kStreamX}).
inline constexpr std::uint64_t kStreamArrival = 1;
inline constexpr std::uint64_t kStreamDeparture = 2;
inline constexpr std::uint64_t kStreamTieBreak = 3;
inline constexpr std::uint64_t kStreamNoise = 4;

}  // namespace sajsq
