#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

namespace wiener {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Stream key for (seed, lane, index): lanes keep the Brownian increments,
// mixture draws, audit samples etc. on independent substreams.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t lane, std::uint64_t index) {
    std::uint64_t s = seed;
    s ^= 0x9E3779B97F4A7C15ULL + lane;
    (void)splitmix64(s);
    s ^= 0xD1B54A32D192ED03ULL + index;
    (void)splitmix64(s);
    return s;
}

}  // namespace detail

inline constexpr std::uint64_t kBrownianLane = 0;
inline constexpr std::uint64_t kMixtureLane = 1;
inline constexpr std::uint64_t kAuditLane = 2;
inline constexpr std::uint64_t kScalarLane = 3;

// Splittable counter-seeded stream: each (seed, lane, index) triple owns an
// independent deterministic sequence, so per-path sampling is
// order-independent and reproducible regardless of scheduling.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t lane, std::uint64_t index)
        : state_(detail::stream_key(seed, lane, index)) {}

    std::uint64_t next_u64() { return detail::splitmix64(state_); }

    // Uniform on [0, 1).
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1]; safe as a log argument.
    double next_uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, second draw cached.
    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = next_uniform_pos();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Fixed-order pairwise summation; the result depends only on the slot order,
// never on which worker produced which slot.
inline double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double acc = 0.0;
        for (double v : values) acc += v;
        return acc;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

inline double pairwise_mean(std::span<const double> values) {
    return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
}

namespace detail {

// Runs fn(block) for block = 0..blocks-1 on a small worker pool. The block
// partition is fixed, so any per-block outputs are identical no matter how
// many threads execute. Blocks must not share mutable state.
template <class Fn>
void parallel_for_blocks(std::size_t blocks, Fn&& fn) {
    unsigned workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (workers > 8) workers = 8;
    if (workers <= 1 || blocks <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) fn(b);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&fn, w, workers, blocks] {
            for (std::size_t b = w; b < blocks; b += workers) fn(b);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

}  // namespace wiener
