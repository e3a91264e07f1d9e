#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rareclass {

/// Domain error raised by every module. Messages are short and stable so the
/// CLI can prefix them with the failing stage.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// ------------------------------------------------------------
// Randomness
// ------------------------------------------------------------

/// splitmix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for the substream identified by (seed, key). Keys are hashed by name so
/// that adding a new consumer never shifts the streams of existing ones.
std::uint64_t substream(std::uint64_t seed, std::string_view key);
std::uint64_t substream(std::uint64_t seed, std::uint64_t index);

/// xoshiro256** generator. All draws are implemented here rather than through
/// <random> distributions, whose outputs differ between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform integer in [0, bound). bound must be > 0.
    std::size_t below(std::size_t bound);
    /// Standard normal via Box-Muller (no cached second value).
    double normal();

    template <typename T>
    void shuffle(T& seq) {
        for (std::size_t i = seq.size(); i > 1; --i) {
            std::size_t j = below(i);
            using std::swap;
            swap(seq[i - 1], seq[j]);
        }
    }

private:
    std::uint64_t s_[4];
};

// ------------------------------------------------------------
// Parallelism
// ------------------------------------------------------------

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency; 1 disables threading.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Calls body(i) for i in [0, n). Each index writes only its own output slot,
/// so results never depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// ------------------------------------------------------------
// Misc numerics
// ------------------------------------------------------------

/// Round half up (2.5 -> 3) for non-negative values.
std::size_t round_half_up(double x);

/// floor() that tolerates representation error, e.g. 40 / 0.8 -> 50.
std::size_t floor_count(double x);

/// FNV-1a 64-bit over raw bytes; chainable via the seed argument.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);
/// Fixed-point text with the given number of decimals.
std::string format_fixed(double v, int decimals);

}  // namespace rareclass
