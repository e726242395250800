#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdis {

/// Bad user input: malformed files, invalid configs, out-of-range arguments.
/// CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Failure during computation (divergence, non-convergence, NaN).
/// CLI maps this to exit code 2.
struct ComputeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A conditioning event required by an identification formula has zero
/// probability. Carries the event description in what().
struct OverlapViolation : ComputeError {
    using ComputeError::ComputeError;
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Current level, resolved once from the GDIS_LOG environment variable.
LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);
void log_error(const std::string& msg);

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over a byte string; used for config content hashes.
std::uint64_t fnv1a64(const std::string& bytes);
std::string to_hex(std::uint64_t v);

/// Deterministic RNG: std::mt19937_64 engine with fixed value transforms,
/// so streams are bit-stable across platforms and library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Box-Muller; consumes exactly two engine draws.
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n); n > 0.
    std::uint64_t integer(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(eng_()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(integer(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent deterministic sub-stream for a named purpose.
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1))));
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace gdis
