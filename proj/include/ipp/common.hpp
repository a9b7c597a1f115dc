#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ipp {

using Vec3 = Eigen::Vector3d;
using Idx3 = Eigen::Vector3i;

// Error hierarchy. Everything thrown by the library derives from IppError so
// the CLI can map failures to a single machine-readable line.
struct IppError : std::runtime_error {
    explicit IppError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericalFailure : IppError {
    explicit NumericalFailure(const std::string& msg) : IppError(msg) {}
};
struct ShapeMismatch : IppError {
    explicit ShapeMismatch(const std::string& msg) : IppError(msg) {}
};
struct ParseError : IppError {
    explicit ParseError(const std::string& msg) : IppError(msg) {}
};
struct ShapeError : IppError {
    explicit ShapeError(const std::string& msg) : IppError(msg) {}
};
struct OutOfBounds : IppError {
    explicit OutOfBounds(const std::string& msg) : IppError(msg) {}
};
struct IllegalMove : IppError {
    explicit IllegalMove(const std::string& msg) : IppError(msg) {}
};
struct InsufficientSamples : IppError {
    explicit InsufficientSamples(const std::string& msg) : IppError(msg) {}
};
struct ConfigError : IppError {
    explicit ConfigError(const std::string& msg) : IppError(msg) {}
};
struct CheckpointError : IppError {
    explicit CheckpointError(const std::string& msg) : IppError(msg) {}
};
struct IoError : IppError {
    explicit IoError(const std::string& msg) : IppError(msg) {}
};

// Counter-based RNG (splitmix64 core). Distributions are implemented by hand
// so that streams are reproducible across standard libraries and so that a
// generator can spawn independent child streams for workers/episodes.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive integer range
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    // standard normal via Box-Muller (no cached spare, keeps streams simple)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // independent child stream
    Rng spawn() { return Rng(next_u64()); }

  private:
    std::uint64_t state_;
};

}  // namespace ipp
