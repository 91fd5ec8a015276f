#pragma once

// Deterministic random streams. All distributions are implemented on top of
// mt19937_64 so a serialized engine state resumes the stream exactly, which
// checkpoint resumption relies on.

#include "datcgan/common.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>

namespace datcgan {

class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent substream keyed by a salt (asset index, variant index, ...).
    Rng fork(std::uint64_t salt) const {
        std::uint64_t h = fnv1a64(&salt, sizeof(salt));
        std::ostringstream os;
        os << engine_;
        h = fnv1a64(os.str()) ^ h;
        return Rng(h);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n) by rejection, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        require(n > 0, "Rng::below requires n > 0");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // One standard normal per call (Box-Muller, no cached spare so the
    // stream position is a pure function of the call count).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Vec normal_vec(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
    double gamma(double shape) {
        require(shape > 0.0, "gamma shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            double u = uniform01();
            while (u <= 0.0) u = uniform01();
            return g * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    static Rng deserialize(const std::string& state) {
        Rng r;
        std::istringstream is(state);
        is >> r.engine_;
        require(!is.fail(), "malformed RNG state");
        return r;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace datcgan
