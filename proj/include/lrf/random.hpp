#pragma once

// Reproducible Gaussian sampling: 64-bit Mersenne Twister (std::mt19937_64,
// whose state transition is fixed by the C++ standard), 53-bit uniforms taken
// from the top bits of each draw, and the Box-Muller transform. Unlike
// std::normal_distribution this produces the same stream on every standard
// library.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "lrf/core.hpp"

namespace lrf {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Matrix of independent Normal(mean, sd^2) entries, filled column by column.
    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double mean = 0.0, double sd = 1.0) {
        Matrix m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = mean + sd * normal();
        return m;
    }

    Vector normal_vector(Eigen::Index size) { return normal_matrix(size, 1); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lrf
