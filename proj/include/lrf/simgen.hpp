#pragma once

// Simulated state-space data: random stable (A, C) with isotropic noise,
// steady-state sampling, and alignment of estimated to true latent states.

#include <cstdint>

#include "lrf/baselines.hpp"
#include "lrf/linalg.hpp"
#include "lrf/random.hpp"

namespace lrf {

struct SimSpec {
    Eigen::Index n = 10;
    Eigen::Index r = 2;
    Eigen::Index T_train = 100;
    Eigen::Index T_test = 500;
    double spectral_radius = 0.98;
    double q_scale = 1.0;
    double r_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(n >= 1 && r >= 1 && T_train >= 1 && T_test >= 1, "simulation sizes must be positive");
        detail::require(spectral_radius > 0 && spectral_radius < 1, "spectral radius must lie in (0, 1)");
        detail::require(q_scale >= 0 && r_scale >= 0, "noise scales must be nonnegative");
    }
};

/// splitmix64 step; derives independent stream seeds from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// A_ii ~ N(1, 0.1^2), A_ij ~ N(0, 0.1^2), rescaled to the target spectral
/// radius; C_ij ~ N(0, 1); Q = q_scale I, R = r_scale I.
inline StateSpaceModel gen_model(const SimSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0));
    StateSpaceModel m;
    m.A = rng.normal_matrix(spec.r, spec.r, 0.0, 0.1) + Matrix::Identity(spec.r, spec.r);
    m.C = rng.normal_matrix(spec.n, spec.r);
    const double rho = spectral_radius(m.A);
    if (!(rho > 0)) throw NumericalError("gen_model: sampled A has zero spectral radius");
    m.A *= spec.spectral_radius / rho;
    m.Q = spec.q_scale * Matrix::Identity(spec.r, spec.r);
    m.R = spec.r_scale * Matrix::Identity(spec.n, spec.n);
    return m;
}

struct Sample {
    TimeSeries X;  // T x n observations
    Matrix Z;      // T x r latent states
};

/// Iterates the model for T steps. With steady_start, z_1 ~ N(0, Pi) for the
/// stationary covariance Pi; otherwise z_1 = 0.
inline Sample sample(const StateSpaceModel& model, Eigen::Index T, std::uint64_t seed, bool steady_start = true) {
    model.validate();
    detail::require(T >= 1, "sample length must be positive");
    const Eigen::Index r = model.state_dim(), n = model.obs_dim();
    Rng rng(seed);
    const Matrix q_root = psd_sqrt(model.Q), r_root = psd_sqrt(model.R);
    Matrix Z(T, r), X(T, n);
    Vector z = Vector::Zero(r);
    if (steady_start) z = psd_sqrt(lyapunov(model.A, model.Q)) * rng.normal_vector(r);
    for (Eigen::Index t = 0; t < T; ++t) {
        Z.row(t) = z.transpose();
        X.row(t) = (model.C * z + r_root * rng.normal_vector(n)).transpose();
        z = model.A * z + q_root * rng.normal_vector(r);
    }
    return {TimeSeries(std::move(X)), std::move(Z)};
}

struct SimData {
    StateSpaceModel model;
    Sample train;
    Sample test;
};

/// Model plus independent steady-state train and test samples.
inline SimData simulate(const SimSpec& spec) {
    auto model = gen_model(spec);
    auto train = sample(model, spec.T_train, derive_seed(spec.seed, 1), true);
    auto test = sample(model, spec.T_test, derive_seed(spec.seed, 2), true);
    return {std::move(model), std::move(train), std::move(test)};
}

struct Alignment {
    Matrix S;  // r_true x r_hat, z_true ~ S z_hat
    double rms = 0.0;
};

/// Least-squares map from estimated to true latent states and its residual
/// RMS, sqrt(mean_t ||S z_hat_t - z_t||^2).
inline Alignment state_alignment(const Matrix& Z_hat, const Matrix& Z_true) {
    detail::require(Z_hat.rows() == Z_true.rows() && Z_hat.rows() >= 1, "state sequences must have equal length");
    Alignment out;
    if (Z_hat.cols() == 0) {
        out.S = Matrix::Zero(Z_true.cols(), 0);
    } else {
        out.S = spd_solve(Z_hat.transpose() * Z_hat, Z_hat.transpose() * Z_true, 0.0,
                          "state_alignment: estimated-state Gram matrix")
                    .transpose();
    }
    out.rms = std::sqrt((Z_hat * out.S.transpose() - Z_true).squaredNorm() / static_cast<double>(Z_true.rows()));
    return out;
}

/// sqrt(mean_t ||z_t||^2), the scale state_alignment residuals are compared to.
inline double state_rms(const Matrix& Z) { return std::sqrt(Z.squaredNorm() / static_cast<double>(Z.rows())); }

}  // namespace lrf
