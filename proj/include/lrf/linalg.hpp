#pragma once

// Small dense linear-algebra helpers shared by the solver and the baselines.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "lrf/core.hpp"
#include "lrf/random.hpp"

namespace lrf {

struct PowerIterationOptions {
    int max_iters = 100000;
    /// Stop when ||B v - mu v|| <= tol * mu for B = G^T G.
    double tol = 1e-10;
    std::uint64_t seed = 0x5eed;
};

/// Largest singular value of an implicit linear map G (rows x cols), given
/// products x -> G x and y -> G^T y. Power iteration on G^T G.
inline double spectral_norm(const std::function<Vector(const Vector&)>& apply,
                            const std::function<Vector(const Vector&)>& apply_transpose, Eigen::Index cols,
                            const PowerIterationOptions& opt = {}) {
    if (cols == 0) return 0.0;
    Rng rng(opt.seed);
    Vector v = rng.normal_vector(cols);
    v.normalize();
    double mu = 0.0, residual = 0.0;
    for (int it = 0; it < opt.max_iters; ++it) {
        Vector w = apply_transpose(apply(v));
        mu = v.dot(w);
        if (mu <= 0.0) return 0.0;  // v in the null space of G: G = 0 for a generic start
        residual = (w - mu * v).norm();
        if (residual <= opt.tol * mu) return std::sqrt(mu);
        v = w / w.norm();
    }
    throw NumericalError("power iteration did not converge (relative residual " +
                         std::to_string(residual / std::max(mu, 1e-300)) + ")");
}

inline double spectral_norm(const Matrix& G) {
    if (G.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Matrix>(G).singularValues()(0);
}

/// Count of singular values above rel_tol times the largest.
inline Eigen::Index numerical_rank(const Matrix& A, double rel_tol = 1e-8) {
    if (A.size() == 0) return 0;
    const Vector s = Eigen::JacobiSVD<Matrix>(A).singularValues();
    if (s(0) <= 0.0) return 0;
    return (s.array() > rel_tol * s(0)).count();
}

inline double spectral_radius(const Matrix& A) {
    detail::require(A.rows() == A.cols(), "spectral radius needs a square matrix");
    if (A.size() == 0) return 0.0;
    return Eigen::EigenSolver<Matrix>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
inline Matrix psd_sqrt(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
    const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

inline void require_psd(const Matrix& S, const std::string& name) {
    detail::require(S.rows() == S.cols(), name + " must be square");
    detail::require((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff()),
                    name + " must be symmetric");
    if (S.size() == 0) return;
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    detail::require(lo >= -1e-10, name + " must be positive semidefinite");
}

/// Solves (A + jitter I) X = B for symmetric positive definite A.
inline Matrix spd_solve(const Matrix& A, const Matrix& B, double jitter, const std::string& what) {
    Matrix Aj = A;
    Aj.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(Aj);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-15)
        throw NumericalError(what + ": matrix is singular or indefinite");
    return llt.solve(B);
}

}  // namespace lrf
