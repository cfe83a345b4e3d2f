#pragma once

// Classical linear forecasters: ridge regression, conditional mean from
// autocovariances, iterated AR(M), and the state-space forecaster built from
// a finite-memory Kalman smoother gain.

#include <Eigen/LU>
#include <Eigen/SVD>

#include <string>
#include <vector>

#include "lrf/core.hpp"
#include "lrf/linalg.hpp"
#include "lrf/solver.hpp"

namespace lrf {

/// Dense linear forecaster: f_hat = theta^T p.
struct FullForecaster {
    Matrix coef;  // Mn x Hn
    Eigen::Index n = 0, M = 0, H = 0;
    Vector means;

    const Matrix& theta() const noexcept { return coef; }
    Vector forecast(const Vector& p) const {
        detail::require(p.size() == coef.rows(), "past window has the wrong length");
        return coef.transpose() * p;
    }
};

inline FullForecaster make_full(Matrix theta, Eigen::Index n, Eigen::Index M, Eigen::Index H) {
    detail::require(theta.rows() == M * n && theta.cols() == H * n, "theta must be Mn x Hn");
    detail::require(theta.allFinite(), "theta must be finite");
    return FullForecaster{std::move(theta), n, M, H, Vector::Zero(n)};
}

/// Latent linear-Gaussian model z_{t+1} = A z_t + eps, x_t = C z_t + eta.
struct StateSpaceModel {
    Matrix A;  // r x r
    Matrix C;  // n x r
    Matrix Q;  // r x r process noise covariance
    Matrix R;  // n x n measurement noise covariance

    Eigen::Index state_dim() const noexcept { return A.rows(); }
    Eigen::Index obs_dim() const noexcept { return C.rows(); }

    void validate() const {
        const Eigen::Index r = A.rows(), n = C.rows();
        detail::require(r >= 1 && A.cols() == r, "A must be square");
        detail::require(C.cols() == r, "C must have as many columns as A");
        detail::require(Q.rows() == r && R.rows() == n, "Q must be r x r and R must be n x n");
        detail::require(A.allFinite() && C.allFinite() && Q.allFinite() && R.allFinite(), "model must be finite");
        require_psd(Q, "Q");
        require_psd(R, "R");
        const double rho = spectral_radius(A);
        detail::require(rho < 1.0, "A is not stable (spectral radius " + std::to_string(rho) + ")");
    }
};

/// Autocovariances Sigma_i = E x_t x_{t+i}^T for i = 0..L.
struct AutocovSet {
    std::vector<Matrix> sigmas;
    Eigen::Index lags() const noexcept { return static_cast<Eigen::Index>(sigmas.size()) - 1; }
};

/// Assembles the block-Toeplitz covariance of (x_1, ..., x_B): block (i, j) = Sigma_{j-i}.
inline Matrix block_toeplitz(const AutocovSet& acov, Eigen::Index blocks) {
    detail::require(!acov.sigmas.empty() && acov.lags() >= blocks - 1, "not enough autocovariance lags");
    const Eigen::Index n = acov.sigmas[0].rows();
    Matrix S(blocks * n, blocks * n);
    for (Eigen::Index i = 0; i < blocks; ++i)
        for (Eigen::Index j = 0; j < blocks; ++j)
            S.block(i * n, j * n, n, n) = j >= i ? acov.sigmas[static_cast<std::size_t>(j - i)]
                                                 : Matrix(acov.sigmas[static_cast<std::size_t>(i - j)].transpose());
    return S;
}

/// theta = (Sigma_pp + jitter I)^{-1} Sigma_pf, the Gaussian conditional mean.
inline FullForecaster cond_mean_forecaster(const AutocovSet& acov, Eigen::Index M, Eigen::Index H,
                                           double jitter = 0.0) {
    detail::require(M >= 1 && H >= 1, "M and H must be positive");
    detail::require(jitter >= 0, "jitter must be nonnegative");
    detail::require(acov.lags() >= M + H - 1,
                    "need at least M+H-1=" + std::to_string(M + H - 1) + " autocovariance lags");
    const Eigen::Index n = acov.sigmas[0].rows();
    const Matrix S = block_toeplitz(acov, M + H);
    const Matrix pp = S.topLeftCorner(M * n, M * n);
    const Matrix pf = S.topRightCorner(M * n, H * n);
    return make_full(spd_solve(pp, pf, jitter, "cond_mean_forecaster: Sigma_pp"), n, M, H);
}

/// Ridge regression theta = (P^T P + N lambda I)^{-1} P^T F.
inline FullForecaster ridge_fit(const WindowedDataset& d, double lambda) {
    detail::require(lambda >= 0 && std::isfinite(lambda), "lambda must be finite and nonnegative");
    const Matrix PtP = d.P.transpose() * d.P;
    Matrix gram = PtP;
    gram.diagonal().array() += static_cast<double>(d.N) * lambda;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
        throw NumericalError("ridge_fit: P^T P is singular; use lambda > 0");
    return make_full(llt.solve(d.P.transpose() * d.F), d.n, d.M, d.H);
}

/// Sample second moments (1/N) P^T P and (1/N) P^T F.
struct EmpiricalAutocov {
    Matrix pp;  // Mn x Mn
    Matrix pf;  // Mn x Hn
    Matrix fp() const { return pf.transpose(); }
};

inline EmpiricalAutocov empirical_autocov(const WindowedDataset& d) {
    detail::require(d.N >= 1, "need at least one window");
    const double inv = 1.0 / static_cast<double>(d.N);
    return {inv * d.P.transpose() * d.P, inv * d.P.transpose() * d.F};
}

/// Forecaster from empirical second moments, Sigma_pp^{-1} Sigma_pf.
inline FullForecaster empirical_autocov_forecaster(const WindowedDataset& d, double jitter = 0.0) {
    const auto acov = empirical_autocov(d);
    return make_full(spd_solve(acov.pp, acov.pf, jitter, "empirical autocovariance forecaster: Sigma_pp"), d.n,
                     d.M, d.H);
}

/// Lag estimates Sigma_i = (1/T) sum_t x_t x_{t+i}^T, i = 0..L, of a centered
/// series. The 1/T normalization keeps the block-Toeplitz matrix PSD.
inline AutocovSet sample_autocov(const Matrix& x, Eigen::Index L) {
    const Eigen::Index T = x.rows();
    detail::require(L >= 0 && L < T, "need 0 <= L < T for sample autocovariances");
    AutocovSet out;
    for (Eigen::Index i = 0; i <= L; ++i)
        out.sigmas.push_back(x.topRows(T - i).transpose() * x.bottomRows(T - i) / static_cast<double>(T));
    return out;
}

/// AR(M) model x_{t+1} = sum_i A_i x_{t-i+1} + eps, eps ~ N(0, W).
struct ArModel {
    std::vector<Matrix> A;  // A[0] = A_1 multiplies the most recent value
    Matrix W;
};

inline ArModel ar_fit(const Matrix& x, Eigen::Index M, double lambda = 0.0) {
    detail::require(M >= 1, "AR order must be positive");
    detail::require(x.rows() >= M + 1, "series too short for AR(" + std::to_string(M) + ")");
    const auto d = build_windows(x, M, 1);
    const Matrix theta = ridge_fit(d, lambda).coef;  // Mn x n, block j multiplies x_{t-M+1+j}
    const Eigen::Index n = x.cols();
    ArModel ar;
    for (Eigen::Index i = 1; i <= M; ++i) ar.A.push_back(theta.block((M - i) * n, 0, n, n).transpose());
    const Matrix resid = d.F - d.P * theta;
    ar.W = resid.transpose() * resid / static_cast<double>(d.N);
    return ar;
}

inline ArModel ar_fit(const TimeSeries& series, Eigen::Index M, double lambda = 0.0) {
    return ar_fit(series.values(), M, lambda);
}

/// Conditional mean of the AR(M) model: iterate the dynamics with zero noise.
inline FullForecaster ar_iterated_forecaster(const std::vector<Matrix>& A, Eigen::Index H) {
    const auto M = static_cast<Eigen::Index>(A.size());
    detail::require(M >= 1 && H >= 1, "need at least one AR matrix and a positive horizon");
    const Eigen::Index n = A[0].rows();
    // maps[j]: linear map p -> x_tilde at sequence position j (j < M: observed)
    std::vector<Matrix> maps;
    for (Eigen::Index j = 0; j < M; ++j) {
        Matrix sel = Matrix::Zero(n, M * n);
        sel.block(0, j * n, n, n).setIdentity();
        maps.push_back(std::move(sel));
    }
    Matrix thetaT(H * n, M * n);
    for (Eigen::Index h = 1; h <= H; ++h) {
        Matrix next = Matrix::Zero(n, M * n);
        const Eigen::Index pos = M - 1 + h;
        for (Eigen::Index i = 1; i <= M; ++i) next += A[static_cast<std::size_t>(i - 1)] * maps[static_cast<std::size_t>(pos - i)];
        thetaT.middleRows((h - 1) * n, n) = next;
        maps.push_back(std::move(next));
    }
    return make_full(thetaT.transpose(), n, M, H);
}

/// Companion-form state-space model of an AR(M) process (no measurement noise).
inline StateSpaceModel ar_companion(const ArModel& ar) {
    const auto M = static_cast<Eigen::Index>(ar.A.size());
    const Eigen::Index n = ar.A[0].rows();
    StateSpaceModel m;
    m.A = Matrix::Zero(M * n, M * n);
    for (Eigen::Index i = 0; i < M; ++i) m.A.block(0, i * n, n, n) = ar.A[static_cast<std::size_t>(i)];
    if (M > 1) m.A.block(n, 0, (M - 1) * n, (M - 1) * n).setIdentity();
    m.C = Matrix::Zero(n, M * n);
    m.C.leftCols(n).setIdentity();
    m.Q = Matrix::Zero(M * n, M * n);
    m.Q.topLeftCorner(n, n) = ar.W;
    m.R = Matrix::Zero(n, n);
    return m;
}

/// Solves Pi = A Pi A^T + Q by the doubling iteration.
inline Matrix lyapunov(const Matrix& A, const Matrix& Q, double tol = 1e-12, int max_doublings = 64) {
    detail::require(A.rows() == A.cols() && Q.rows() == A.rows() && Q.cols() == A.cols(),
                    "lyapunov: A and Q must be square of equal size");
    const double rho = spectral_radius(A);
    if (!(rho < 1.0)) throw InputError("lyapunov: A is not stable (spectral radius " + std::to_string(rho) + ")");
    Matrix Pi = Q, Ak = A;
    for (int it = 0; it < max_doublings; ++it) {
        const Matrix inc = Ak * Pi * Ak.transpose();
        Pi += inc;
        Ak = Ak * Ak;
        if (inc.cwiseAbs().maxCoeff() <= tol * std::max(Pi.cwiseAbs().maxCoeff(), 1e-300)) {
            // one fixed-point step absorbs the remaining tail
            Pi = A * Pi * A.transpose() + Q;
            return 0.5 * (Pi + Pi.transpose());
        }
    }
    throw NumericalError("lyapunov: doubling iteration did not converge");
}

/// Steady-state autocovariances of a stable state-space model:
/// Sigma_0 = C Pi C^T + R, Sigma_i = C Pi (A^T)^i C^T.
inline AutocovSet ss_autocov(const StateSpaceModel& model, Eigen::Index L) {
    model.validate();
    detail::require(L >= 0, "number of lags must be nonnegative");
    const Matrix Pi = lyapunov(model.A, model.Q);
    AutocovSet out;
    out.sigmas.push_back(model.C * Pi * model.C.transpose() + model.R);
    Matrix Ai = Matrix::Identity(model.A.rows(), model.A.cols());
    for (Eigen::Index i = 1; i <= L; ++i) {
        Ai = Ai * model.A;
        out.sigmas.push_back(model.C * Pi * Ai.transpose() * model.C.transpose());
    }
    return out;
}

enum class SmootherPrior {
    SteadyState,  // first window state carries the stationary covariance as prior
    None,         // no prior on the first state
};

/// KKT system of the memory-M smoothing problem and the resulting gain.
///
/// Variables y = (z_1..z_M, eps_1..eps_{M-1}, eta_1..eta_M); minimize
/// 1/2 y^T Hq y subject to eps_s = z_{s+1} - A z_s and eta_s = x_s - C z_s.
/// The KKT matrix [Hq E^T; E 0] is solved against every column of the past
/// window at once, so the solution is linear in p and K reads off z_M.
struct SmootherSystem {
    Matrix kkt;
    Matrix rhs;       // one column per entry of p
    Matrix solution;  // kkt * solution = rhs
    Matrix K;         // r x Mn gain, z_t = K p_t
};

inline SmootherSystem kalman_smoother_gain(const StateSpaceModel& model, Eigen::Index M,
                                           SmootherPrior prior = SmootherPrior::SteadyState) {
    model.validate();
    detail::require(M >= 1, "memory M must be positive");
    const Eigen::Index r = model.state_dim(), n = model.obs_dim();
    Eigen::LLT<Matrix> q_llt(model.Q), r_llt(model.R);
    if (q_llt.info() != Eigen::Success || q_llt.rcond() < 1e-14)
        throw InputError("kalman smoother needs a positive definite Q");
    if (r_llt.info() != Eigen::Success || r_llt.rcond() < 1e-14)
        throw InputError("kalman smoother needs a positive definite R");
    const Matrix Qinv = q_llt.solve(Matrix::Identity(r, r));
    const Matrix Rinv = r_llt.solve(Matrix::Identity(n, n));

    const Eigen::Index nz = M * r, ne = (M - 1) * r, nh = M * n;
    const Eigen::Index nvar = nz + ne + nh, ncon = ne + nh;
    const Eigen::Index eps0 = nz, eta0 = nz + ne;

    Matrix Hq = Matrix::Zero(nvar, nvar);
    if (prior == SmootherPrior::SteadyState) {
        const Matrix Pi = lyapunov(model.A, model.Q);
        Eigen::LLT<Matrix> pi_llt(Pi);
        if (pi_llt.info() != Eigen::Success) throw NumericalError("steady-state covariance is singular");
        Hq.topLeftCorner(r, r) = pi_llt.solve(Matrix::Identity(r, r));
    }
    for (Eigen::Index s = 0; s + 1 < M; ++s) Hq.block(eps0 + s * r, eps0 + s * r, r, r) = Qinv;
    for (Eigen::Index s = 0; s < M; ++s) Hq.block(eta0 + s * n, eta0 + s * n, n, n) = Rinv;

    Matrix E = Matrix::Zero(ncon, nvar);
    Matrix b = Matrix::Zero(ncon, M * n);
    for (Eigen::Index s = 0; s + 1 < M; ++s) {  // eps_s - z_{s+1} + A z_s = 0
        const Eigen::Index row = s * r;
        E.block(row, eps0 + s * r, r, r).setIdentity();
        E.block(row, (s + 1) * r, r, r) = -Matrix::Identity(r, r);
        E.block(row, s * r, r, r) = model.A;
    }
    for (Eigen::Index s = 0; s < M; ++s) {  // eta_s + C z_s = x_s
        const Eigen::Index row = ne + s * n;
        E.block(row, eta0 + s * n, n, n).setIdentity();
        E.block(row, s * r, n, r) = model.C;
        b.block(row, s * n, n, n).setIdentity();
    }

    SmootherSystem sys;
    sys.kkt = Matrix::Zero(nvar + ncon, nvar + ncon);
    sys.kkt.topLeftCorner(nvar, nvar) = Hq;
    sys.kkt.topRightCorner(nvar, ncon) = E.transpose();
    sys.kkt.bottomLeftCorner(ncon, nvar) = E;
    sys.rhs = Matrix::Zero(nvar + ncon, M * n);
    sys.rhs.bottomRows(ncon) = b;
    Eigen::FullPivLU<Matrix> lu(sys.kkt);
    if (!lu.isInvertible()) throw NumericalError("kalman smoother KKT system is singular");
    sys.solution = lu.solve(sys.rhs);
    sys.K = sys.solution.block((M - 1) * r, 0, r, M * n);
    return sys;
}

/// Forecaster theta^T = [C A; C A^2; ...; C A^H] K.
struct StateSpaceForecaster {
    Matrix K;      // r x Mn
    Matrix stack;  // Hn x r
    FullForecaster forecaster;
};

inline StateSpaceForecaster ss_forecaster(const StateSpaceModel& model, Eigen::Index M, Eigen::Index H,
                                          SmootherPrior prior = SmootherPrior::SteadyState) {
    detail::require(H >= 1, "horizon H must be positive");
    auto sys = kalman_smoother_gain(model, M, prior);
    const Eigen::Index r = model.state_dim(), n = model.obs_dim();
    Matrix stack(H * n, r);
    Matrix Ah = model.A;
    for (Eigen::Index h = 0; h < H; ++h) {
        stack.middleRows(h * n, n) = model.C * Ah;
        Ah = Ah * model.A;
    }
    Matrix theta = (stack * sys.K).transpose();
    return {std::move(sys.K), stack, make_full(std::move(theta), n, M, H)};
}

inline FullForecaster zero_forecaster(Eigen::Index n, Eigen::Index M, Eigen::Index H) {
    return make_full(Matrix::Zero(M * n, H * n), n, M, H);
}

/// Predicts the training mean: theta = 0 on centered data plus the stored means.
inline FullForecaster mean_forecaster(const TimeSeries& train, Eigen::Index M, Eigen::Index H) {
    auto f = zero_forecaster(train.dim(), M, H);
    f.means = train.values().colwise().mean().transpose();
    return f;
}

/// Truncated-SVD low rank approximation of a dense forecaster. Singular
/// values at or below rel_tol * sigma_max are dropped, as are those past max_rank.
inline LowRankForecaster to_low_rank(const FullForecaster& full, Eigen::Index max_rank = -1, double rel_tol = 1e-8) {
    Eigen::JacobiSVD<Matrix> svd(full.coef, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    Eigen::Index r = s.size() > 0 && s(0) > 0 ? (s.array() > rel_tol * s(0)).count() : 0;
    if (max_rank >= 0) r = std::min(r, max_rank);
    LowRankForecaster m;
    const Vector root = s.head(r).cwiseSqrt();
    m.U = svd.matrixU().leftCols(r) * root.asDiagonal();
    m.V = root.asDiagonal() * svd.matrixV().leftCols(r).transpose();
    m.n = full.n;
    m.M = full.M;
    m.H = full.H;
    m.means = full.means;
    m.singular_values = s.head(r);
    return m;
}

}  // namespace lrf
