#pragma once

// Low rank forecaster fitting. The coefficient matrix theta (Mn x Hn) is
// found by minimizing
//
//   (1/N) 1^T loss(P theta - F) + lambda ||theta||_* + kappa dist(P theta)^2
//
// through the equivalent factored problem over theta = U V,
//
//   (1/N) 1^T loss(P U V - F) + lambda/2 (||U||_F^2 + ||V||_F^2) + kappa dist(P U V)^2,
//
// solved by alternating L-BFGS solves in V (U fixed) and U (V fixed).
// svt_reference_solve is an independent proximal-gradient solver of the
// convex problem on the dense theta, used to cross-check the factored path.

#include <Eigen/SVD>

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrf/core.hpp"
#include "lrf/lbfgs.hpp"
#include "lrf/linalg.hpp"
#include "lrf/objective.hpp"
#include "lrf/random.hpp"

namespace lrf {

/// theta = U V factored through a rank-r latent state z = U^T p.
struct LowRankForecaster {
    Matrix U;  // Mn x r encoder
    Matrix V;  // r x Hn decoder
    Eigen::Index n = 0, M = 0, H = 0;
    double lambda = 0.0;
    double kappa = 0.0;
    Loss loss;
    Vector means;            // centering applied before windowing
    Vector singular_values;  // of theta, descending

    Eigen::Index rank() const noexcept { return U.cols(); }
    Matrix theta() const { return U * V; }

    Vector encode(const Vector& p) const {
        detail::require(p.size() == U.rows(), "past window has the wrong length");
        return U.transpose() * p;
    }
    Vector decode(const Vector& z) const {
        detail::require(z.size() == V.rows(), "latent state has the wrong length");
        return V.transpose() * z;
    }
    Vector forecast(const Vector& p) const { return decode(encode(p)); }
};

struct FitOptions {
    int max_outer = 100;
    int lbfgs_memory = 10;
    int lbfgs_max_iters = 500;
    double grad_tol = 1e-8;
    /// Stop alternating when a sweep lowers the objective by less than this (relative).
    double obj_tol = 1e-8;
    std::uint64_t seed = 0;
    /// Warm start (U, V); padded or truncated to k columns.
    std::optional<std::pair<Matrix, Matrix>> init;
    int k = 20;
    double rank_tol = 1e-8;
    /// Finish with a joint L-BFGS pass over (U, V), which removes slowly
    /// decaying spurious directions that alternation shrinks only geometrically.
    bool polish = true;
};

struct FitReport {
    std::vector<double> objective_trace;  // one entry per half-sweep, starting at the initial point
    double final_objective = 0.0;
    Eigen::Index rank = 0;
    std::array<double, 3> optimality_residuals{0.0, 0.0, 0.0};
    int iterations = 0;  // total inner L-BFGS iterations
    int sweeps = 0;
    double wall_time = 0.0;
    std::vector<int> k_history;
    bool cap_reached = false;
    std::string warning;
};

struct FitResult {
    LowRankForecaster model;
    FitReport report;
};

/// Numerical failure during fitting; carries the objective trace so far.
class FitError : public NumericalError {
public:
    FitError(const std::string& what, std::vector<double> trace)
        : NumericalError(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

/// Data and weights of one fitting problem. `aux` (N x p), when non-empty,
/// adds a ridge-penalized term A Phi to the forecast outside the factorization.
struct Problem {
    const Matrix& P;
    const Matrix& F;
    Eigen::Index n;
    Loss loss;
    double lambda = 0.0;
    double kappa = 0.0;
    const WeightMatrix* W = nullptr;
    const Matrix* aux = nullptr;
    double aux_ridge = 0.0;

    Eigen::Index N() const { return P.rows(); }
    bool has_aux() const { return aux != nullptr && aux->cols() > 0; }
};

namespace detail {

// Gradient of the smooth forecast terms (loss + kappa * inconsistency) with
// respect to the forecast matrix.
inline Matrix forecast_gradient(const Problem& pb, const Matrix& Fhat) {
    Matrix D = loss_grad(Fhat, pb.F, pb.loss, pb.W);
    if (pb.kappa != 0.0) D += pb.kappa * inconsistency_grad(Fhat, pb.n);
    return D;
}

inline double forecast_terms(const Problem& pb, const Matrix& Fhat) {
    double v = loss_value(Fhat, pb.F, pb.loss, pb.W);
    if (pb.kappa != 0.0) v += pb.kappa * inconsistency(Fhat, pb.n);
    return v;
}

inline void check_problem(const Problem& pb) {
    require(pb.P.rows() == pb.F.rows(), "P and F must have the same number of rows");
    require(pb.n >= 1 && pb.F.cols() % pb.n == 0, "block width must divide the column count of F");
    require(pb.lambda >= 0 && std::isfinite(pb.lambda), "lambda must be finite and nonnegative");
    require(pb.kappa >= 0 && std::isfinite(pb.kappa), "kappa must be finite and nonnegative");
    require(pb.P.allFinite() && pb.F.allFinite(), "data must be finite");
    if (pb.W) require(pb.W->matrix().rows() == pb.F.rows() && pb.W->matrix().cols() == pb.F.cols(),
                      "weight matrix shape must match F");
    if (pb.has_aux()) require(pb.aux->rows() == pb.P.rows() && pb.aux->allFinite(), "aux rows must match P");
}

}  // namespace detail

/// Full factored objective at (U, V, Phi).
inline double factored_objective(const Problem& pb, const Matrix& U, const Matrix& V, const Matrix* Phi = nullptr) {
    Matrix Fhat = (pb.P * U) * V;
    double reg = 0.5 * pb.lambda * (U.squaredNorm() + V.squaredNorm());
    if (Phi && Phi->size() > 0) {
        Fhat += *pb.aux * *Phi;
        reg += 0.5 * pb.aux_ridge * Phi->squaredNorm();
    }
    return detail::forecast_terms(pb, Fhat) + reg;
}

/// Gradients of factored_objective with respect to U and V.
inline std::pair<Matrix, Matrix> factored_gradients(const Problem& pb, const Matrix& U, const Matrix& V) {
    const Matrix PU = pb.P * U;
    const Matrix D = detail::forecast_gradient(pb, PU * V);
    return {pb.P.transpose() * (D * V.transpose()) + pb.lambda * U, PU.transpose() * D + pb.lambda * V};
}

/// Gradient of the smooth part (loss + kappa * inconsistency) with respect to theta.
inline Matrix smooth_gradient(const Problem& pb, const Matrix& theta) {
    return pb.P.transpose() * detail::forecast_gradient(pb, pb.P * theta);
}

/// Smallest lambda for which theta = 0 is optimal: ||grad of the smooth part at 0||_2,
/// by power iteration on implicit products with P^T D. The inconsistency
/// gradient vanishes at a zero forecast, so kappa does not enter.
inline double lambda_max(const Matrix& P, const Matrix& F, const Loss& loss, double kappa = 0.0,
                         const WeightMatrix* W = nullptr) {
    detail::require(loss.differentiable(), "lambda_max requires a differentiable loss (l1 is unsupported)");
    detail::require(kappa >= 0, "kappa must be nonnegative");
    detail::require(P.rows() == F.rows(), "P and F must have the same number of rows");
    const Matrix D = loss_grad(Matrix::Zero(F.rows(), F.cols()), F, loss, W);
    if (D.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    return spectral_norm([&](const Vector& v) -> Vector { return P.transpose() * (D * v); },
                         [&](const Vector& u) -> Vector { return D.transpose() * (P * u); }, F.cols());
}

inline double lambda_max(const WindowedDataset& d, const Loss& loss, double kappa = 0.0,
                         const WeightMatrix* W = nullptr) {
    return lambda_max(d.P, d.F, loss, kappa, W);
}

/// Reduced factors of theta = U V and the SVD theta = U_theta diag(sigma) V_theta^T,
/// computed from SVDs of the factors without forming theta.
struct ReducedFactors {
    Matrix U;        // Mn x r, U_theta diag(sqrt(sigma))
    Matrix V;        // r x Hn, diag(sqrt(sigma)) V_theta^T
    Matrix U_theta;  // Mn x r
    Vector sigma;    // r
    Matrix V_theta;  // Hn x r
    Eigen::Index rank() const noexcept { return sigma.size(); }
};

inline ReducedFactors reduce_rank(const Matrix& U, const Matrix& V, double tol = 1e-8) {
    detail::require(U.cols() == V.rows(), "reduce_rank: inner dimensions of U and V differ");
    detail::require(tol > 0, "reduce_rank: tolerance must be positive");
    ReducedFactors out;
    const Eigen::Index rows = U.rows(), cols = V.cols();
    auto empty = [&] {
        out.U.resize(rows, 0);
        out.V.resize(0, cols);
        out.U_theta.resize(rows, 0);
        out.V_theta.resize(cols, 0);
        out.sigma.resize(0);
        return out;
    };
    if (U.cols() == 0 || rows == 0 || cols == 0) return empty();

    Eigen::JacobiSVD<Matrix> svd_u(U, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::JacobiSVD<Matrix> svd_v(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix A = svd_u.singularValues().asDiagonal() * svd_u.matrixV().transpose() * svd_v.matrixU() *
                     svd_v.singularValues().asDiagonal();
    Eigen::JacobiSVD<Matrix> svd_a(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd_a.singularValues();
    if (s.size() == 0 || !(s(0) > 0.0)) return empty();
    const Eigen::Index r = (s.array() > tol * s(0)).count();

    out.sigma = s.head(r);
    out.U_theta = svd_u.matrixU() * svd_a.matrixU().leftCols(r);
    out.V_theta = svd_v.matrixV() * svd_a.matrixV().leftCols(r);
    const Vector root = out.sigma.cwiseSqrt();
    out.U = out.U_theta * root.asDiagonal();
    out.V = root.asDiagonal() * out.V_theta.transpose();
    return out;
}

namespace detail {

// Pads (or truncates) warm-start factors to k columns; new columns get small
// random entries since zero columns are a stationary point of the factored problem.
inline std::pair<Matrix, Matrix> pad_factors(const Matrix& U0, const Matrix& V0, Eigen::Index k, double scale,
                                             Rng& rng) {
    const Eigen::Index keep = std::min<Eigen::Index>(k, U0.cols());
    Matrix U(U0.rows(), k), V(k, V0.cols());
    U.leftCols(keep) = U0.leftCols(keep);
    V.topRows(keep) = V0.topRows(keep);
    if (k > keep) {
        const double sd = 1e-3 * scale / std::sqrt(static_cast<double>(k));
        U.rightCols(k - keep) = rng.normal_matrix(U0.rows(), k - keep, 0.0, sd);
        V.bottomRows(k - keep) = rng.normal_matrix(k - keep, V0.cols(), 0.0, sd);
    }
    return {std::move(U), std::move(V)};
}

inline double data_scale(const Matrix& F) {
    if (F.size() < 2) return 1.0;
    const double mean = F.mean();
    const double var = (F.array() - mean).square().sum() / static_cast<double>(F.size() - 1);
    const double sd = std::sqrt(var);
    return sd > 0 && std::isfinite(sd) ? sd : 1.0;
}

inline Eigen::Map<const Matrix> as_matrix(const Vector& x, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Matrix>(x.data(), rows, cols);
}

inline Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace detail

/// Alternating L-BFGS on the factored problem. Returns the raw factors
/// (k columns), the optional aux coefficients Phi and the report.
struct RawFit {
    Matrix U, V, Phi;
    FitReport report;
};

inline RawFit fit_factored_raw(const Problem& pb, const FitOptions& opts) {
    detail::check_problem(pb);
    detail::require(opts.max_outer >= 1, "max_outer must be at least 1");
    detail::require(opts.lbfgs_memory >= 1, "L-BFGS memory must be at least 1");
    detail::require(opts.grad_tol > 0 && opts.obj_tol > 0, "tolerances must be positive");
    const Eigen::Index rows = pb.P.cols(), cols = pb.F.cols();
    const Eigen::Index k = opts.k;
    detail::require(k >= 1 && k <= std::min(rows, cols),
                    "k=" + std::to_string(k) + " exceeds min(Mn, Hn)=" + std::to_string(std::min(rows, cols)));

    const auto start = std::chrono::steady_clock::now();
    RawFit fit;
    auto& rep = fit.report;
    if (!pb.has_aux() && pb.loss.differentiable()) {
        // theta = 0 is optimal iff the smooth gradient there has spectral norm <= lambda (slack covers
        // lambda taken from a power-iteration lambda_max)
        const Matrix G0 = smooth_gradient(pb, Matrix::Zero(rows, cols));
        if (spectral_norm(G0) <= pb.lambda * (1 + 1e-9)) {
            fit.U = Matrix::Zero(rows, k);
            fit.V = Matrix::Zero(k, cols);
            rep.objective_trace.push_back(factored_objective(pb, fit.U, fit.V));
            rep.final_objective = rep.objective_trace.back();
            rep.k_history.push_back(static_cast<int>(k));
            rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return fit;
        }
    }
    Rng rng(opts.seed);
    const double scale = detail::data_scale(pb.F);
    if (opts.init) {
        detail::require(opts.init->first.rows() == rows && opts.init->second.cols() == cols &&
                            opts.init->first.cols() == opts.init->second.rows(),
                        "warm-start factors have incompatible shapes");
        std::tie(fit.U, fit.V) = detail::pad_factors(opts.init->first, opts.init->second, k, scale, rng);
    } else {
        const double sd = scale / std::sqrt(static_cast<double>(k));
        fit.U = rng.normal_matrix(rows, k, 0.0, sd);
        fit.V = rng.normal_matrix(k, cols, 0.0, sd);
    }
    const bool aux = pb.has_aux();
    if (aux) fit.Phi = Matrix::Zero(pb.aux->cols(), cols);
    const Matrix* phi_ptr = aux ? &fit.Phi : nullptr;

    LbfgsOptions lo;
    lo.memory = opts.lbfgs_memory;
    lo.max_iters = opts.lbfgs_max_iters;
    lo.grad_tol = opts.grad_tol;

    double obj = factored_objective(pb, fit.U, fit.V, phi_ptr);
    if (!std::isfinite(obj)) throw FitError("non-finite objective at the initial point", {});
    rep.objective_trace.push_back(obj);

    auto record = [&](const LbfgsResult& r) {
        rep.iterations += r.iterations;
        if (!std::isfinite(r.f)) throw FitError("inner solve diverged", rep.objective_trace);
        rep.objective_trace.push_back(r.f);
    };

    for (int sweep = 0; sweep < opts.max_outer; ++sweep) {
        const double obj_start = rep.objective_trace.back();

        {  // V step
            const Matrix PU = pb.P * fit.U;
            const Matrix offset = aux ? Matrix(*pb.aux * fit.Phi) : Matrix::Zero(pb.N(), cols);
            const double constant = 0.5 * pb.lambda * fit.U.squaredNorm() +
                                    (aux ? 0.5 * pb.aux_ridge * fit.Phi.squaredNorm() : 0.0);
            auto f = [&](const Vector& x, Vector& g) {
                const auto V = detail::as_matrix(x, k, cols);
                const Matrix Fhat = PU * V + offset;
                const Matrix D = detail::forecast_gradient(pb, Fhat);
                g = detail::as_vector(PU.transpose() * D + pb.lambda * V);
                return detail::forecast_terms(pb, Fhat) + 0.5 * pb.lambda * V.squaredNorm() + constant;
            };
            auto r = lbfgs_minimize(f, detail::as_vector(fit.V), lo);
            fit.V = detail::as_matrix(r.x, k, cols);
            record(r);
        }
        {  // U step
            const Matrix offset = aux ? Matrix(*pb.aux * fit.Phi) : Matrix::Zero(pb.N(), cols);
            const double constant = 0.5 * pb.lambda * fit.V.squaredNorm() +
                                    (aux ? 0.5 * pb.aux_ridge * fit.Phi.squaredNorm() : 0.0);
            const Matrix& V = fit.V;
            auto f = [&](const Vector& x, Vector& g) {
                const auto U = detail::as_matrix(x, rows, k);
                const Matrix Fhat = (pb.P * U) * V + offset;
                const Matrix D = detail::forecast_gradient(pb, Fhat);
                g = detail::as_vector(pb.P.transpose() * (D * V.transpose()) + pb.lambda * U);
                return detail::forecast_terms(pb, Fhat) + 0.5 * pb.lambda * U.squaredNorm() + constant;
            };
            auto r = lbfgs_minimize(f, detail::as_vector(fit.U), lo);
            fit.U = detail::as_matrix(r.x, rows, k);
            record(r);
        }
        if (aux) {  // Phi step
            const Matrix base = (pb.P * fit.U) * fit.V;
            const double constant = 0.5 * pb.lambda * (fit.U.squaredNorm() + fit.V.squaredNorm());
            const Matrix& A = *pb.aux;
            const Eigen::Index p = A.cols();
            auto f = [&](const Vector& x, Vector& g) {
                const auto Phi = detail::as_matrix(x, p, cols);
                const Matrix Fhat = base + A * Phi;
                const Matrix D = detail::forecast_gradient(pb, Fhat);
                g = detail::as_vector(A.transpose() * D + pb.aux_ridge * Phi);
                return detail::forecast_terms(pb, Fhat) + 0.5 * pb.aux_ridge * Phi.squaredNorm() + constant;
            };
            auto r = lbfgs_minimize(f, detail::as_vector(fit.Phi), lo);
            fit.Phi = detail::as_matrix(r.x, p, cols);
            record(r);
        }
        rep.sweeps = sweep + 1;
        const double obj_end = rep.objective_trace.back();
        if (obj_start - obj_end <= opts.obj_tol * std::max(std::abs(obj_end), 1e-300)) break;
    }
    if (opts.polish) {  // joint pass over (U, V)
        const Matrix offset = aux ? Matrix(*pb.aux * fit.Phi) : Matrix::Zero(pb.N(), cols);
        const double constant = aux ? 0.5 * pb.aux_ridge * fit.Phi.squaredNorm() : 0.0;
        const Eigen::Index nu = rows * k;
        auto f = [&](const Vector& x, Vector& g) {
            const Eigen::Map<const Matrix> U(x.data(), rows, k);
            const Eigen::Map<const Matrix> V(x.data() + nu, k, cols);
            const Matrix PU = pb.P * U;
            const Matrix Fhat = PU * V + offset;
            const Matrix D = detail::forecast_gradient(pb, Fhat);
            g.resize(x.size());
            Eigen::Map<Matrix>(g.data(), rows, k) = pb.P.transpose() * (D * V.transpose()) + pb.lambda * U;
            Eigen::Map<Matrix>(g.data() + nu, k, cols) = PU.transpose() * D + pb.lambda * V;
            return detail::forecast_terms(pb, Fhat) + 0.5 * pb.lambda * (U.squaredNorm() + V.squaredNorm()) +
                   constant;
        };
        Vector x(nu + k * cols);
        x.head(nu) = detail::as_vector(fit.U);
        x.tail(k * cols) = detail::as_vector(fit.V);
        LbfgsOptions polish = lo;
        polish.max_iters = 4 * lo.max_iters;
        auto r = lbfgs_minimize(f, x, polish);
        fit.U = detail::as_matrix(r.x.head(nu), rows, k);
        fit.V = detail::as_matrix(r.x.tail(k * cols), k, cols);
        record(r);
    }
    rep.final_objective = rep.objective_trace.back();
    rep.k_history.push_back(static_cast<int>(k));
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return fit;
}

namespace detail {

inline LowRankForecaster make_model(const ReducedFactors& red, const Problem& pb, Eigen::Index M, Eigen::Index H) {
    LowRankForecaster m;
    m.U = red.U;
    m.V = red.V;
    m.n = pb.n;
    m.M = M;
    m.H = H;
    m.lambda = pb.lambda;
    m.kappa = pb.kappa;
    m.loss = pb.loss;
    m.means = Vector::Zero(pb.n);
    m.singular_values = red.sigma;
    return m;
}

}  // namespace detail

/// Optimality residuals of theta = U V for the convex problem:
///   r1 = max(0, ||G + lambda U_t V_t^T||_2 - lambda)
///   r2 = ||U_t^T G + lambda V_t^T||_F
///   r3 = ||G V_t + lambda U_t||_F
/// with G the smooth-part gradient at theta and U_t, V_t its singular vectors.
inline std::array<double, 3> optimality_residuals(const Problem& pb, const Matrix& U, const Matrix& V,
                                                  double rank_tol = 1e-8) {
    detail::require(pb.loss.differentiable(), "optimality residuals require a differentiable loss");
    const auto red = reduce_rank(U, V, rank_tol);
    const Matrix theta = red.U * red.V;
    const Matrix G = smooth_gradient(pb, theta);
    const Matrix S = G + pb.lambda * red.U_theta * red.V_theta.transpose();
    return {std::max(0.0, spectral_norm(S) - pb.lambda),
            (red.U_theta.transpose() * G + pb.lambda * red.V_theta.transpose()).norm(),
            (G * red.V_theta + pb.lambda * red.U_theta).norm()};
}

inline std::array<double, 3> optimality_residuals(const Matrix& U, const Matrix& V, const WindowedDataset& d,
                                                  double lambda, double kappa, const Loss& loss,
                                                  const WeightMatrix* W = nullptr) {
    return optimality_residuals(Problem{d.P, d.F, d.n, loss, lambda, kappa, W}, U, V);
}

inline FitResult fit_factored(const Problem& pb, Eigen::Index M, Eigen::Index H, const FitOptions& opts) {
    auto raw = fit_factored_raw(pb, opts);
    const auto red = reduce_rank(raw.U, raw.V, opts.rank_tol);
    FitResult out{detail::make_model(red, pb, M, H), std::move(raw.report)};
    out.report.rank = red.rank();
    if (pb.loss.differentiable()) out.report.optimality_residuals = optimality_residuals(pb, raw.U, raw.V, opts.rank_tol);
    return out;
}

inline FitResult fit_factored(const WindowedDataset& d, double lambda, double kappa, const Loss& loss,
                              const WeightMatrix* W, const FitOptions& opts) {
    return fit_factored(Problem{d.P, d.F, d.n, loss, lambda, kappa, W}, d.M, d.H, opts);
}

/// Fits with k = opts.k, doubling k (capped at min(Mn, Hn)) and warm-starting
/// from the previous reduced factors while the numerical rank equals k.
inline FitResult fit_auto_rank(const Problem& pb, Eigen::Index M, Eigen::Index H, const FitOptions& opts) {
    const Eigen::Index cap = std::min(pb.P.cols(), pb.F.cols());
    detail::require(opts.k >= 1, "initial k must be at least 1");
    FitOptions o = opts;
    o.k = static_cast<int>(std::min<Eigen::Index>(opts.k, cap));
    FitReport total;
    const auto start = std::chrono::steady_clock::now();
    for (int round = 0;; ++round) {
        if (round > 0) o.seed = opts.seed + static_cast<std::uint64_t>(round);
        FitResult fit = fit_factored(pb, M, H, o);
        total.objective_trace.insert(total.objective_trace.end(), fit.report.objective_trace.begin(),
                                     fit.report.objective_trace.end());
        total.iterations += fit.report.iterations;
        total.sweeps += fit.report.sweeps;
        total.k_history.push_back(o.k);
        const bool full = fit.report.rank == o.k;
        if (!full || o.k >= cap) {
            fit.report.objective_trace = std::move(total.objective_trace);
            fit.report.iterations = total.iterations;
            fit.report.sweeps = total.sweeps;
            fit.report.k_history = std::move(total.k_history);
            if (full) {
                fit.report.cap_reached = true;
                fit.report.warning = "rank reached the cap min(Mn, Hn)=" + std::to_string(cap);
            }
            fit.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return fit;
        }
        o.k = static_cast<int>(std::min<Eigen::Index>(2 * o.k, cap));
        o.init = std::make_pair(fit.model.U, fit.model.V);
    }
}

inline FitResult fit_auto_rank(const WindowedDataset& d, double lambda, double kappa, const Loss& loss,
                               const WeightMatrix* W, const FitOptions& opts) {
    return fit_auto_rank(Problem{d.P, d.F, d.n, loss, lambda, kappa, W}, d.M, d.H, opts);
}

/// Objective of the convex problem at a dense theta.
inline double convex_objective(const Problem& pb, const Matrix& theta) {
    const double nuclear =
        theta.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(theta).singularValues().sum();
    return detail::forecast_terms(pb, pb.P * theta) + pb.lambda * nuclear;
}

struct SvtOptions {
    int max_iters = 200000;
    /// Stop when the gradient mapping falls below 1e-2 * tol * max(lambda, ||grad at 0||_F).
    double tol = 1e-8;
};

struct SvtResult {
    Matrix theta;
    double objective = 0.0;
    int iterations = 0;
    double residual = 0.0;  // Frobenius norm of the gradient mapping
};

/// Singular value soft-thresholding: prox of step * lambda * ||.||_*.
inline Matrix singular_value_threshold(const Matrix& Z, double threshold) {
    Eigen::JacobiSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = (svd.singularValues().array() - threshold).cwiseMax(0.0);
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// Accelerated proximal gradient with backtracking and adaptive restart on the
/// dense theta. Test-scale reference solver.
inline SvtResult svt_reference_solve(const Problem& pb, const SvtOptions& opts = {}) {
    detail::check_problem(pb);
    detail::require(pb.loss.differentiable(), "svt_reference_solve requires a differentiable loss");
    const Eigen::Index rows = pb.P.cols(), cols = pb.F.cols();
    const double pnorm2 = std::pow(spectral_norm(pb.P), 2);
    const double wmax = pb.W ? pb.W->matrix().cwiseAbs().maxCoeff() : 1.0;
    const double lipschitz = std::max(2.0 * pnorm2 * wmax * wmax / std::max<double>(1, pb.N()) +
                                          4.0 * pb.kappa * pnorm2, 1e-300);
    double step = 1.0 / lipschitz;

    auto smooth = [&](const Matrix& th) { return detail::forecast_terms(pb, pb.P * th); };
    const Matrix G0 = smooth_gradient(pb, Matrix::Zero(rows, cols));
    const double grad_scale = std::max({pb.lambda, G0.norm(), 1e-300});

    SvtResult res;
    Matrix theta = Matrix::Zero(rows, cols), prev = theta, y = theta;
    double t_mom = 1.0;
    double obj = convex_objective(pb, theta);
    for (int it = 1; it <= opts.max_iters; ++it) {
        const Matrix gy = smooth_gradient(pb, y);
        const double fy = smooth(y);
        Matrix next;
        // 1/L is a valid step for l2 and Huber; backtracking only guards against
        // an underestimated L, with slack for rounding near convergence
        for (;;) {
            next = singular_value_threshold(y - step * gy, step * pb.lambda);
            const Matrix diff = next - y;
            if (smooth(next) <= fy + (gy.array() * diff.array()).sum() + diff.squaredNorm() / (2.0 * step) +
                                    1e-10 * std::max(std::abs(fy), 1.0))
                break;
            step *= 0.5;
        }
        const double next_obj = convex_objective(pb, next);
        res.residual = (y - next).norm() / step;
        const bool restart = ((y - next).array() * (next - theta).array()).sum() > 0 || next_obj > obj;
        prev = theta;
        theta = next;
        obj = next_obj;
        res.iterations = it;
        if (res.residual <= opts.tol * 1e-2 * grad_scale) {
            res.theta = theta;
            res.objective = obj;
            return res;
        }
        if (restart) {
            t_mom = 1.0;
            y = theta;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
            y = theta + ((t_mom - 1.0) / t_next) * (theta - prev);
            t_mom = t_next;
        }
    }
    throw NumericalError("svt_reference_solve: iteration cap reached (gradient-mapping residual " +
                         std::to_string(res.residual) + ", scale " + std::to_string(grad_scale) + ", step " +
                         std::to_string(step) + ", objective " + std::to_string(obj) + ")");
}

inline Matrix svt_reference_solve(const WindowedDataset& d, double lambda, double kappa, const Loss& loss,
                                  const SvtOptions& opts = {}) {
    return svt_reference_solve(Problem{d.P, d.F, d.n, loss, lambda, kappa}, opts).theta;
}

}  // namespace lrf
