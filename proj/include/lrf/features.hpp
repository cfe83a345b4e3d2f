#pragma once

// Auxiliary data: deterministic time features, linear de-trending, joint
// fitting of past + auxiliary forecasters, and AR dynamics of latent states.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lrf/core.hpp"
#include "lrf/linalg.hpp"
#include "lrf/solver.hpp"

namespace lrf {

/// Deterministic features of an integer time index.
struct FeatureSpec {
    enum class Products {
        None,
        Unique,      // b_i * b_j for i <= j: base * (base + 1) / 2 extra columns
        AllOrdered,  // b_i * b_j for every ordered pair: base^2 extra columns
    };

    std::vector<double> periods;  // one sin/cos pair per period, in time steps
    bool weekday_flag = false;    // 1 on weekdays, 0 on weekends
    long steps_per_day = 24;
    long first_weekday = 0;  // weekday of t = 0, 0 = Monday
    bool intercept = false;
    Products products = Products::None;

    Eigen::Index base_columns() const noexcept {
        return 2 * static_cast<Eigen::Index>(periods.size()) + (weekday_flag ? 1 : 0) + (intercept ? 1 : 0);
    }

    Eigen::Index columns() const noexcept {
        const Eigen::Index b = base_columns();
        switch (products) {
            case Products::None: return b;
            case Products::Unique: return b + b * (b + 1) / 2;
            case Products::AllOrdered: return b + b * b;
        }
        return b;
    }
};

inline Matrix time_features(const std::vector<long>& t_index, const FeatureSpec& spec) {
    for (double p : spec.periods) detail::require(std::isfinite(p) && p > 0, "feature periods must be positive");
    detail::require(!spec.weekday_flag || spec.steps_per_day >= 1, "steps_per_day must be positive");
    const auto T = static_cast<Eigen::Index>(t_index.size());
    const Eigen::Index b = spec.base_columns();
    Matrix base(T, b);
    for (Eigen::Index i = 0; i < T; ++i) {
        const double t = static_cast<double>(t_index[static_cast<std::size_t>(i)]);
        Eigen::Index c = 0;
        for (double p : spec.periods) {
            const double w = 2.0 * std::numbers::pi * t / p;
            base(i, c++) = std::sin(w);
            base(i, c++) = std::cos(w);
        }
        if (spec.weekday_flag) {
            const long day = static_cast<long>(std::floor(t / static_cast<double>(spec.steps_per_day)));
            const long dow = ((day + spec.first_weekday) % 7 + 7) % 7;
            base(i, c++) = dow < 5 ? 1.0 : 0.0;
        }
        if (spec.intercept) base(i, c++) = 1.0;
    }
    if (spec.products == FeatureSpec::Products::None) return base;

    Matrix out(T, spec.columns());
    out.leftCols(b) = base;
    Eigen::Index c = b;
    for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = spec.products == FeatureSpec::Products::Unique ? i : 0; j < b; ++j)
            out.col(c++) = base.col(i).cwiseProduct(base.col(j));
    return out;
}

/// Linear baseline x_t ~ S a_t.
struct TrendModel {
    Matrix S;  // n x p
};

/// Least squares over S of sum_t ||S a_t - x_t||^2 + lambda ||S||_F^2.
inline TrendModel detrend_fit(const TimeSeries& series, const Matrix& aux, double lambda = 0.0) {
    detail::require(aux.rows() == series.length(), "aux rows must match the series length");
    detail::require(aux.allFinite(), "aux must be finite");
    detail::require(lambda >= 0 && std::isfinite(lambda), "lambda must be finite and nonnegative");
    if (aux.cols() == 0) return {Matrix::Zero(series.dim(), 0)};
    Matrix gram = aux.transpose() * aux;
    gram.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
        throw NumericalError("detrend_fit: auxiliary features are rank deficient; use lambda > 0");
    return {llt.solve(aux.transpose() * series.values()).transpose()};
}

/// Residual series x_t - S a_t.
inline TimeSeries detrend_apply(const TimeSeries& series, const Matrix& aux, const TrendModel& trend) {
    detail::require(aux.rows() == series.length() && aux.cols() == trend.S.cols(), "aux shape mismatch");
    detail::require(trend.S.rows() == series.dim(), "trend has the wrong number of series");
    return TimeSeries(series.values() - aux * trend.S.transpose(), series.names(), series.t0());
}

/// Adds the baseline S a_tau to each horizon block of a stacked forecast.
inline Vector retrend(const Vector& forecast, const Matrix& future_aux, const TrendModel& trend) {
    const Eigen::Index n = trend.S.rows();
    detail::require(future_aux.cols() == trend.S.cols(), "future aux has the wrong number of features");
    detail::require(forecast.size() == future_aux.rows() * n, "forecast length must be H * n");
    Vector out = forecast;
    for (Eigen::Index h = 0; h < future_aux.rows(); ++h)
        out.segment(h * n, n) += trend.S * future_aux.row(h).transpose();
    return out;
}

/// Aux rows paired with each window: a_t at the forecast origin t = M + i.
inline Matrix aux_window_rows(const Matrix& aux, Eigen::Index M, Eigen::Index H) {
    const Eigen::Index N = window_count(aux.rows(), M, H);
    detail::require(N >= 1, "aux too short for the window plan");
    return aux.middleRows(M - 1, N);
}

struct AuxFit {
    LowRankForecaster model;  // theta part
    Matrix Phi;               // p x Hn, f_hat = theta^T p + Phi^T a
    FitReport report;
};

/// Fits f_hat = theta^T p + Phi^T a. With joint_nuclear the stacked [theta; Phi]
/// carries the nuclear penalty (P is augmented with the aux columns);
/// otherwise Phi gets a ridge penalty phi_ridge/2 ||Phi||_F^2 (phi_ridge < 0 means lambda).
inline AuxFit aux_joint_fit(const WindowedDataset& d, const Matrix& aux_rows, double lambda, double kappa,
                            const Loss& loss, const WeightMatrix* W, const FitOptions& opts, bool joint_nuclear,
                            double phi_ridge = -1.0) {
    detail::require(aux_rows.rows() == d.N, "aux rows must be aligned with the windows");
    const Eigen::Index p = aux_rows.cols();
    AuxFit out;
    if (p == 0) {
        auto fit = fit_factored(d, lambda, kappa, loss, W, opts);
        return {std::move(fit.model), Matrix::Zero(0, d.F.cols()), std::move(fit.report)};
    }
    if (joint_nuclear) {
        Matrix P_aug(d.N, d.P.cols() + p);
        P_aug << d.P, aux_rows;
        FitOptions o = opts;
        o.k = std::min<int>(o.k, static_cast<int>(std::min(P_aug.cols(), d.F.cols())));
        auto fit = fit_factored(Problem{P_aug, d.F, d.n, loss, lambda, kappa, W}, d.M, d.H, o);
        const Eigen::Index rows = d.P.cols();
        out.Phi = fit.model.U.bottomRows(p) * fit.model.V;
        fit.model.U = fit.model.U.topRows(rows).eval();
        out.model = std::move(fit.model);
        out.report = std::move(fit.report);
        return out;
    }
    Problem pb{d.P, d.F, d.n, loss, lambda, kappa, W, &aux_rows, phi_ridge < 0 ? lambda : phi_ridge};
    FitOptions o = opts;
    o.k = std::min<int>(o.k, static_cast<int>(std::min(d.P.cols(), d.F.cols())));
    auto raw = fit_factored_raw(pb, o);
    const auto red = reduce_rank(raw.U, raw.V, opts.rank_tol);
    out.model = detail::make_model(red, pb, d.M, d.H);
    out.report = std::move(raw.report);
    out.report.rank = red.rank();
    out.Phi = raw.Phi;
    return out;
}

/// AR(1) model z_{t+1} = A z_t + eps fitted by least squares; W is the residual covariance.
struct LatentDynamics {
    Matrix A;
    Matrix W;
    double spectral_radius = 0.0;
};

inline LatentDynamics latent_ar_fit(const Matrix& Z, double jitter = 0.0) {
    const Eigen::Index T = Z.rows(), r = Z.cols();
    detail::require(T >= r + 1 && T >= 2, "latent_ar_fit needs at least r+1 samples");
    const Matrix X0 = Z.topRows(T - 1), X1 = Z.bottomRows(T - 1);
    LatentDynamics out;
    if (r == 0) {
        out.A.resize(0, 0);
        out.W.resize(0, 0);
        return out;
    }
    out.A = spd_solve(X0.transpose() * X0, X0.transpose() * X1, jitter, "latent_ar_fit: state Gram matrix").transpose();
    const Matrix resid = X1 - X0 * out.A.transpose();
    out.W = resid.transpose() * resid / static_cast<double>(T - 1);
    out.spectral_radius = lrf::spectral_radius(out.A);
    return out;
}

}  // namespace lrf
