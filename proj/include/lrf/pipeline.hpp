#pragma once

// End-to-end fitting and forecasting on raw series: centering, optional
// de-trending or auxiliary features, data weights, and model bundles.

#include <optional>
#include <string>
#include <vector>

#include "lrf/eval.hpp"
#include "lrf/features.hpp"
#include "lrf/io.hpp"
#include "lrf/solver.hpp"

namespace lrf {

struct BundleFit {
    ModelBundle bundle;
    FitReport report;
    double lambda_max = 0.0;
    EvalResult train;
};

namespace detail {

inline Matrix series_features(const TimeSeries& s, const FeatureSpec& f) { return time_features(s.time_index(), f); }

}  // namespace detail

/// Evaluates a bundle on a raw series.
inline EvalResult evaluate_bundle(const ModelBundle& b, const TimeSeries& series) {
    const auto& m = b.model;
    if (!b.trend && !b.Phi) return evaluate(m, series, m.loss);
    const Matrix aux = detail::series_features(series, *b.features);
    if (b.trend) return evaluate(m, detrend_apply(series, aux, *b.trend), m.loss);
    detail::require(series.dim() == m.n, "series has the wrong number of components");
    const auto d = build_windows(center(series, m.means).first, m.M, m.H);
    const Matrix Fhat = d.P * m.theta() + aux_window_rows(aux, m.M, m.H) * *b.Phi;
    EvalResult r;
    r.loss = loss_value(Fhat, d.F, m.loss);
    r.inconsistency = inconsistency(Fhat, d.n);
    r.per_horizon_loss = loss_per_horizon(Fhat, d.F, d.n, m.loss);
    r.n_windows = d.N;
    return r;
}

/// Fits per the run configuration: alpha is relative to lambda_max of the
/// centered (and de-trended) training windows. Without features this is
/// fit_auto_rank; with features, detrend mode removes a least-squares trend
/// first and joint/ridge modes call aux_joint_fit.
inline BundleFit fit_bundle(const RunConfig& cfg, const TimeSeries& train,
                            const std::optional<std::pair<Matrix, Matrix>>& warm = std::nullopt) {
    cfg.validate_fit();
    const Loss loss = cfg.loss_fn();
    BundleFit out;
    auto& b = out.bundle;
    b.features = cfg.features;

    TimeSeries base = train;
    Matrix aux;
    if (cfg.features) {
        aux = detail::series_features(train, *cfg.features);
        if (cfg.feature_mode == "detrend") {
            b.trend = detrend_fit(train, aux, cfg.feature_lambda);
            base = detrend_apply(train, aux, *b.trend);
        }
    }
    const Vector means = cfg.center ? Vector(base.values().colwise().mean().transpose()) : Vector::Zero(base.dim());
    const auto d = build_windows(center(base, means).first, cfg.M, cfg.H);

    std::optional<WeightMatrix> W;
    if (cfg.h_t) {
        Vector w_col = Vector::Ones(d.n);
        if (!cfg.w_col.empty()) {
            detail::require(static_cast<Eigen::Index>(cfg.w_col.size()) == d.n, "w_col must have one entry per series");
            w_col = Eigen::Map<const Vector>(cfg.w_col.data(), d.n);
        }
        W = build_weights(*cfg.h_t, *cfg.h_tau, w_col, d.N, d.M, d.H, base.length());
    }
    const WeightMatrix* Wp = W ? &*W : nullptr;

    const bool aux_fit = cfg.features && cfg.feature_mode != "detrend";
    detail::require(!(aux_fit && warm), "warm starts are not supported with joint or ridge feature modes");
    const Matrix aux_rows = aux_fit ? aux_window_rows(aux, cfg.M, cfg.H) : Matrix();
    if (loss.kind == Loss::Kind::L1) {
        detail::require(cfg.lambda.has_value(), "alpha needs a differentiable loss; give lambda for l1");
    } else if (aux_fit && cfg.feature_mode == "joint") {
        Matrix P_aug(d.N, d.P.cols() + aux_rows.cols());
        P_aug << d.P, aux_rows;
        out.lambda_max = lambda_max(P_aug, d.F, loss, cfg.kappa, Wp);
    } else {
        out.lambda_max = lambda_max(d, loss, cfg.kappa, Wp);
    }
    const double lambda = cfg.lambda ? *cfg.lambda : *cfg.alpha * out.lambda_max;

    FitOptions opts = cfg.solver;
    opts.seed = cfg.seed;
    opts.init = warm;
    if (aux_fit) {
        auto fit = aux_joint_fit(d, aux_rows, lambda, cfg.kappa, loss, Wp, opts, cfg.feature_mode == "joint");
        b.model = std::move(fit.model);
        b.Phi = std::move(fit.Phi);
        out.report = std::move(fit.report);
    } else {
        auto fit = fit_auto_rank(Problem{d.P, d.F, d.n, loss, lambda, cfg.kappa, Wp}, d.M, d.H, opts);
        b.model = std::move(fit.model);
        out.report = std::move(fit.report);
    }
    b.model.means = means;
    out.train = evaluate_bundle(b, train);
    return out;
}

struct Forecast {
    std::vector<long> times;  // H forecast times
    Matrix values;            // H x n
    Vector latent;            // r
};

/// Forecast from the origin at row `row` (the last observed value), using rows
/// row-M+1..row as the past window.
inline Forecast forecast_at_row(const ModelBundle& b, const TimeSeries& series, Eigen::Index row) {
    const auto& m = b.model;
    detail::require(series.dim() == m.n, "series has the wrong number of components");
    detail::require(row >= m.M - 1 && row < series.length(), "insufficient history: need M rows up to the origin");
    Matrix past = series.values().middleRows(row - m.M + 1, m.M);
    Matrix aux_future;
    Vector aux_origin;
    if (b.features) {
        std::vector<long> t;
        for (Eigen::Index i = row - m.M + 1; i <= row + m.H; ++i) t.push_back(series.time_at(0) + i);
        const Matrix a = time_features(t, *b.features);
        if (b.trend) past -= a.topRows(m.M) * b.trend->S.transpose();
        aux_origin = a.row(m.M - 1).transpose();
        aux_future = a.bottomRows(m.H);
    }
    past.rowwise() -= m.means.transpose();
    Vector p(m.M * m.n);
    for (Eigen::Index i = 0; i < m.M; ++i) p.segment(i * m.n, m.n) = past.row(i).transpose();
    Forecast out;
    out.latent = m.encode(p);
    Vector f = m.decode(out.latent);
    if (b.Phi) f += b.Phi->transpose() * aux_origin;
    for (Eigen::Index h = 0; h < m.H; ++h) f.segment(h * m.n, m.n) += m.means;
    if (b.trend) f = retrend(f, aux_future, *b.trend);
    out.values.resize(m.H, m.n);
    for (Eigen::Index h = 0; h < m.H; ++h) {
        out.values.row(h) = f.segment(h * m.n, m.n).transpose();
        out.times.push_back(series.time_at(row) + h + 1);
    }
    return out;
}

/// Latent states z_t = U^T p_t for every origin with a full past window.
inline std::pair<std::vector<long>, Matrix> latent_states(const ModelBundle& b, const TimeSeries& series) {
    const auto& m = b.model;
    detail::require(series.dim() == m.n, "series has the wrong number of components");
    detail::require(series.length() >= m.M, "series shorter than the past window");
    TimeSeries base = series;
    if (b.trend) base = detrend_apply(series, detail::series_features(series, *b.features), *b.trend);
    const Matrix x = center(base, m.means).first.values();
    const Eigen::Index count = x.rows() - m.M + 1;
    Matrix Z(count, m.rank());
    std::vector<long> times;
    Vector p(m.M * m.n);
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index k = 0; k < m.M; ++k) p.segment(k * m.n, m.n) = x.row(i + k).transpose();
        Z.row(i) = m.encode(p).transpose();
        times.push_back(series.time_at(i + m.M - 1));
    }
    return {std::move(times), std::move(Z)};
}

}  // namespace lrf
