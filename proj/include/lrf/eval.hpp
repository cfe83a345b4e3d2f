#pragma once

// Forecast metrics, (alpha, kappa) sweeps and walk-forward cross-validation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lrf/core.hpp"
#include "lrf/objective.hpp"
#include "lrf/solver.hpp"

namespace lrf {

struct EvalResult {
    double loss = 0.0;
    double inconsistency = 0.0;
    Vector per_horizon_loss;  // H entries, loss restricted to horizon block h
    Eigen::Index n_windows = 0;
};

/// Works for any model exposing theta(), means, n, M and H.
template <class Model>
EvalResult evaluate(const Model& model, const TimeSeries& series, const Loss& loss) {
    detail::require(series.dim() == model.n, "series has the wrong number of components");
    detail::require(model.means.size() == model.n, "model means have the wrong length");
    detail::require(series.length() >= model.M + model.H, "series too short for one window");
    const auto centered = center(series, model.means).first;
    const auto d = build_windows(centered, model.M, model.H);
    const Matrix Fhat = d.P * model.theta();
    EvalResult r;
    r.loss = loss_value(Fhat, d.F, loss);
    r.inconsistency = inconsistency(Fhat, d.n);
    r.per_horizon_loss = loss_per_horizon(Fhat, d.F, d.n, loss);
    r.n_windows = d.N;
    return r;
}

struct SweepRow {
    double alpha = 0.0;
    double kappa = 0.0;
    double lambda = 0.0;
    Eigen::Index rank = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double train_inconsistency = 0.0;
    double test_inconsistency = 0.0;
    double wall_time = 0.0;
    double nuclear_norm = 0.0;  // sum of singular values of theta
    Eigen::Index train_windows = 0;
    Eigen::Index test_windows = 0;
    bool failed = false;
    std::string error;
    std::optional<LowRankForecaster> model;

    /// Regularized training objective without the consistency term.
    double train_objective() const { return train_loss + lambda * nuclear_norm; }
};

struct SweepTable {
    double lambda_max = 0.0;
    std::vector<SweepRow> rows;

    static constexpr const char* csv_header =
        "alpha,kappa,lambda,rank,train_loss,test_loss,train_inconsistency,test_inconsistency,wall_time_s";

    std::string to_csv() const {
        std::string out = std::string(csv_header) + "\n";
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf);
        };
        for (const auto& r : rows) {
            out += num(r.alpha) + "," + num(r.kappa) + "," + num(r.lambda) + "," + std::to_string(r.rank) + "," +
                   num(r.train_loss) + "," + num(r.test_loss) + "," + num(r.train_inconsistency) + "," +
                   num(r.test_inconsistency) + "," + num(r.wall_time) + "\n";
        }
        return out;
    }
};

struct SweepConfig {
    std::vector<double> alphas;
    std::vector<double> kappas{0.0};
    Eigen::Index M = 1, H = 1;
    Loss loss;
    FitOptions opts;
    int jobs = 1;
    bool warm_start = true;
    bool keep_models = false;
    /// Subtract the training means before windowing; off for known zero-mean data.
    bool center = true;
};

namespace detail {

inline SweepRow failed_row(double alpha, double kappa, double lambda, const std::string& what) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SweepRow r;
    r.alpha = alpha;
    r.kappa = kappa;
    r.lambda = lambda;
    r.rank = -1;
    r.train_loss = r.test_loss = r.train_inconsistency = r.test_inconsistency = r.nuclear_norm = nan;
    r.failed = true;
    r.error = what;
    return r;
}

}  // namespace detail

/// Fits every (alpha, kappa) grid point with lambda = alpha * lambda_max of the
/// centered training windows. Each kappa is one chain over the alpha grid in
/// the given order, warm-started from the previous point; chains run on up to
/// `jobs` threads. Rows are kappa-major, alpha-minor. Test data is centered
/// with the training means (or not at all when cfg.center is off).
inline SweepTable sweep(const TimeSeries& train, const TimeSeries& test, const SweepConfig& cfg) {
    detail::require(!cfg.alphas.empty() && !cfg.kappas.empty(), "sweep grids must be nonempty");
    for (double a : cfg.alphas) detail::require(std::isfinite(a) && a >= 0, "alpha must be finite and nonnegative");
    for (double k : cfg.kappas) detail::require(std::isfinite(k) && k >= 0, "kappa must be finite and nonnegative");
    detail::require(train.dim() == test.dim(), "train and test must have the same components");
    detail::require(test.length() >= cfg.M + cfg.H, "test series too short for one window");

    const Vector means = cfg.center ? Vector(train.values().colwise().mean().transpose()) : Vector::Zero(train.dim());
    const auto d = build_windows(center(train, means).first, cfg.M, cfg.H);
    SweepTable table;
    table.lambda_max = lambda_max(d, cfg.loss);
    const std::size_t na = cfg.alphas.size(), nk = cfg.kappas.size();
    table.rows.resize(na * nk);

    auto run_chain = [&](std::size_t ki) {
        const double kappa = cfg.kappas[ki];
        std::optional<std::pair<Matrix, Matrix>> warm;
        for (std::size_t ai = 0; ai < na; ++ai) {
            const double alpha = cfg.alphas[ai];
            const double lambda = alpha * table.lambda_max;
            auto& row = table.rows[ki * na + ai];
            const auto start = std::chrono::steady_clock::now();
            try {
                FitOptions o = cfg.opts;
                o.init = cfg.warm_start ? warm : std::nullopt;
                auto fit = fit_auto_rank(d, lambda, kappa, cfg.loss, nullptr, o);
                fit.model.means = means;
                const auto tr = evaluate(fit.model, train, cfg.loss);
                const auto te = evaluate(fit.model, test, cfg.loss);
                row.alpha = alpha;
                row.kappa = kappa;
                row.lambda = lambda;
                row.rank = fit.model.rank();
                row.train_loss = tr.loss;
                row.test_loss = te.loss;
                row.train_inconsistency = tr.inconsistency;
                row.test_inconsistency = te.inconsistency;
                row.nuclear_norm = fit.model.singular_values.sum();
                row.train_windows = tr.n_windows;
                row.test_windows = te.n_windows;
                if (fit.model.rank() > 0)
                    warm = std::make_pair(fit.model.U, fit.model.V);
                else
                    warm.reset();
                if (cfg.keep_models) row.model = std::move(fit.model);
            } catch (const NumericalError& e) {
                row = detail::failed_row(alpha, kappa, lambda, e.what());
                warm.reset();
            }
            row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(cfg.jobs, 1)), 1, nk);
    if (jobs == 1) {
        for (std::size_t ki = 0; ki < nk; ++ki) run_chain(ki);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(jobs);
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back([&, j] {
                try {
                    for (std::size_t ki = j; ki < nk; ki += jobs) run_chain(ki);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return table;
}

/// Index of the row with the smallest test loss (plus kappa * test
/// inconsistency when include_consistency is set); rows within near_tie
/// (relative) of the best are broken toward larger alpha, then larger kappa.
inline std::size_t select_best(const SweepTable& table, double near_tie = 0.01, bool include_consistency = false) {
    auto metric = [&](const SweepRow& r) {
        return r.test_loss + (include_consistency ? r.kappa * r.test_inconsistency : 0.0);
    };
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : table.rows)
        if (!r.failed && std::isfinite(metric(r))) best = std::min(best, metric(r));
    detail::require(std::isfinite(best), "no successful rows to select from");
    const double cutoff = best + near_tie * std::abs(best);
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (r.failed || !(metric(r) <= cutoff)) continue;
        if (!pick) {
            pick = i;
            continue;
        }
        const auto& p = table.rows[*pick];
        if (r.alpha > p.alpha || (r.alpha == p.alpha && r.kappa > p.kappa)) pick = i;
    }
    return *pick;
}

struct CvSplit {
    Eigen::Index train_end = 0;   // training rows [0, train_end)
    Eigen::Index test_begin = 0;  // test rows [test_begin, test_end)
    Eigen::Index test_end = 0;
};

struct CvResult {
    std::vector<CvSplit> splits;
    std::vector<SweepTable> per_split;
    SweepTable aggregate;
};

/// Expanding-window splits with test segments of length T / (n_splits + 1)
/// at the end of the series.
inline std::vector<CvSplit> cv_splits(Eigen::Index T, int n_splits, Eigen::Index M, Eigen::Index H) {
    detail::require(n_splits >= 1, "n_splits must be at least 1");
    const Eigen::Index test_len = T / (n_splits + 1);
    detail::require(test_len >= M + H, "series too short for the split plan");
    std::vector<CvSplit> out;
    for (int j = 0; j < n_splits; ++j) {
        const Eigen::Index train_end = T - (n_splits - j) * test_len;
        out.push_back({train_end, train_end, train_end + test_len});
    }
    return out;
}

/// Sweeps each split and aggregates. Losses and inconsistencies are averaged
/// with weights equal to the window counts (train metrics by train windows,
/// test metrics by test windows). lambda, rank and the model come from the
/// last split, which trains on the most data; wall times are summed. A grid
/// point that fails in any split is marked failed.
inline CvResult walk_forward_cv(const TimeSeries& series, int n_splits, const SweepConfig& cfg) {
    CvResult out;
    out.splits = cv_splits(series.length(), n_splits, cfg.M, cfg.H);
    for (const auto& s : out.splits) {
        if (!(s.train_end - 1 < s.test_begin)) throw std::logic_error("walk_forward_cv: look-ahead in split plan");
        out.per_split.push_back(sweep(series.slice(0, s.train_end), series.slice(s.test_begin, s.test_end), cfg));
    }
    const auto& last = out.per_split.back();
    out.aggregate.lambda_max = last.lambda_max;
    for (std::size_t i = 0; i < last.rows.size(); ++i) {
        SweepRow agg = last.rows[i];
        bool failed = false;
        double wtr = 0, wte = 0, trl = 0, tel = 0, tri = 0, tei = 0, wall = 0;
        for (const auto& t : out.per_split) {
            const auto& r = t.rows[i];
            wall += r.wall_time;
            if (r.failed) {
                failed = true;
                continue;
            }
            const auto a = static_cast<double>(r.train_windows), b = static_cast<double>(r.test_windows);
            wtr += a;
            wte += b;
            trl += a * r.train_loss;
            tri += a * r.train_inconsistency;
            tel += b * r.test_loss;
            tei += b * r.test_inconsistency;
        }
        if (failed) {
            agg = detail::failed_row(agg.alpha, agg.kappa, agg.lambda, "failed in at least one split");
        } else {
            agg.train_loss = trl / wtr;
            agg.train_inconsistency = tri / wtr;
            agg.test_loss = tel / wte;
            agg.test_inconsistency = tei / wte;
            agg.train_windows = static_cast<Eigen::Index>(wtr);
            agg.test_windows = static_cast<Eigen::Index>(wte);
        }
        agg.wall_time = wall;
        out.aggregate.rows.push_back(std::move(agg));
    }
    return out;
}

}  // namespace lrf
