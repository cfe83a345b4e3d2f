#pragma once

// Time-series containers, past/future windowing and block-Hankel helpers.
//
// Window i (0-based here, 1-based in the docs) pairs the past
// p_t = (x_{t-M+1}, ..., x_t) with the future f_t = (x_{t+1}, ..., x_{t+H})
// at forecast origin t = M + i (1-based time). Blocks are stored oldest first.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrf/error.hpp"

namespace lrf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A T x n block of observations; row t holds x_{t+1}.
class TimeSeries {
public:
    TimeSeries() = default;

    explicit TimeSeries(Matrix values, std::vector<std::string> names = {},
                        std::optional<long> t0 = std::nullopt)
        : values_(std::move(values)), names_(std::move(names)), t0_(t0) {
        detail::require(values_.rows() >= 1 && values_.cols() >= 1,
                        "time series must have at least one row and one column");
        detail::require(values_.allFinite(), "time series contains non-finite values");
        detail::require(names_.empty() || names_.size() == static_cast<std::size_t>(values_.cols()),
                        "number of column names does not match number of series");
    }

    const Matrix& values() const noexcept { return values_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::optional<long> t0() const noexcept { return t0_; }

    Eigen::Index length() const noexcept { return values_.rows(); }
    Eigen::Index dim() const noexcept { return values_.cols(); }

    /// Integer time index of row `row`; defaults to 1-based positions.
    long time_at(Eigen::Index row) const noexcept { return t0_.value_or(1) + static_cast<long>(row); }

    std::vector<long> time_index() const {
        std::vector<long> out(static_cast<std::size_t>(length()));
        for (Eigen::Index i = 0; i < length(); ++i) out[static_cast<std::size_t>(i)] = time_at(i);
        return out;
    }

    /// Rows [begin, end) as a new series, keeping names and time index.
    TimeSeries slice(Eigen::Index begin, Eigen::Index end) const {
        detail::require(0 <= begin && begin < end && end <= length(), "invalid time-series slice");
        return TimeSeries(values_.middleRows(begin, end - begin), names_, time_at(begin));
    }

private:
    Matrix values_;
    std::vector<std::string> names_;
    std::optional<long> t0_;
};

/// Stacked past (P, N x Mn) and future (F, N x Hn) windows.
struct WindowedDataset {
    Matrix P;
    Matrix F;
    Eigen::Index n = 0;
    Eigen::Index M = 0;
    Eigen::Index H = 0;
    Eigen::Index N = 0;
};

inline Eigen::Index window_count(Eigen::Index T, Eigen::Index M, Eigen::Index H) { return T - H - M + 1; }

inline WindowedDataset build_windows(const Matrix& x, Eigen::Index M, Eigen::Index H) {
    detail::require(M >= 1 && H >= 1, "memory M and horizon H must be positive");
    detail::require(x.rows() >= M + H, "series length T=" + std::to_string(x.rows()) +
                                           " is shorter than M+H=" + std::to_string(M + H));
    detail::require(x.allFinite(), "series contains non-finite values");
    const Eigen::Index n = x.cols();
    const Eigen::Index N = window_count(x.rows(), M, H);
    WindowedDataset d{Matrix(N, M * n), Matrix(N, H * n), n, M, H, N};
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < M; ++j) d.P.block(i, j * n, 1, n) = x.row(i + j);
        for (Eigen::Index j = 0; j < H; ++j) d.F.block(i, j * n, 1, n) = x.row(i + M + j);
    }
    return d;
}

inline WindowedDataset build_windows(const TimeSeries& series, Eigen::Index M, Eigen::Index H) {
    return build_windows(series.values(), M, H);
}

/// Recovers x_1..x_T from a windowed dataset using its shift structure.
inline Matrix reconstruct_series(const WindowedDataset& d) {
    const Eigen::Index T = d.N + d.M + d.H - 1;
    Matrix x(T, d.n);
    for (Eigen::Index i = 0; i < d.N; ++i) x.row(i) = d.P.block(i, 0, 1, d.n);
    for (Eigen::Index j = 1; j < d.M; ++j) x.row(d.N - 1 + j) = d.P.block(d.N - 1, j * d.n, 1, d.n);
    for (Eigen::Index j = 0; j < d.H; ++j) x.row(d.N - 1 + d.M + j) = d.F.block(d.N - 1, j * d.n, 1, d.n);
    return x;
}

/// True iff the n-wide blocks of Z are constant along block anti-diagonals,
/// up to `tol` in max-norm.
inline bool is_block_hankel(const Matrix& Z, Eigen::Index n, double tol = 0.0) {
    detail::require(n >= 1 && Z.cols() % n == 0, "block width must divide the column count");
    const Eigen::Index B = Z.cols() / n;
    for (Eigen::Index i = 0; i + 1 < Z.rows(); ++i)
        for (Eigen::Index j = 1; j < B; ++j) {
            const double diff = (Z.block(i, j * n, 1, n) - Z.block(i + 1, (j - 1) * n, 1, n)).cwiseAbs().maxCoeff();
            if (!(diff <= tol)) return false;
        }
    return true;
}

/// Subtracts `means` (or the column means when absent) from every row.
inline std::pair<TimeSeries, Vector> center(const TimeSeries& series, const std::optional<Vector>& means = std::nullopt) {
    Vector mu;
    if (means) {
        detail::require(means->size() == series.dim(), "means length does not match series dimension");
        mu = *means;
    } else {
        mu = series.values().colwise().mean().transpose();
    }
    Matrix centered = series.values().rowwise() - mu.transpose();
    return {TimeSeries(std::move(centered), series.names(), series.t0()), mu};
}

}  // namespace lrf
