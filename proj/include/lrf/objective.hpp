#pragma once

// Forecast losses (optionally weighted), the block-Hankel projection and the
// forecast-inconsistency measure, with their gradients with respect to the
// forecast matrix.

#include <cmath>
#include <string>

#include "lrf/core.hpp"

namespace lrf {

struct Loss {
    enum class Kind { SquaredL2, L1, Huber };

    Kind kind = Kind::SquaredL2;
    double delta = 1.0;  // Huber threshold

    static Loss squared() { return {Kind::SquaredL2, 1.0}; }
    static Loss l1() { return {Kind::L1, 1.0}; }
    static Loss huber(double delta = 1.0) {
        detail::require(std::isfinite(delta) && delta > 0, "Huber threshold must be finite and positive");
        return {Kind::Huber, delta};
    }

    bool differentiable() const noexcept { return kind != Kind::L1; }

    std::string name() const {
        switch (kind) {
            case Kind::SquaredL2: return "l2";
            case Kind::L1: return "l1";
            case Kind::Huber: return "huber";
        }
        return "l2";
    }

    static Loss from_name(const std::string& s, double delta = 1.0) {
        if (s == "l2" || s == "squared") return squared();
        if (s == "l1") return l1();
        if (s == "huber") return huber(delta);
        throw InputError("unknown loss '" + s + "' (expected l2, l1 or huber)");
    }

    /// Scalar penalty of one residual entry.
    double value(double r) const noexcept {
        switch (kind) {
            case Kind::SquaredL2: return r * r;
            case Kind::L1: return std::abs(r);
            case Kind::Huber: {
                const double a = std::abs(r);
                return a <= delta ? r * r : delta * (2.0 * a - delta);
            }
        }
        return 0.0;
    }

    /// Derivative of `value`; the L1 subgradient at zero is 0.
    double derivative(double r) const noexcept {
        switch (kind) {
            case Kind::SquaredL2: return 2.0 * r;
            case Kind::L1: return r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
            case Kind::Huber: {
                if (std::abs(r) <= delta) return 2.0 * r;
                return r > 0 ? 2.0 * delta : -2.0 * delta;
            }
        }
        return 0.0;
    }
};

/// Nonnegative N x Hn weights applied elementwise to the forecast residual.
class WeightMatrix {
public:
    explicit WeightMatrix(Matrix w) : w_(std::move(w)) {
        detail::require(w_.allFinite(), "weights must be finite");
        detail::require(w_.size() == 0 || w_.minCoeff() >= 0.0, "weights must be nonnegative");
    }
    const Matrix& matrix() const noexcept { return w_; }

private:
    Matrix w_;
};

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), std::string(what) + ": shape mismatch");
}

}  // namespace detail

/// (1/N) sum over rows of loss(W o (Fhat - F)).
inline double loss_value(const Matrix& Fhat, const Matrix& F, const Loss& loss, const WeightMatrix* W = nullptr) {
    detail::require_same_shape(Fhat, F, "loss_value");
    if (W) detail::require_same_shape(Fhat, W->matrix(), "loss_value weights");
    const Eigen::Index N = F.rows();
    if (N == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index j = 0; j < F.cols(); ++j)
        for (Eigen::Index i = 0; i < N; ++i) {
            double r = Fhat(i, j) - F(i, j);
            if (W) r *= W->matrix()(i, j);
            total += loss.value(r);
        }
    return total / static_cast<double>(N);
}

/// Gradient of loss_value with respect to Fhat.
inline Matrix loss_grad(const Matrix& Fhat, const Matrix& F, const Loss& loss, const WeightMatrix* W = nullptr) {
    detail::require_same_shape(Fhat, F, "loss_grad");
    if (W) detail::require_same_shape(Fhat, W->matrix(), "loss_grad weights");
    const Eigen::Index N = F.rows();
    Matrix g(F.rows(), F.cols());
    if (N == 0) return g;
    const double scale = 1.0 / static_cast<double>(N);
    for (Eigen::Index j = 0; j < F.cols(); ++j)
        for (Eigen::Index i = 0; i < N; ++i) {
            const double r = Fhat(i, j) - F(i, j);
            if (W) {
                const double w = W->matrix()(i, j);
                g(i, j) = scale * w * loss.derivative(w * r);
            } else {
                g(i, j) = scale * loss.derivative(r);
            }
        }
    return g;
}

/// Per-horizon loss: entry h is the loss restricted to forecast block h.
inline Vector loss_per_horizon(const Matrix& Fhat, const Matrix& F, Eigen::Index n, const Loss& loss) {
    detail::require_same_shape(Fhat, F, "loss_per_horizon");
    detail::require(n >= 1 && F.cols() % n == 0, "block width must divide the column count");
    const Eigen::Index H = F.cols() / n;
    Vector out = Vector::Zero(H);
    if (F.rows() == 0) return out;
    for (Eigen::Index h = 0; h < H; ++h)
        out(h) = loss_value(Fhat.middleCols(h * n, n), F.middleCols(h * n, n), loss);
    return out;
}

/// Frobenius projection onto N x Hn block-Hankel matrices: each block is
/// replaced by the mean of the blocks on its anti-diagonal.
inline Matrix hankel_project(const Matrix& Z, Eigen::Index n) {
    detail::require(n >= 1 && Z.cols() % n == 0 && Z.cols() > 0, "block width must divide the column count");
    const Eigen::Index N = Z.rows();
    const Eigen::Index H = Z.cols() / n;
    Matrix out(N, Z.cols());
    if (N == 0) return out;
    Eigen::RowVectorXd acc(n);
    // anti-diagonal d holds blocks (i, j) with i + j = d
    for (Eigen::Index d = 0; d < N + H - 1; ++d) {
        const Eigen::Index i_lo = std::max<Eigen::Index>(0, d - (H - 1));
        const Eigen::Index i_hi = std::min<Eigen::Index>(N - 1, d);
        // shifted mean, exact when all blocks on the diagonal agree
        const Eigen::RowVectorXd first = Z.block(i_lo, (d - i_lo) * n, 1, n);
        acc.setZero();
        for (Eigen::Index i = i_lo + 1; i <= i_hi; ++i) acc += Z.block(i, (d - i) * n, 1, n) - first;
        acc = first + acc / static_cast<double>(i_hi - i_lo + 1);
        for (Eigen::Index i = i_lo; i <= i_hi; ++i) out.block(i, (d - i) * n, 1, n) = acc;
    }
    return out;
}

/// Squared Frobenius distance of Fhat to the block-Hankel set.
inline double inconsistency(const Matrix& Fhat, Eigen::Index n) {
    return (Fhat - hankel_project(Fhat, n)).squaredNorm();
}

inline Matrix inconsistency_grad(const Matrix& Fhat, Eigen::Index n) {
    return 2.0 * (Fhat - hankel_project(Fhat, n));
}

/// Exponentially decaying weights: block (t, tau) gets
/// exp(log(0.5)/h_t)^(tau - t) * exp(log(0.5)/h_tau)^(T - tau) * w_col.
/// Infinite half-lives give no decay.
inline WeightMatrix build_weights(double h_t, double h_tau, const Vector& w_col, Eigen::Index N, Eigen::Index M,
                                  Eigen::Index H, Eigen::Index T) {
    detail::require(h_t > 0 && h_tau > 0, "half-lives must be positive");
    detail::require(w_col.size() >= 1 && w_col.allFinite() && w_col.minCoeff() >= 0,
                    "column weights must be finite and nonnegative");
    detail::require(N == window_count(T, M, H), "N must equal T - H - M + 1");
    const Eigen::Index n = w_col.size();
    const double decay_t = std::exp(std::log(0.5) / h_t);
    const double decay_tau = std::exp(std::log(0.5) / h_tau);
    Matrix W(N, H * n);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Eigen::Index t = M + i;  // 1-based forecast origin
        for (Eigen::Index h = 0; h < H; ++h) {
            const Eigen::Index tau = t + h + 1;
            const double w = std::pow(decay_t, static_cast<double>(tau - t)) *
                             std::pow(decay_tau, static_cast<double>(T - tau));
            W.block(i, h * n, 1, n) = w * w_col.transpose();
        }
    }
    return WeightMatrix(std::move(W));
}

}  // namespace lrf
