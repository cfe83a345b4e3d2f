#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace lrf;

TEST(Lbfgs, Rosenbrock) {
    Objective f = [](const Vector& x, Vector& g) {
        const double a = 1 - x(0), b = x(1) - x(0) * x(0);
        g.resize(2);
        g(0) = -2 * a - 400 * x(0) * b;
        g(1) = 200 * b;
        return a * a + 100 * b * b;
    };
    Vector x0(2);
    x0 << -1.2, 1.0;
    LbfgsOptions opt;
    opt.max_iters = 1000;
    const auto r = lbfgs_minimize(f, x0, opt);
    EXPECT_EQ(r.status, LbfgsResult::Status::Converged);
    EXPECT_NEAR(r.x(0), 1.0, 1e-6);
    EXPECT_NEAR(r.x(1), 1.0, 1e-6);
}

TEST(Lbfgs, IllConditionedQuadratic) {
    Rng rng(1);
    const Matrix B = rng.normal_matrix(30, 30);
    Matrix A = B * B.transpose();
    A.diagonal().array() += 1e-2;
    const Vector b = rng.normal_vector(30);
    Objective f = [&](const Vector& x, Vector& g) {
        g = A * x - b;
        return 0.5 * x.dot(A * x) - b.dot(x);
    };
    LbfgsOptions opt;
    opt.max_iters = 5000;
    opt.grad_tol = 1e-12;
    const auto r = lbfgs_minimize(f, Vector::Zero(30), opt);
    const Vector xs = A.ldlt().solve(b);
    EXPECT_LT((r.x - xs).norm() / xs.norm(), 1e-6);
}

TEST(Lbfgs, ReportedValueIsTheValueAtX) {
    Objective f = [](const Vector& x, Vector& g) {
        g = 4 * x.array().pow(3).matrix();
        return x.array().pow(4).sum();
    };
    Vector x0 = Vector::Constant(5, 2.0);
    const auto r = lbfgs_minimize(f, x0, {});
    Vector g;
    EXPECT_DOUBLE_EQ(r.f, f(r.x, g));
}

TEST(Lbfgs, NonFiniteObjectiveThrows) {
    Objective f = [](const Vector& x, Vector& g) {
        g = Vector::Constant(x.size(), std::nan(""));
        return std::nan("");
    };
    EXPECT_THROW(lbfgs_minimize(f, Vector::Zero(2), {}), NumericalError);
}
