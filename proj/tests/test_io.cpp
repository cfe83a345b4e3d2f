#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace lrf;

TEST(Csv, RoundTripIsExact) {
    Rng rng(81);
    const TimeSeries s(rng.normal_matrix(7, 3), {"a", "b", "c"}, 10);
    std::istringstream in(series_csv(s));
    const auto back = parse_csv(in);
    EXPECT_EQ(back.values(), s.values());
    EXPECT_EQ(back.names(), s.names());
    EXPECT_EQ(back.time_at(0), 10);
}

TEST(Csv, OptionalTimeColumn) {
    std::istringstream a("x,y\n1,2\n3,4\n");
    const auto s = parse_csv(a);
    EXPECT_EQ(s.length(), 2);
    EXPECT_EQ(s.time_at(0), 1);
    std::istringstream b("t,x\n5,1\n6,2\n");
    EXPECT_EQ(parse_csv(b).time_at(1), 6);
    std::istringstream c("t,x\n5,1\n7,2\n");
    EXPECT_THROW(parse_csv(c), InputError);
}

TEST(Csv, ReportsLineOfBadRow) {
    std::istringstream in("x,y\n1,2\n3\n");
    try {
        parse_csv(in, "data.csv");
        FAIL() << "expected an error";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("data.csv:3: expected 2 fields, got 1"), std::string::npos) << e.what();
    }
}

TEST(Csv, RejectsGarbage) {
    std::istringstream a("x\n1.5abc\n");
    EXPECT_THROW(parse_csv(a), InputError);
    std::istringstream b("x\nnan\n");
    EXPECT_THROW(parse_csv(b), InputError);
    std::istringstream c("");
    EXPECT_THROW(parse_csv(c), InputError);
    std::istringstream d("x\n");
    EXPECT_THROW(parse_csv(d), InputError);
    EXPECT_THROW(read_csv("/nonexistent/file.csv"), InputError);
}

TEST(Csv, FormatsSeventeenDigits) { EXPECT_EQ(format_double(0.1), "0.10000000000000001"); }

TEST(ModelJson, RoundTrip) {
    Rng rng(82);
    auto d = lrf::testing::random_windows(rng, 40, 2, 3, 2);
    FitOptions o;
    o.k = 3;
    ModelBundle b;
    b.model = fit_factored(d, 0.2 * lambda_max(d, Loss::huber(0.5)), 0.3, Loss::huber(0.5), nullptr, o).model;
    b.model.means = Vector::Constant(2, 1.25);
    ASSERT_GT(b.model.rank(), 0);
    FeatureSpec f;
    f.periods = {24};
    f.intercept = true;
    b.features = f;
    b.trend = TrendModel{rng.normal_matrix(2, 3)};
    const auto back = model_from_json(json::parse(model_to_json(b).dump()));
    EXPECT_EQ(back.model.U, b.model.U);
    EXPECT_EQ(back.model.V, b.model.V);
    EXPECT_EQ(back.model.means, b.model.means);
    EXPECT_EQ(back.model.loss.kind, Loss::Kind::Huber);
    EXPECT_EQ(back.model.loss.delta, 0.5);
    EXPECT_EQ(back.model.kappa, 0.3);
    EXPECT_EQ(back.trend->S, b.trend->S);
    EXPECT_EQ(back.features->periods, f.periods);
}

TEST(ModelJson, ValidatesShapes) {
    ModelBundle b;
    b.model.n = 1;
    b.model.M = 2;
    b.model.H = 1;
    b.model.U = Matrix::Ones(2, 1);
    b.model.V = Matrix::Ones(1, 1);
    b.model.means = Vector::Zero(1);
    b.model.singular_values = Vector::Constant(1, 2.0);
    const json good = model_to_json(b);
    EXPECT_NO_THROW(model_from_json(good));
    json bad = good;
    bad["U"] = json::array({json::array({1.0})});
    EXPECT_THROW(model_from_json(bad), InputError);
    bad = good;
    bad["singular_values"] = json::array({-1.0});
    EXPECT_THROW(model_from_json(bad), InputError);
    bad = good;
    bad.erase("M");
    EXPECT_THROW(model_from_json(bad), InputError);
    bad = good;
    bad["M"] = "two";
    EXPECT_THROW(model_from_json(bad), InputError);
    bad = good;
    bad["Phi"] = json::array();
    EXPECT_THROW(model_from_json(bad), InputError);
}

TEST(ModelJson, StateSpaceRoundTrip) {
    Rng rng(83);
    const auto m = lrf::testing::random_stable_model(rng, 2, 3);
    const auto back = state_space_from_json(json::parse(state_space_to_json(m).dump()));
    EXPECT_EQ(back.A, m.A);
    EXPECT_EQ(back.R, m.R);
}

TEST(Config, ParsesAllSections) {
    const json j = json::parse(R"({
        "M": 4, "H": 2, "loss": {"name": "huber", "delta": 0.3}, "alpha": 0.1, "kappa": 2,
        "alphas": [0.1, 0.2], "weights": {"h_t": 10, "h_tau": 3, "w_col": [1, 2]},
        "features": {"periods": [24], "intercept": true, "products": "unique"},
        "feature_mode": "joint", "center": false,
        "solver": {"k": 5, "max_outer": 7, "polish": false}, "seed": 9, "jobs": 2
    })");
    const auto c = run_config_from_json(j);
    EXPECT_EQ(c.M, 4);
    EXPECT_EQ(c.loss_fn().kind, Loss::Kind::Huber);
    EXPECT_EQ(c.loss_fn().delta, 0.3);
    EXPECT_EQ(*c.alpha, 0.1);
    EXPECT_FALSE(c.lambda.has_value());
    EXPECT_EQ(*c.h_tau, 3.0);
    EXPECT_EQ(c.w_col.size(), 2u);
    EXPECT_EQ(c.features->products, FeatureSpec::Products::Unique);
    EXPECT_EQ(c.feature_mode, "joint");
    EXPECT_FALSE(c.center);
    EXPECT_EQ(c.solver.k, 5);
    EXPECT_FALSE(c.solver.polish);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_NO_THROW(c.validate_fit());
}

TEST(Config, RejectsInconsistentSettings) {
    RunConfig c;
    c.M = 2;
    c.H = 2;
    EXPECT_THROW(c.validate_fit(), InputError);  // neither alpha nor lambda
    c.alpha = 0.1;
    c.lambda = 0.1;
    EXPECT_THROW(c.validate_fit(), InputError);
    c.lambda.reset();
    c.h_t = 3;
    EXPECT_THROW(c.validate_fit(), InputError);
    c.h_tau = 3;
    c.feature_mode = "magic";
    EXPECT_THROW(c.validate_fit(), InputError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"M": "x"})")), InputError);
    EXPECT_THROW(run_config_from_json(json::parse("[1]")), InputError);
}

TEST(Pipeline, ForecastMatchesTheta) {
    Rng rng(84);
    const TimeSeries s(rng.normal_matrix(50, 2, 3.0, 1.0));
    RunConfig c;
    c.M = 3;
    c.H = 2;
    c.alpha = 0.1;
    const auto fit = fit_bundle(c, s);
    const auto& m = fit.bundle.model;
    const auto f = forecast_at_row(fit.bundle, s, 10);
    Vector p(6);
    for (int i = 0; i < 3; ++i) p.segment(i * 2, 2) = (s.values().row(8 + i) - m.means.transpose()).transpose();
    const Vector expect = m.theta().transpose() * p;
    for (int h = 0; h < 2; ++h)
        EXPECT_LT((f.values.row(h).transpose() - expect.segment(h * 2, 2) - m.means).norm(), 1e-12);
    EXPECT_EQ(f.times[0], s.time_at(10) + 1);
    EXPECT_THROW(forecast_at_row(fit.bundle, s, 1), InputError);
}

TEST(Pipeline, DetrendModeRemovesTrendFirst) {
    Rng rng(85);
    Matrix x = rng.normal_matrix(120, 2, 0.0, 0.1);
    for (int t = 0; t < 120; ++t) x.row(t).array() += 3.0 * std::sin(2 * M_PI * (t + 1) / 12.0);
    const TimeSeries s(x);
    RunConfig c;
    c.M = 2;
    c.H = 2;
    c.alpha = 0.5;
    FeatureSpec f;
    f.periods = {12};
    c.features = f;
    const auto fit = fit_bundle(c, s);
    ASSERT_TRUE(fit.bundle.trend.has_value());
    EXPECT_LT(fit.train.loss, 0.1);
    const auto e = evaluate_bundle(fit.bundle, s);
    EXPECT_NEAR(e.loss, fit.train.loss, 1e-12);
}

TEST(Pipeline, JointAndRidgeModesStoreCoefficients) {
    Rng rng(86);
    Matrix x = rng.normal_matrix(100, 2, 0.0, 0.1);
    for (int t = 0; t < 100; ++t) x.row(t).array() += std::cos(2 * M_PI * (t + 1) / 10.0);
    const TimeSeries s(x);
    for (const char* mode : {"joint", "ridge"}) {
        RunConfig c;
        c.M = 2;
        c.H = 2;
        c.alpha = 0.05;
        FeatureSpec f;
        f.periods = {10};
        c.features = f;
        c.feature_mode = mode;
        const auto fit = fit_bundle(c, s);
        ASSERT_TRUE(fit.bundle.Phi.has_value()) << mode;
        EXPECT_EQ(fit.bundle.Phi->rows(), 2);
        const auto back = model_from_json(json::parse(model_to_json(fit.bundle).dump()));
        const auto a = forecast_at_row(fit.bundle, s, 50), b = forecast_at_row(back, s, 50);
        EXPECT_EQ(a.values, b.values) << mode;
        EXPECT_THROW(fit_bundle(c, s, std::make_pair(Matrix(), Matrix())), InputError);
    }
}

TEST(Pipeline, L1NeedsLambda) {
    Rng rng(87);
    const TimeSeries s(rng.normal_matrix(30, 1));
    RunConfig c;
    c.M = 2;
    c.H = 1;
    c.loss = "l1";
    c.alpha = 0.1;
    EXPECT_THROW(fit_bundle(c, s), InputError);
}

TEST(Pipeline, LatentStatesMatchEncode) {
    Rng rng(88);
    const TimeSeries s(rng.normal_matrix(40, 2));
    RunConfig c;
    c.M = 3;
    c.H = 1;
    c.alpha = 0.05;
    const auto fit = fit_bundle(c, s);
    const auto [times, Z] = latent_states(fit.bundle, s);
    ASSERT_EQ(Z.rows(), 38);
    EXPECT_EQ(times.front(), s.time_at(2));
    const auto f = forecast_at_row(fit.bundle, s, 2);
    EXPECT_LT((Z.row(0).transpose() - f.latent).norm(), 1e-12);
}
