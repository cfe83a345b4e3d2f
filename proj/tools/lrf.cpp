// lrf: command-line front end for low rank forecasting.
//
//   lrf simulate --out-dir data --seed 1
//   lrf fit --train data/train.csv --M 12 --H 12 --alpha 0.1
//   lrf forecast --model model.json --input data/test.csv --at 200
//   lrf evaluate --model model.json --input data/test.csv
//   lrf sweep --train data/train.csv --test data/test.csv --M 12 --H 12 --alphas 0.05,0.1,0.2
//   lrf cv --input series.csv --splits 3 --M 12 --H 12 --alphas 0.05,0.1
//   lrf detrend --input series.csv --periods 24,168 --intercept
//   lrf latent --model model.json --input series.csv
//
// Exit codes: 0 ok, 2 bad input, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lrf/lrf.hpp"

namespace fs = std::filesystem;
using namespace lrf;

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Flags shared by fit, sweep and cv. Values given on the command line
// override the config file.
struct ConfigFlags {
    std::string config;
    Eigen::Index M = 0, H = 0;
    std::string loss;
    double delta = 1.0, alpha = 0.0, lambda = 0.0, kappa = 0.0;
    double h_t = 1.0, h_tau = 1.0;
    int k = 20, max_outer = 100, jobs = 1;
    std::uint64_t seed = 0;
    bool no_center = false;
    std::vector<double> alphas, kappas;

    CLI::Option *o_M{}, *o_H{}, *o_loss{}, *o_delta{}, *o_alpha{}, *o_lambda{}, *o_kappa{}, *o_k{}, *o_outer{},
        *o_seed{}, *o_h_t{}, *o_h_tau{}, *o_alphas{}, *o_kappas{}, *o_jobs{};

    void add(CLI::App* app, bool grid) {
        app->add_option("--config", config, "JSON run configuration");
        o_M = app->add_option("--M", M, "past window length");
        o_H = app->add_option("--H", H, "forecast horizon");
        o_loss = app->add_option("--loss", loss, "l2, l1 or huber");
        o_delta = app->add_option("--delta", delta, "Huber threshold");
        o_kappa = app->add_option("--kappa", kappa, "consistency weight");
        o_k = app->add_option("--k", k, "initial factor width");
        o_outer = app->add_option("--max-outer", max_outer, "alternating sweeps");
        o_seed = app->add_option("--seed", seed, "random seed");
        app->add_flag("--no-center", no_center, "do not subtract training means");
        if (grid) {
            o_alphas = app->add_option("--alphas", alphas, "alpha grid")->delimiter(',');
            o_kappas = app->add_option("--kappas", kappas, "kappa grid")->delimiter(',');
            o_jobs = app->add_option("--jobs", jobs, "parallel kappa chains");
        } else {
            o_alpha = app->add_option("--alpha", alpha, "lambda as a fraction of lambda_max");
            o_lambda = app->add_option("--lambda", lambda, "absolute nuclear norm weight");
            o_h_t = app->add_option("--h-t", h_t, "half-life over forecast origins");
            o_h_tau = app->add_option("--h-tau", h_tau, "half-life over horizons");
        }
    }

    RunConfig resolve() const {
        RunConfig c = config.empty() ? RunConfig{} : read_run_config(config);
        if (o_M->count()) c.M = M;
        if (o_H->count()) c.H = H;
        if (o_loss->count()) c.loss = loss;
        if (o_delta->count()) c.delta = delta;
        if (o_kappa->count()) c.kappa = kappa;
        if (o_k->count()) c.solver.k = k;
        if (o_outer->count()) c.solver.max_outer = max_outer;
        if (o_seed->count()) c.seed = seed;
        if (no_center) c.center = false;
        if (o_alpha && o_alpha->count()) {
            c.alpha = alpha;
            c.lambda.reset();
        }
        if (o_lambda && o_lambda->count()) {
            c.lambda = lambda;
            if (!o_alpha->count()) c.alpha.reset();
        }
        if (o_h_t && o_h_t->count()) c.h_t = h_t;
        if (o_h_tau && o_h_tau->count()) c.h_tau = h_tau;
        if (o_alphas && o_alphas->count()) c.alphas = alphas;
        if (o_kappas && o_kappas->count()) c.kappas = kappas;
        if (o_jobs && o_jobs->count()) c.jobs = jobs;
        return c;
    }
};

SweepConfig sweep_config(const RunConfig& c) {
    detail::require(c.M >= 1 && c.H >= 1, "M and H must be positive");
    detail::require(!c.alphas.empty(), "alpha grid is empty");
    SweepConfig s;
    s.alphas = c.alphas;
    s.kappas = c.kappas.empty() ? std::vector<double>{c.kappa} : c.kappas;
    s.M = c.M;
    s.H = c.H;
    s.loss = c.loss_fn();
    s.opts = c.solver;
    s.opts.seed = c.seed;
    s.jobs = c.jobs;
    s.center = c.center;
    return s;
}

Eigen::Index row_of_time(const TimeSeries& s, long t) {
    const long row = t - s.time_at(0);
    detail::require(row >= 0 && row < s.length(), "time " + std::to_string(t) + " is outside the input");
    return row;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low rank forecasting of vector time series"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "sample a random stable state space model");
    SimSpec spec;
    std::string sim_dir = "data";
    sim->add_option("--n", spec.n, "series dimension");
    sim->add_option("--r", spec.r, "state dimension");
    sim->add_option("--T-train", spec.T_train, "training length");
    sim->add_option("--T-test", spec.T_test, "test length");
    sim->add_option("--spectral-radius", spec.spectral_radius);
    sim->add_option("--q-scale", spec.q_scale);
    sim->add_option("--r-scale", spec.r_scale);
    sim->add_option("--seed", spec.seed);
    sim->add_option("--out-dir", sim_dir, "output directory (default: data)");

    // fit
    auto* fit = app.add_subcommand("fit", "fit a low rank forecaster");
    ConfigFlags fit_flags;
    fit_flags.add(fit, false);
    std::string fit_train, fit_model = "model.json", fit_report = "report.json", fit_warm;
    fit->add_option("--train", fit_train, "training CSV");
    fit->add_option("--model", fit_model, "output model JSON");
    fit->add_option("--report", fit_report, "output report JSON");
    fit->add_option("--warm-start", fit_warm, "model JSON to start from");

    // forecast
    auto* fc = app.add_subcommand("forecast", "forecast H steps from one origin");
    std::string fc_model = "model.json", fc_input, fc_output = "forecast.csv";
    std::optional<long> fc_at;
    bool fc_latent = false;
    fc->add_option("--model", fc_model);
    fc->add_option("--input", fc_input)->required();
    fc->add_option("--at", fc_at, "origin time (default: last row)");
    fc->add_option("--output", fc_output);
    fc->add_flag("--emit-latent", fc_latent, "append latent state columns");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "loss and inconsistency on a series");
    std::string ev_model = "model.json", ev_input, ev_output = "metrics.json";
    ev->add_option("--model", ev_model);
    ev->add_option("--input", ev_input)->required();
    ev->add_option("--output", ev_output);

    // sweep
    auto* sw = app.add_subcommand("sweep", "fit over alpha and kappa grids");
    ConfigFlags sw_flags;
    sw_flags.add(sw, true);
    std::string sw_train, sw_test, sw_output = "sweep.csv";
    sw->add_option("--train", sw_train);
    sw->add_option("--test", sw_test);
    sw->add_option("--output", sw_output);

    // cv
    auto* cv = app.add_subcommand("cv", "walk-forward cross-validation over a grid");
    ConfigFlags cv_flags;
    cv_flags.add(cv, true);
    std::string cv_input, cv_output = "cv.csv";
    int cv_splits = 0;
    cv->add_option("--input", cv_input);
    cv->add_option("--splits", cv_splits, "number of expanding splits");
    cv->add_option("--output", cv_output);

    // detrend
    auto* dt = app.add_subcommand("detrend", "remove a least-squares trend in time features");
    std::string dt_input, dt_config, dt_residual = "residual.csv", dt_trend = "trend.json", dt_products = "none";
    std::vector<double> dt_periods;
    bool dt_weekday = false, dt_intercept = false;
    long dt_steps = 24, dt_first = 0;
    double dt_lambda = 0.0;
    dt->add_option("--input", dt_input)->required();
    dt->add_option("--config", dt_config, "JSON with a features object");
    dt->add_option("--periods", dt_periods)->delimiter(',');
    dt->add_flag("--weekday", dt_weekday);
    dt->add_option("--steps-per-day", dt_steps);
    dt->add_option("--first-weekday", dt_first);
    dt->add_flag("--intercept", dt_intercept);
    dt->add_option("--products", dt_products, "none, unique or all_ordered");
    dt->add_option("--lambda", dt_lambda, "ridge weight");
    dt->add_option("--residual", dt_residual);
    dt->add_option("--trend", dt_trend);

    // latent
    auto* lt = app.add_subcommand("latent", "latent states and their AR(1) dynamics");
    std::string lt_model = "model.json", lt_input, lt_output = "latent.csv", lt_ar = "ar.json";
    double lt_jitter = 0.0;
    lt->add_option("--model", lt_model);
    lt->add_option("--input", lt_input)->required();
    lt->add_option("--output", lt_output);
    lt->add_option("--ar", lt_ar);
    lt->add_option("--jitter", lt_jitter);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*sim) {
            const auto data = simulate(spec);
            fs::create_directories(sim_dir);
            const fs::path dir(sim_dir);
            write_csv((dir / "train.csv").string(), data.train.X);
            write_csv((dir / "test.csv").string(), data.test.X);
            write_file((dir / "model.json").string(), dump(state_space_to_json(data.model)));
            write_file((dir / "states.csv").string(), matrix_csv(data.train.Z, default_names("z", spec.r)));
            write_file((dir / "test_states.csv").string(), matrix_csv(data.test.Z, default_names("z", spec.r)));
        } else if (*fit) {
            RunConfig c = fit_flags.resolve();
            if (!fit_train.empty()) c.train = fit_train;
            detail::require(!c.train.empty(), "no training CSV given");
            const auto train = read_csv(c.train);
            std::optional<std::pair<Matrix, Matrix>> warm;
            if (!fit_warm.empty()) {
                const auto prev = model_from_json(parse_json_file(fit_warm));
                warm = std::make_pair(prev.model.U, prev.model.V);
            }
            const auto result = fit_bundle(c, train, warm);
            json rep = report_to_json(result.report);
            rep["lambda"] = result.bundle.model.lambda;
            rep["lambda_max"] = result.lambda_max;
            if (c.alpha) rep["alpha"] = *c.alpha;
            rep["kappa"] = c.kappa;
            rep["train_loss"] = result.train.loss;
            rep["train_inconsistency"] = result.train.inconsistency;
            write_file(fit_model, dump(model_to_json(result.bundle)));
            write_file(fit_report, dump(rep));
            if (!result.report.warning.empty()) std::cerr << "warning: " << result.report.warning << "\n";
        } else if (*fc) {
            const auto bundle = model_from_json(parse_json_file(fc_model));
            const auto input = read_csv(fc_input);
            const Eigen::Index row = fc_at ? row_of_time(input, *fc_at) : input.length() - 1;
            const auto f = forecast_at_row(bundle, input, row);
            auto names = input.names();
            Matrix out = f.values;
            if (fc_latent) {
                const auto r = f.latent.size();
                out.conservativeResize(Eigen::NoChange, out.cols() + r);
                for (Eigen::Index h = 0; h < out.rows(); ++h) out.row(h).tail(r) = f.latent.transpose();
                for (const auto& z : default_names("z", r)) names.push_back(z);
            }
            write_file(fc_output, matrix_csv(out, names, f.times));
        } else if (*ev) {
            const auto bundle = model_from_json(parse_json_file(ev_model));
            const auto result = evaluate_bundle(bundle, read_csv(ev_input));
            json j = eval_to_json(result);
            j["loss_name"] = bundle.model.loss.name();
            write_file(ev_output, dump(j));
        } else if (*sw) {
            RunConfig c = sw_flags.resolve();
            if (!sw_train.empty()) c.train = sw_train;
            if (!sw_test.empty()) c.test = sw_test;
            detail::require(!c.train.empty() && !c.test.empty(), "sweep needs --train and --test");
            const auto table = sweep(read_csv(c.train), read_csv(c.test), sweep_config(c));
            write_file(sw_output, table.to_csv());
            for (const auto& r : table.rows)
                if (r.failed) std::cerr << "alpha " << r.alpha << " kappa " << r.kappa << " failed: " << r.error << "\n";
        } else if (*cv) {
            RunConfig c = cv_flags.resolve();
            if (!cv_input.empty()) c.train = cv_input;
            if (cv_splits > 0) c.n_splits = cv_splits;
            detail::require(!c.train.empty(), "cv needs --input");
            const auto res = walk_forward_cv(read_csv(c.train), c.n_splits, sweep_config(c));
            write_file(cv_output, res.aggregate.to_csv());
        } else if (*dt) {
            FeatureSpec f;
            if (!dt_config.empty()) {
                const auto j = parse_json_file(dt_config);
                detail::require(j.contains("features"), dt_config + ": missing features object");
                f = feature_spec_from_json(j.at("features"));
                dt_lambda = j.value("feature_lambda", dt_lambda);
            } else {
                json j = {{"periods", dt_periods}, {"weekday_flag", dt_weekday}, {"steps_per_day", dt_steps},
                          {"first_weekday", dt_first}, {"intercept", dt_intercept}, {"products", dt_products}};
                f = feature_spec_from_json(j);
            }
            const auto input = read_csv(dt_input);
            const Matrix aux = time_features(input.time_index(), f);
            const auto trend = detrend_fit(input, aux, dt_lambda);
            write_csv(dt_residual, detrend_apply(input, aux, trend));
            write_file(dt_trend, dump({{"S", matrix_to_json(trend.S)}, {"features", feature_spec_to_json(f)}}));
        } else if (*lt) {
            const auto bundle = model_from_json(parse_json_file(lt_model));
            const auto [times, Z] = latent_states(bundle, read_csv(lt_input));
            write_file(lt_output, matrix_csv(Z, default_names("z", Z.cols()), times));
            const auto ar = latent_ar_fit(Z, lt_jitter);
            write_file(lt_ar, dump({{"A", matrix_to_json(ar.A)},
                                    {"W", matrix_to_json(ar.W)},
                                    {"spectral_radius", ar.spectral_radius}}));
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
