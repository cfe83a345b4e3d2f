#pragma once

// CSV series and JSON documents (models, reports, run configuration).

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrf/baselines.hpp"
#include "lrf/eval.hpp"
#include "lrf/features.hpp"
#include "lrf/solver.hpp"

namespace lrf {

using json = nlohmann::json;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& where) {
    const std::string t = trim(s);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size()) throw InputError(where + ": not a number: '" + t + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& where) {
    const std::string t = trim(s);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size()) throw InputError(where + ": not an integer: '" + t + "'");
    return v;
}

}  // namespace detail

/// Reads a header line and one row per time step. A first column named `t`
/// holds consecutive integer time indices.
inline TimeSeries parse_csv(std::istream& in, const std::string& source = "csv") {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::trim(line).empty()) {
            header = detail::split_csv_line(line);
            break;
        }
    }
    detail::require(!header.empty(), source + ": missing header line");
    for (auto& h : header) h = detail::trim(h);
    const bool has_t = header.front() == "t";
    std::vector<std::string> names(header.begin() + (has_t ? 1 : 0), header.end());
    detail::require(!names.empty(), source + ": no series columns");

    std::vector<std::vector<double>> rows;
    std::vector<long> times;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        const std::string where = source + ":" + std::to_string(lineno);
        if (fields.size() != header.size())
            throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        std::size_t c = 0;
        if (has_t) {
            const long t = detail::parse_long(fields[c++], where);
            if (!times.empty() && t != times.back() + 1) throw InputError(where + ": time index must increase by 1");
            times.push_back(t);
        }
        std::vector<double> row;
        for (; c < fields.size(); ++c) {
            const double v = detail::parse_double(fields[c], where);
            if (!std::isfinite(v)) throw InputError(where + ": non-finite value");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    detail::require(!rows.empty(), source + ": no data rows");
    Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < names.size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    std::optional<long> t0;
    if (has_t) t0 = times.front();
    return TimeSeries(std::move(x), std::move(names), t0);
}

inline TimeSeries read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return parse_csv(in, path);
}

/// Header plus rows; a `t` column is written first when times is nonempty.
inline std::string matrix_csv(const Matrix& x, const std::vector<std::string>& names, const std::vector<long>& times = {}) {
    detail::require(static_cast<Eigen::Index>(names.size()) == x.cols(), "column name count mismatch");
    detail::require(times.empty() || static_cast<Eigen::Index>(times.size()) == x.rows(), "time count mismatch");
    std::string out;
    if (!times.empty()) out += "t";
    for (std::size_t j = 0; j < names.size(); ++j) out += (j > 0 || !times.empty() ? "," : "") + names[j];
    out += "\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (!times.empty()) out += std::to_string(times[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < x.cols(); ++j) out += (j > 0 || !times.empty() ? "," : "") + format_double(x(i, j));
        out += "\n";
    }
    return out;
}

inline std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count) {
    std::vector<std::string> out;
    for (Eigen::Index i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

inline std::string series_csv(const TimeSeries& s) {
    const auto names = s.names().empty() ? default_names("x", s.dim()) : s.names();
    return matrix_csv(s.values(), names, s.t0() ? s.time_index() : std::vector<long>{});
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << content;
    if (!out) throw InputError("failed writing " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_csv(const std::string& path, const TimeSeries& s) { write_file(path, series_csv(s)); }

// ---------------------------------------------------------------- JSON helpers

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Row-major nested arrays. `cols` fixes the width when there are no rows.
inline Matrix matrix_from_json(const json& j, const std::string& what, Eigen::Index rows, Eigen::Index cols) {
    detail::require(j.is_array() && static_cast<Eigen::Index>(j.size()) == rows,
                    what + ": expected " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        detail::require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
                        what + ": expected " + std::to_string(cols) + " columns in row " + std::to_string(i));
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& v = row[static_cast<std::size_t>(c)];
            detail::require(v.is_number(), what + ": non-numeric entry");
            m(i, c) = v.get<double>();
        }
    }
    detail::require(m.allFinite(), what + ": non-finite entry");
    return m;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
    detail::require(j.is_array(), what + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 && j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0;
    return matrix_from_json(j, what, rows, cols);
}

inline Vector vector_from_json(const json& j, const std::string& what, Eigen::Index size) {
    detail::require(j.is_array() && static_cast<Eigen::Index>(j.size()) == size,
                    what + ": expected " + std::to_string(size) + " entries");
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) {
        detail::require(j[static_cast<std::size_t>(i)].is_number(), what + ": non-numeric entry");
        v(i) = j[static_cast<std::size_t>(i)].get<double>();
    }
    detail::require(v.allFinite(), what + ": non-finite entry");
    return v;
}

namespace detail {

template <class T>
T get_field(const json& j, const char* key, const std::string& what) {
    require(j.is_object() && j.contains(key), what + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(what + ": field '" + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& what) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return get_field<T>(j, key, what);
}

}  // namespace detail

// ---------------------------------------------------------------- features

inline const char* products_name(FeatureSpec::Products p) {
    switch (p) {
        case FeatureSpec::Products::None: return "none";
        case FeatureSpec::Products::Unique: return "unique";
        case FeatureSpec::Products::AllOrdered: return "all_ordered";
    }
    return "none";
}

inline json feature_spec_to_json(const FeatureSpec& f) {
    return {{"periods", f.periods},
            {"weekday_flag", f.weekday_flag},
            {"steps_per_day", f.steps_per_day},
            {"first_weekday", f.first_weekday},
            {"intercept", f.intercept},
            {"products", products_name(f.products)}};
}

inline FeatureSpec feature_spec_from_json(const json& j) {
    const std::string what = "features";
    detail::require(j.is_object(), what + ": expected an object");
    FeatureSpec f;
    f.periods = detail::get_or<std::vector<double>>(j, "periods", {}, what);
    f.weekday_flag = detail::get_or<bool>(j, "weekday_flag", false, what);
    f.steps_per_day = detail::get_or<long>(j, "steps_per_day", 24, what);
    f.first_weekday = detail::get_or<long>(j, "first_weekday", 0, what);
    f.intercept = detail::get_or<bool>(j, "intercept", false, what);
    const auto p = detail::get_or<std::string>(j, "products", "none", what);
    if (p == "none")
        f.products = FeatureSpec::Products::None;
    else if (p == "unique")
        f.products = FeatureSpec::Products::Unique;
    else if (p == "all_ordered")
        f.products = FeatureSpec::Products::AllOrdered;
    else
        throw InputError("features: unknown products mode '" + p + "'");
    detail::require(f.columns() > 0, "features: spec produces no columns");
    return f;
}

// ---------------------------------------------------------------- models

/// A fitted forecaster plus the optional auxiliary-data parts: a linear trend
/// removed before fitting, or a coefficient matrix Phi on the features at the
/// forecast origin.
struct ModelBundle {
    LowRankForecaster model;
    std::optional<FeatureSpec> features;
    std::optional<TrendModel> trend;
    std::optional<Matrix> Phi;  // p x Hn
};

inline json model_to_json(const ModelBundle& b) {
    const auto& m = b.model;
    json j = {{"n", m.n},
              {"M", m.M},
              {"H", m.H},
              {"rank", m.rank()},
              {"lambda", m.lambda},
              {"kappa", m.kappa},
              {"loss", {{"name", m.loss.name()}, {"delta", m.loss.delta}}},
              {"means", vector_to_json(m.means)},
              {"U", matrix_to_json(m.U)},
              {"V", matrix_to_json(m.V)},
              {"singular_values", vector_to_json(m.singular_values)}};
    if (b.features) j["features"] = feature_spec_to_json(*b.features);
    if (b.trend) j["trend"] = {{"S", matrix_to_json(b.trend->S)}};
    if (b.Phi) j["Phi"] = matrix_to_json(*b.Phi);
    return j;
}

inline ModelBundle model_from_json(const json& j) {
    const std::string what = "model";
    ModelBundle b;
    auto& m = b.model;
    m.n = detail::get_field<Eigen::Index>(j, "n", what);
    m.M = detail::get_field<Eigen::Index>(j, "M", what);
    m.H = detail::get_field<Eigen::Index>(j, "H", what);
    const auto rank = detail::get_field<Eigen::Index>(j, "rank", what);
    detail::require(m.n >= 1 && m.M >= 1 && m.H >= 1, what + ": n, M, H must be positive");
    detail::require(rank >= 0 && rank <= std::min(m.M, m.H) * m.n, what + ": invalid rank");
    m.lambda = detail::get_field<double>(j, "lambda", what);
    m.kappa = detail::get_field<double>(j, "kappa", what);
    detail::require(m.lambda >= 0 && m.kappa >= 0, what + ": lambda and kappa must be nonnegative");
    const json loss = j.contains("loss") ? j.at("loss") : json();
    if (loss.is_string())
        m.loss = Loss::from_name(loss.get<std::string>());
    else
        m.loss = Loss::from_name(detail::get_field<std::string>(loss, "name", "model.loss"),
                                 detail::get_or<double>(loss, "delta", 1.0, "model.loss"));
    m.means = vector_from_json(j.value("means", json()), "model.means", m.n);
    m.U = matrix_from_json(j.value("U", json()), "model.U", m.M * m.n, rank);
    m.V = matrix_from_json(j.value("V", json()), "model.V", rank, m.H * m.n);
    m.singular_values = vector_from_json(j.value("singular_values", json()), "model.singular_values", rank);
    for (Eigen::Index i = 0; i < rank; ++i)
        detail::require(m.singular_values(i) > 0 && (i == 0 || m.singular_values(i) <= m.singular_values(i - 1)),
                        "model.singular_values must be positive and nonincreasing");
    if (j.contains("features")) b.features = feature_spec_from_json(j.at("features"));
    const Eigen::Index p = b.features ? b.features->columns() : 0;
    if (j.contains("trend")) {
        detail::require(b.features.has_value(), "model.trend requires features");
        b.trend = TrendModel{matrix_from_json(j.at("trend").value("S", json()), "model.trend.S", m.n, p)};
    }
    if (j.contains("Phi")) {
        detail::require(b.features.has_value(), "model.Phi requires features");
        b.Phi = matrix_from_json(j.at("Phi"), "model.Phi", p, m.H * m.n);
    }
    return b;
}

inline json state_space_to_json(const StateSpaceModel& s) {
    return {{"A", matrix_to_json(s.A)}, {"C", matrix_to_json(s.C)}, {"Q", matrix_to_json(s.Q)}, {"R", matrix_to_json(s.R)}};
}

inline StateSpaceModel state_space_from_json(const json& j) {
    StateSpaceModel s;
    s.A = matrix_from_json(j.value("A", json()), "A");
    s.C = matrix_from_json(j.value("C", json()), "C");
    s.Q = matrix_from_json(j.value("Q", json()), "Q");
    s.R = matrix_from_json(j.value("R", json()), "R");
    s.validate();
    return s;
}

inline json report_to_json(const FitReport& r) {
    return {{"objective_trace", r.objective_trace},
            {"final_objective", r.final_objective},
            {"rank", r.rank},
            {"optimality_residuals", r.optimality_residuals},
            {"iterations", r.iterations},
            {"sweeps", r.sweeps},
            {"wall_time", r.wall_time},
            {"k_history", r.k_history},
            {"cap_reached", r.cap_reached},
            {"warning", r.warning}};
}

inline json eval_to_json(const EvalResult& e) {
    return {{"loss", e.loss},
            {"inconsistency", e.inconsistency},
            {"per_horizon_loss", vector_to_json(e.per_horizon_loss)},
            {"n_windows", e.n_windows}};
}

// ---------------------------------------------------------------- run configuration

/// Settings shared by the fit, sweep and cv commands. JSON keys match the
/// field names; command-line flags override values read from a file.
struct RunConfig {
    Eigen::Index M = 0, H = 0;
    std::string loss = "l2";
    double delta = 1.0;
    std::optional<double> alpha;
    std::optional<double> lambda;
    double kappa = 0.0;
    std::vector<double> alphas;
    std::vector<double> kappas;
    std::optional<double> h_t, h_tau;  // data weights, both or neither
    std::vector<double> w_col;
    std::optional<FeatureSpec> features;
    std::string feature_mode = "detrend";  // detrend | joint | ridge
    double feature_lambda = 0.0;
    bool center = true;
    FitOptions solver;
    std::uint64_t seed = 0;
    int jobs = 1;
    int n_splits = 0;
    std::string train, test, model, report, output;

    Loss loss_fn() const { return Loss::from_name(loss, delta); }

    void validate_fit() const {
        detail::require(M >= 1 && H >= 1, "M and H must be positive");
        detail::require(alpha.has_value() != lambda.has_value(), "give exactly one of alpha and lambda");
        if (alpha) detail::require(std::isfinite(*alpha) && *alpha >= 0, "alpha must be nonnegative");
        if (lambda) detail::require(std::isfinite(*lambda) && *lambda >= 0, "lambda must be nonnegative");
        detail::require(std::isfinite(kappa) && kappa >= 0, "kappa must be nonnegative");
        detail::require(h_t.has_value() == h_tau.has_value(), "give both h_t and h_tau or neither");
        detail::require(feature_mode == "detrend" || feature_mode == "joint" || feature_mode == "ridge",
                        "feature_mode must be detrend, joint or ridge");
    }
};

inline RunConfig run_config_from_json(const json& j) {
    const std::string what = "config";
    detail::require(j.is_object(), "config: expected a JSON object");
    RunConfig c;
    c.M = detail::get_or<Eigen::Index>(j, "M", 0, what);
    c.H = detail::get_or<Eigen::Index>(j, "H", 0, what);
    if (j.contains("loss") && j.at("loss").is_object()) {
        c.loss = detail::get_field<std::string>(j.at("loss"), "name", "config.loss");
        c.delta = detail::get_or<double>(j.at("loss"), "delta", 1.0, "config.loss");
    } else {
        c.loss = detail::get_or<std::string>(j, "loss", "l2", what);
        c.delta = detail::get_or<double>(j, "delta", 1.0, what);
    }
    if (j.contains("alpha") && !j.at("alpha").is_null()) c.alpha = detail::get_field<double>(j, "alpha", what);
    if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = detail::get_field<double>(j, "lambda", what);
    c.kappa = detail::get_or<double>(j, "kappa", 0.0, what);
    c.alphas = detail::get_or<std::vector<double>>(j, "alphas", {}, what);
    c.kappas = detail::get_or<std::vector<double>>(j, "kappas", {}, what);
    if (j.contains("weights") && !j.at("weights").is_null()) {
        const auto& w = j.at("weights");
        c.h_t = detail::get_field<double>(w, "h_t", "config.weights");
        c.h_tau = detail::get_field<double>(w, "h_tau", "config.weights");
        c.w_col = detail::get_or<std::vector<double>>(w, "w_col", {}, "config.weights");
    }
    if (j.contains("features") && !j.at("features").is_null()) c.features = feature_spec_from_json(j.at("features"));
    c.feature_mode = detail::get_or<std::string>(j, "feature_mode", "detrend", what);
    c.feature_lambda = detail::get_or<double>(j, "feature_lambda", 0.0, what);
    c.center = detail::get_or<bool>(j, "center", true, what);
    if (j.contains("solver") && !j.at("solver").is_null()) {
        const auto& s = j.at("solver");
        const std::string sw = "config.solver";
        c.solver.max_outer = detail::get_or<int>(s, "max_outer", c.solver.max_outer, sw);
        c.solver.lbfgs_memory = detail::get_or<int>(s, "lbfgs_memory", c.solver.lbfgs_memory, sw);
        c.solver.lbfgs_max_iters = detail::get_or<int>(s, "lbfgs_max_iters", c.solver.lbfgs_max_iters, sw);
        c.solver.grad_tol = detail::get_or<double>(s, "grad_tol", c.solver.grad_tol, sw);
        c.solver.obj_tol = detail::get_or<double>(s, "obj_tol", c.solver.obj_tol, sw);
        c.solver.k = detail::get_or<int>(s, "k", c.solver.k, sw);
        c.solver.rank_tol = detail::get_or<double>(s, "rank_tol", c.solver.rank_tol, sw);
        c.solver.polish = detail::get_or<bool>(s, "polish", c.solver.polish, sw);
    }
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0, what);
    c.jobs = detail::get_or<int>(j, "jobs", 1, what);
    c.n_splits = detail::get_or<int>(j, "n_splits", 0, what);
    c.train = detail::get_or<std::string>(j, "train", "", what);
    c.test = detail::get_or<std::string>(j, "test", "", what);
    c.model = detail::get_or<std::string>(j, "model", "", what);
    c.report = detail::get_or<std::string>(j, "report", "", what);
    c.output = detail::get_or<std::string>(j, "output", "", what);
    return c;
}

inline RunConfig read_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

inline json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

}  // namespace lrf
