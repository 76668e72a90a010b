#pragma once

// JSON configs and reports, CSV outputs.
//
// Model config:
//   {"n_r": 2, "n_e": 2, "n_choices": 3, "u": [[...X...], ...I rows...],
//    "beta": 0.7, "beta_tilde": 0.9, "delta": 0.85, "kernel": [[[...]]]}
// with kernel[i][x][x'] = pi(x' | x, i). Data sets use "ccp" ((I+1) rows of
// X entries) in place of the utilities and discount factors.

#include "data.hpp"
#include "errors.hpp"
#include "exclusion.hpp"
#include "genericity.hpp"
#include "model.hpp"
#include "panel.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

namespace hyperid::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json read_json_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path &path, const json &j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

namespace detail {

template<typename T>
T required(const json &j, const char *key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

inline Eigen::MatrixXd matrix_from(const std::vector<std::vector<double>> &rows, const char *what) {
    if (rows.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) throw DimensionError(std::string("ragged rows in ") + what);
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

inline std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd &m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
    return out;
}

inline std::vector<double> vec_of(const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline TransitionKernel kernel_from(const json &j) {
    auto blocks = required<std::vector<std::vector<std::vector<double>>>>(j, "kernel");
    TransitionKernel k;
    for (const auto &b : blocks) k.by_choice.push_back(matrix_from(b, "kernel"));
    return k;
}

inline json kernel_json(const TransitionKernel &k) {
    json blocks = json::array();
    for (const auto &b : k.by_choice) blocks.push_back(rows_of(b));
    return blocks;
}

} // namespace detail

inline Model model_from_json(const json &j) {
    ModelPrimitives prim;
    prim.states.n_r = detail::required<int>(j, "n_r");
    prim.states.n_e = detail::required<int>(j, "n_e");
    prim.n_choices = detail::required<int>(j, "n_choices");
    prim.u = detail::matrix_from(detail::required<std::vector<std::vector<double>>>(j, "u"), "u");
    prim.disc.beta = detail::required<double>(j, "beta");
    prim.disc.beta_tilde = detail::required<double>(j, "beta_tilde");
    prim.disc.delta = detail::required<double>(j, "delta");
    return validate(std::move(prim), detail::kernel_from(j));
}

inline json model_to_json(const Model &model) {
    const auto &p = model.primitives;
    return json{{"n_r", p.states.n_r},
                {"n_e", p.states.n_e},
                {"n_choices", p.n_choices},
                {"u", detail::rows_of(p.u)},
                {"beta", p.disc.beta},
                {"beta_tilde", p.disc.beta_tilde},
                {"delta", p.disc.delta},
                {"kernel", detail::kernel_json(model.kernel)}};
}

inline Model load_model(const std::filesystem::path &path) { return model_from_json(read_json_file(path)); }

inline DataSet dataset_from_json(const json &j) {
    DataSet d;
    d.states.n_r = detail::required<int>(j, "n_r");
    d.states.n_e = detail::required<int>(j, "n_e");
    d.n_choices = detail::required<int>(j, "n_choices");
    d.P = detail::matrix_from(detail::required<std::vector<std::vector<double>>>(j, "ccp"), "ccp");
    d.kernel = detail::kernel_from(j);
    validate(d);
    return d;
}

inline json dataset_to_json(const DataSet &d) {
    return json{{"n_r", d.states.n_r},
                {"n_e", d.states.n_e},
                {"n_choices", d.n_choices},
                {"ccp", detail::rows_of(d.P)},
                {"kernel", detail::kernel_json(d.kernel)}};
}

inline DataSet load_dataset(const std::filesystem::path &path) { return dataset_from_json(read_json_file(path)); }

inline void write_panel_csv(std::ostream &out, const Panel &panel) {
    out << "agent,period,state,choice\n";
    for (const auto &r : panel) out << r.agent << ',' << r.period << ',' << r.state << ',' << r.choice << '\n';
}

inline void write_ccp_csv(std::ostream &out, const SolvedModel &solved) {
    out.precision(17);
    out << "state,choice,p,p_tilde\n";
    for (Eigen::Index x = 0; x < solved.P.cols(); ++x)
        for (Eigen::Index i = 0; i < solved.P.rows(); ++i)
            out << x << ',' << i << ',' << solved.P(i, x) << ',' << solved.P_tilde(i, x) << '\n';
}

inline void write_values_csv(std::ostream &out, const SolvedModel &solved) {
    out.precision(17);
    out << "state,value\n";
    for (Eigen::Index x = 0; x < solved.V.size(); ++x) out << x << ',' << solved.V(x) << '\n';
}

inline void write_trace_csv(std::ostream &out, const MomentTrace &trace) {
    out.precision(17);
    out << "delta,moment_value\n";
    for (std::size_t k = 0; k < trace.delta.size(); ++k) out << trace.delta[k] << ',' << trace.value[k] << '\n';
}

inline void write_probe_csv(std::ostream &out, const ProbeReport &probe) {
    out.precision(17);
    out << "draw,min_residual\n";
    for (std::size_t k = 0; k < probe.minima.size(); ++k) out << k << ',' << probe.minima[k] << '\n';
}

inline json restriction_json(const ExclusionRestriction &r) {
    return json{{"choice", r.choice}, {"x_r", r.x_r}, {"x_e", r.x_e}, {"x_e_prime", r.x_e_prime}};
}

inline json identified_set_json(const IdentifiedSet &s) {
    json plateaus = json::array();
    for (const auto &[lo, hi] : s.plateaus) plateaus.push_back({lo, hi});
    return json{{"restriction", restriction_json(s.restriction)},
                {"roots", s.roots},
                {"residuals", s.residuals},
                {"degenerate", s.degenerate},
                {"point_identified", s.point_identified()},
                {"grid_size", s.grid_size},
                {"sign_changes", s.sign_changes},
                {"plateaus", plateaus},
                {"empty_intersection", s.empty_intersection}};
}

namespace detail {

// JSON has no infinity; unattained minima become null.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace detail

inline json audit_json(const AuditReport &r) {
    json points = json::array();
    for (const auto &p : r.non_regular)
        points.push_back({{"a", detail::vec_of(p.a)}, {"rank_full", p.rank_full}, {"rank_a", p.rank_a}});
    return json{{"samples", r.samples},
                {"evaluated", r.evaluated},
                {"regular", r.n_regular},
                {"all_regular", r.all_regular()},
                {"min_rank_full", r.min_rank_full},
                {"min_rank_a", r.min_rank_a},
                {"max_rank_a", r.max_rank_a},
                {"m", r.m},
                {"n", r.n},
                {"no_solution", r.no_solution},
                {"failures", r.failures},
                {"inconsistent", r.inconsistent},
                {"non_regular_points", points}};
}

inline json solution_count_json(const SolutionCount &c) {
    json sols = json::array();
    for (const auto &a : c.solutions) sols.push_back(detail::vec_of(a));
    json null_dirs = json::array(), ident_dirs = json::array();
    for (Eigen::Index k = 0; k < c.null_directions.cols(); ++k)
        null_dirs.push_back(detail::vec_of(c.null_directions.col(k)));
    for (Eigen::Index k = 0; k < c.identified_directions.cols(); ++k)
        ident_dirs.push_back(detail::vec_of(c.identified_directions.col(k)));
    return json{{"solutions", sols},
                {"residuals", c.residuals},
                {"distinct", c.clustered},
                {"non_isolated", c.non_isolated},
                {"null_directions", null_dirs},
                {"identified_directions", ident_dirs},
                {"starts", c.starts},
                {"converged", c.converged},
                {"min_residual", detail::finite_or_null(c.min_residual)}};
}

inline json range_probe_json(const ProbeReport &p) {
    json q = json::object();
    for (const auto &[level, value] : p.quantiles) {
        std::ostringstream key;
        key << level;
        q[key.str()] = detail::finite_or_null(value);
    }
    json out{{"draws", p.n_draws},
             {"solvable", p.n_solvable},
             {"fraction_solvable", p.fraction_solvable},
             {"min_residual_quantiles", q},
             {"note", "multistart minima are upper bounds on the attainable residual"}};
    if (!p.warning.empty()) out["warning"] = p.warning;
    return out;
}

} // namespace hyperid::io
