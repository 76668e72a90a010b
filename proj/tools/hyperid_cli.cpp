// hyperid: command-line front end.
//
// Exit status: 0 success, 1 numerical failure, 2 usage or configuration error.

#include <hyperid/ddc_system.hpp>
#include <hyperid/exclusion.hpp>
#include <hyperid/genericity.hpp>
#include <hyperid/io.hpp>
#include <hyperid/model.hpp>
#include <hyperid/panel.hpp>
#include <hyperid/system.hpp>

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using hyperid::io::json;

namespace {

struct CommonFlags {
    std::string config;
    std::string data;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    std::string out = ".";
    double tol = 1e-12;
};

struct UsageError : hyperid::Error {
    using Error::Error;
};

/// Collects output files and writes the deterministic command report.
class RunReport {
  public:
    RunReport(std::string command, const CommonFlags &flags) : command_(std::move(command)), flags_(flags) {
        fs::create_directories(flags.out);
    }

    fs::path path(const std::string &name) const { return fs::path(flags_.out) / name; }

    std::ofstream open(const std::string &name) {
        std::ofstream out(path(name));
        if (!out) throw hyperid::ConfigError("cannot write '" + path(name).string() + "'");
        outputs_.push_back(name);
        return out;
    }

    void write_json(const std::string &name, const json &j) {
        hyperid::io::write_json_file(path(name), j);
        outputs_.push_back(name);
    }

    json &summary() { return summary_; }
    json &config_echo() { return config_; }

    void finish(std::chrono::steady_clock::time_point started) {
        json report{{"schema_version", hyperid::io::kSchemaVersion},
                    {"command", command_},
                    {"config", config_},
                    {"seed", flags_.seed},
                    {"tol", flags_.tol},
                    {"outputs", outputs_},
                    {"summary", summary_}};
        const std::string name = command_ + "_report.json";
        hyperid::io::write_json_file(path(name), report);
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::cout << command_ << ": wrote " << outputs_.size() + 1 << " file(s) to " << flags_.out << " in " << wall
                  << " s\n";
    }

  private:
    std::string command_;
    CommonFlags flags_;
    std::vector<std::string> outputs_;
    json summary_ = json::object();
    json config_ = json::object();
};

void add_common(CLI::App *cmd, CommonFlags &f) {
    cmd->add_option("--seed", f.seed, "Random seed");
    cmd->add_option("--workers", f.workers, "Worker threads (0 = machine parallelism)");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--tol", f.tol, "Fixed-point tolerance")->check(CLI::PositiveNumber);
}

hyperid::Model require_model(const CommonFlags &f) {
    if (f.config.empty()) throw UsageError("--config is required");
    return hyperid::io::load_model(f.config);
}

hyperid::SolverOptions solver_options(const CommonFlags &f, bool newton) {
    hyperid::SolverOptions so;
    so.tol = f.tol;
    if (newton) so.method = hyperid::FixedPointMethod::newton;
    return so;
}

// ---------------------------------------------------------------- solve

struct SolveFlags {
    CommonFlags common;
    bool newton = false;
    bool residuals = false;
};

int cmd_solve(const SolveFlags &f) {
    auto started = std::chrono::steady_clock::now();
    auto model = require_model(f.common);
    RunReport report("solve", f.common);
    report.config_echo() = hyperid::io::model_to_json(model);

    auto solved = hyperid::solve_fixed_point(model, solver_options(f.common, f.newton));
    {
        auto out = report.open("ccp.csv");
        hyperid::io::write_ccp_csv(out, solved);
    }
    {
        auto out = report.open("values.csv");
        hyperid::io::write_values_csv(out, solved);
    }
    report.summary()["iterations"] = solved.iterations;
    report.summary()["residual"] = solved.residual;
    if (f.residuals) {
        auto data = hyperid::generated_data(model, solved);
        auto dims = hyperid::SystemDims::of(data.states, data.n_choices);
        auto a = hyperid::ParamVector::pack(model.primitives.u, model.primitives.disc);
        hyperid::ResidualOptions ro;
        ro.tol = f.common.tol;
        Eigen::VectorXd g = hyperid::g_tilde(a, data, ro);
        auto out = report.open("residuals.csv");
        hyperid::write_residuals_csv(out, g, dims);
        report.summary()["residual_sup_norm"] = g.lpNorm<Eigen::Infinity>();
        report.summary()["dims"] = {{"n", dims.n()}, {"m", dims.m()}, {"s", dims.s()}};
    }
    report.finish(started);
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateFlags {
    CommonFlags common;
    std::int64_t agents = 1000;
    int periods = 10;
    bool laplace = false;
};

int cmd_simulate(const SimulateFlags &f) {
    auto started = std::chrono::steady_clock::now();
    auto model = require_model(f.common);
    RunReport report("simulate", f.common);
    report.config_echo() = hyperid::io::model_to_json(model);

    hyperid::SolverOptions so = solver_options(f.common, true);
    auto solved = hyperid::solve_fixed_point(model, so);
    auto panel = hyperid::simulate_panel(solved, model.kernel, f.agents, f.periods, f.common.seed, f.common.workers);
    {
        auto out = report.open("panel.csv");
        hyperid::io::write_panel_csv(out, panel);
    }
    auto &s = report.summary();
    s["agents"] = f.agents;
    s["periods"] = f.periods;
    s["records"] = panel.size();
    if (panel.empty()) {
        s["estimated"] = false;
    } else {
        hyperid::FrequencyOptions fo;
        fo.laplace = f.laplace;
        auto est = hyperid::estimate_frequencies(panel, model.primitives.states, model.primitives.n_choices, fo);
        report.write_json("estimates.json", hyperid::io::dataset_to_json(est));
        double kernel_err = 0.0;
        for (int i = 0; i < model.primitives.n_choices; ++i)
            kernel_err = std::max(kernel_err, (est.kernel[i] - model.kernel[i]).lpNorm<Eigen::Infinity>());
        s["estimated"] = true;
        s["ccp_max_abs_error"] = (est.P - solved.P).lpNorm<Eigen::Infinity>();
        s["kernel_max_abs_error"] = kernel_err;
    }
    report.finish(started);
    return 0;
}

// ---------------------------------------------------------------- audit

struct AuditFlags {
    CommonFlags common;
    std::string example;
    bool rank = false;
    int samples = 100;
    bool count = false;
    std::string b;
    int starts = 200;
    int probe = 0;
    int probe_starts = 20;
    bool on_range = false;
    double res_tol = 1e-8;
    double cluster_tol = 1e-4;
    double svd_tol = 1e-8;
};

Eigen::VectorXd parse_vector(const std::string &text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            values.push_back(std::stod(item));
        } catch (const std::exception &) {
            throw UsageError("cannot parse '" + item + "' as a number");
        }
    }
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int cmd_audit(const AuditFlags &f) {
    auto started = std::chrono::steady_clock::now();
    int sources = !f.example.empty() + !f.common.config.empty() + !f.common.data.empty();
    if (sources != 1) throw UsageError("audit needs exactly one of --example, --config, --data");

    hyperid::SmoothSystem sys;
    std::optional<Eigen::VectorXd> nominal_b;
    json config = json::object();
    if (!f.example.empty()) {
        sys = hyperid::builtin_example(f.example);
        config["example"] = f.example;
    } else {
        hyperid::DataSet data;
        if (!f.common.config.empty()) {
            auto model = hyperid::io::load_model(f.common.config);
            config = hyperid::io::model_to_json(model);
            auto solved = hyperid::solve_fixed_point(model, solver_options(f.common, true));
            data = hyperid::generated_data(model, solved);
        } else {
            data = hyperid::io::load_dataset(f.common.data);
            config = hyperid::io::dataset_to_json(data);
        }
        hyperid::DdcWrapOptions wo;
        wo.tol = f.common.tol;
        sys = hyperid::wrap_ddc(data, hyperid::SystemDims::of(data.states, data.n_choices), wo);
        nominal_b = data.flatten();
    }

    RunReport report("audit", f.common);
    report.config_echo() = config;
    json audit{{"schema_version", hyperid::io::kSchemaVersion},
               {"system", sys.name},
               {"dims", {{"n", sys.n}, {"s", sys.s}, {"m", sys.m}}}};

    bool any = false;
    if (f.rank) {
        any = true;
        hyperid::AuditOptions ao;
        ao.n_samples = f.samples;
        ao.seed = f.common.seed;
        ao.svd_tol = f.svd_tol;
        ao.workers = f.common.workers;
        auto r = hyperid::regular_value_audit(sys, ao);
        audit["rank_audit"] = hyperid::io::audit_json(r);
        report.summary()["rank_regular"] = std::to_string(r.n_regular) + "/" + std::to_string(r.evaluated);
    }
    if (f.count) {
        any = true;
        Eigen::VectorXd b;
        if (!f.b.empty())
            b = parse_vector(f.b);
        else if (nominal_b)
            b = *nominal_b;
        else
            throw UsageError("--count on a built-in example needs --b");
        if (b.size() != sys.s) throw UsageError("--b must have " + std::to_string(sys.s) + " entries");
        hyperid::CountOptions co;
        co.n_starts = f.starts;
        co.seed = f.common.seed;
        co.res_tol = f.res_tol;
        co.cluster_tol = f.cluster_tol;
        co.svd_tol = f.svd_tol;
        co.workers = f.common.workers;
        auto c = hyperid::count_solutions(sys, b, co);
        audit["solution_count"] = hyperid::io::solution_count_json(c);
        audit["solution_count"]["b"] = std::vector<double>(b.data(), b.data() + b.size());
        report.summary()["distinct_solutions"] = c.clustered;
        report.summary()["non_isolated"] = c.non_isolated;
    }
    if (f.probe > 0) {
        any = true;
        hyperid::ProbeOptions po;
        po.n_draws = f.probe;
        po.seed = f.common.seed;
        po.res_tol = f.res_tol;
        po.n_starts = f.probe_starts;
        po.on_range = f.on_range;
        po.workers = f.common.workers;
        auto p = hyperid::range_probe(sys, po);
        audit["range_probe"] = hyperid::io::range_probe_json(p);
        audit["range_probe"]["on_range"] = f.on_range;
        auto out = report.open("probe_minima.csv");
        hyperid::io::write_probe_csv(out, p);
        report.summary()["fraction_solvable"] = p.fraction_solvable;
    }
    if (!any) throw UsageError("audit needs at least one of --rank, --count, --probe");
    report.write_json("audit.json", audit);
    report.finish(started);
    return 0;
}

// ---------------------------------------------------------------- identify

struct IdentifyFlags {
    CommonFlags common;
    std::vector<std::string> restrictions;
    int grid = 1000;
    double root_tol = 1e-10;
    double match_tol = 1e-6;
    bool trace = false;
};

hyperid::ExclusionRestriction parse_restriction(const std::string &text) {
    Eigen::VectorXd v = parse_vector(text);
    if (v.size() != 4) throw UsageError("restriction must be 'choice,x_r,x_e,x_e_prime', got '" + text + "'");
    return hyperid::ExclusionRestriction{static_cast<int>(v(0)), static_cast<int>(v(1)), static_cast<int>(v(2)),
                                         static_cast<int>(v(3))};
}

int cmd_identify(const IdentifyFlags &f) {
    auto started = std::chrono::steady_clock::now();
    if (f.common.config.empty() == f.common.data.empty())
        throw UsageError("identify needs exactly one of --config, --data");

    hyperid::DataSet data;
    json config;
    if (!f.common.config.empty()) {
        auto model = hyperid::io::load_model(f.common.config);
        config = hyperid::io::model_to_json(model);
        if (model.primitives.disc.beta != 1.0 || model.primitives.disc.beta_tilde != 1.0)
            std::cerr << "identify: warning: config is not exponential; data are inverted assuming beta = beta~ = 1\n";
        data = hyperid::generated_data(model, hyperid::solve_fixed_point(model, solver_options(f.common, true)));
    } else {
        data = hyperid::io::load_dataset(f.common.data);
        config = hyperid::io::dataset_to_json(data);
    }

    std::vector<hyperid::ExclusionRestriction> restrictions;
    for (const auto &r : f.restrictions) restrictions.push_back(parse_restriction(r));
    if (restrictions.empty()) restrictions = hyperid::consecutive_restrictions(data.states, data.n_choices);
    for (const auto &r : restrictions) hyperid::validate(r, data.states, data.n_choices);

    RunReport report("identify", f.common);
    report.config_echo() = config;

    hyperid::IdentifiedSetOptions opts;
    opts.grid_size = f.grid;
    opts.root_tol = f.root_tol;
    opts.workers = f.common.workers;

    json sets = json::array();
    std::vector<hyperid::IdentifiedSet> usable;
    for (std::size_t k = 0; k < restrictions.size(); ++k) {
        const auto &r = restrictions[k];
        try {
            auto set = hyperid::identified_set(data, r, opts);
            sets.push_back(hyperid::io::identified_set_json(set));
            if (!set.degenerate) usable.push_back(std::move(set));
        } catch (const hyperid::DegenerateRestriction &) {
            json entry{{"restriction", hyperid::io::restriction_json(r)},
                       {"roots", json::array()},
                       {"residuals", json::array()},
                       {"degenerate", true}};
            sets.push_back(entry);
        }
        if (f.trace) {
            auto out = report.open("trace_" + std::to_string(k) + ".csv");
            hyperid::io::write_trace_csv(out, hyperid::moment_trace(data, r, opts));
        }
    }
    report.write_json("identified_sets.json", json{{"schema_version", hyperid::io::kSchemaVersion}, {"sets", sets}});
    report.summary()["restrictions"] = restrictions.size();
    report.summary()["usable"] = usable.size();

    if (restrictions.size() >= 2) {
        json inter{{"schema_version", hyperid::io::kSchemaVersion}, {"match_tol", f.match_tol}};
        if (usable.empty()) {
            inter["roots"] = json::array();
            inter["empty_intersection"] = true;
        } else {
            auto set = hyperid::intersect_sets(usable, f.match_tol);
            inter["roots"] = set.roots;
            inter["residuals"] = set.residuals;
            inter["empty_intersection"] = set.empty_intersection;
        }
        inter["sets_intersected"] = usable.size();
        report.write_json("intersection.json", inter);
        report.summary()["intersection"] = inter["roots"];
    }
    report.finish(started);
    return 0;
}

// ---------------------------------------------------------------- examples

int cmd_examples() {
    json catalog = json::array();
    for (const auto &sys : hyperid::builtin_examples())
        catalog.push_back({{"name", sys.name},
                           {"description", sys.description},
                           {"dims", {{"n", sys.n}, {"s", sys.s}, {"m", sys.m}}}});
    std::cout << json{{"schema_version", hyperid::io::kSchemaVersion}, {"examples", catalog}}.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Quasi-hyperbolic dynamic discrete choice: solve, simulate and audit identification"};
    app.require_subcommand(1);

    SolveFlags solve;
    auto *solve_cmd = app.add_subcommand("solve", "Solve a model; write CCPs and values as CSV");
    solve_cmd->add_option("--config", solve.common.config, "Model config (JSON)");
    solve_cmd->add_flag("--newton", solve.newton, "Use Newton-Kantorovich steps after a burn-in");
    solve_cmd->add_flag("--residuals", solve.residuals, "Also dump G~ at the truth on the generated data");
    add_common(solve_cmd, solve.common);

    SimulateFlags sim;
    auto *sim_cmd = app.add_subcommand("simulate", "Simulate a panel and estimate cell frequencies");
    sim_cmd->add_option("--config", sim.common.config, "Model config (JSON)");
    sim_cmd->add_option("--agents", sim.agents, "Number of agents")->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--periods", sim.periods, "Periods per agent")->check(CLI::NonNegativeNumber);
    sim_cmd->add_flag("--laplace", sim.laplace, "Add-one smoothing of empty cells");
    add_common(sim_cmd, sim.common);

    AuditFlags audit;
    auto *audit_cmd = app.add_subcommand("audit", "Rank audits, solution counts and range probes");
    audit_cmd->add_option("--example", audit.example, "Built-in system: ex1, ex2, logistic, piecewise");
    audit_cmd->add_option("--config", audit.common.config, "Model config; audits G~ on its generated data");
    audit_cmd->add_option("--data", audit.common.data, "Data set (JSON); audits G~ on it");
    audit_cmd->add_flag("--rank", audit.rank, "Regular-value audit at sampled zeros");
    audit_cmd->add_option("--samples", audit.samples, "Rank audit samples");
    audit_cmd->add_flag("--count", audit.count, "Multistart solution count");
    audit_cmd->add_option("--b", audit.b, "Data vector for --count, comma separated");
    audit_cmd->add_option("--starts", audit.starts, "Multistart starts for --count");
    audit_cmd->add_option("--probe", audit.probe, "Number of range-probe data draws");
    audit_cmd->add_option("--probe-starts", audit.probe_starts, "Multistart starts per probe draw");
    audit_cmd->add_flag("--on-range", audit.on_range, "Draw probe data from the model range");
    audit_cmd->add_option("--res-tol", audit.res_tol, "Residual tolerance for a solution");
    audit_cmd->add_option("--cluster-tol", audit.cluster_tol, "Distance below which solutions merge");
    audit_cmd->add_option("--svd-tol", audit.svd_tol, "Relative singular value cutoff");
    add_common(audit_cmd, audit.common);

    IdentifyFlags ident;
    auto *ident_cmd = app.add_subcommand("identify", "Identified sets for delta under exponential discounting");
    ident_cmd->add_option("--config", ident.common.config, "Model config; identifies from its generated data");
    ident_cmd->add_option("--data", ident.common.data, "Data set (JSON)");
    ident_cmd->add_option("--restriction", ident.restrictions, "choice,x_r,x_e,x_e_prime (repeatable)");
    ident_cmd->add_option("--grid", ident.grid, "Delta grid size")->check(CLI::Range(100, 10000000));
    ident_cmd->add_option("--root-tol", ident.root_tol, "Moment tolerance at a root");
    ident_cmd->add_option("--match-tol", ident.match_tol, "Root matching tolerance for intersections");
    ident_cmd->add_flag("--trace", ident.trace, "Write (delta, moment) grid traces");
    add_common(ident_cmd, ident.common);

    app.add_subcommand("examples", "List the built-in systems");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (solve_cmd->parsed()) return cmd_solve(solve);
        if (sim_cmd->parsed()) return cmd_simulate(sim);
        if (audit_cmd->parsed()) return cmd_audit(audit);
        if (ident_cmd->parsed()) return cmd_identify(ident);
        return cmd_examples();
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const hyperid::ConfigError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const hyperid::RowSumError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const hyperid::DimensionError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const hyperid::DomainError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const hyperid::Error &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
