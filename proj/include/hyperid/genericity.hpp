#pragma once

// Numerical analysis of smooth systems F : A x B -> R^m with A in R^n and
// B in R^s: finite-difference Jacobians, numerical rank, regular-value
// audits, multistart solution counts and probes of the model range.

#include "errors.hpp"
#include "parallel.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

namespace hyperid {

/// Axis-aligned box given by coordinate intervals.
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    static Box cube(int dim, double lo, double hi) {
        return Box{Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
    }

    int dim() const { return static_cast<int>(lo.size()); }

    bool contains(const Eigen::VectorXd &z) const {
        return z.size() == lo.size() && (z.array() >= lo.array()).all() && (z.array() <= hi.array()).all();
    }

    Eigen::VectorXd clamp(const Eigen::VectorXd &z) const { return z.cwiseMax(lo).cwiseMin(hi); }

    Eigen::VectorXd sample(Rng &rng) const {
        Eigen::VectorXd z(lo.size());
        for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = uniform(rng, lo(k), hi(k));
        return z;
    }
};

struct SmoothSystem {
    std::string name;
    std::string description;
    int n = 0; // unknowns
    int s = 0; // data coordinates
    int m = 0; // equations

    std::function<Eigen::VectorXd(const Eigen::VectorXd &a, const Eigen::VectorXd &b)> evaluator;

    Box a_box;
    Box b_box;
    /// Box that range probes draw data from.
    Box probe_box;

    /// Optional: draws a data vector for range probes (defaults to uniform over probe_box).
    std::function<Eigen::VectorXd(Rng &)> sample_data;
    /// Optional: draws a point (a, b) with F(a, b) = 0.
    std::function<std::pair<Eigen::VectorXd, Eigen::VectorXd>(Rng &)> sample_range;
    /// Optional: draws a multistart initial point (defaults to uniform over a_box).
    std::function<Eigen::VectorXd(const Eigen::VectorXd &b, Rng &)> sample_start;

    Eigen::VectorXd operator()(const Eigen::VectorXd &a, const Eigen::VectorXd &b) const {
        if (a.size() != n || b.size() != s) throw DimensionError("argument lengths do not match " + name);
        Eigen::VectorXd f = evaluator(a, b);
        if (f.size() != m) throw DimensionError(name + " returned " + std::to_string(f.size()) + " equations");
        return f;
    }

    Eigen::VectorXd draw_data(Rng &rng) const { return sample_data ? sample_data(rng) : probe_box.sample(rng); }

    Eigen::VectorXd draw_start(const Eigen::VectorXd &b, Rng &rng) const {
        return sample_start ? sample_start(b, rng) : a_box.sample(rng);
    }
};

struct Jacobians {
    Eigen::MatrixXd full;  // m x (n + s), with respect to (a, b)
    Eigen::MatrixXd wrt_a; // m x n
};

namespace detail {

inline double fd_step(double step, double z) { return step * std::max(1.0, std::abs(z)); }

} // namespace detail

/// Central differences with per-coordinate step step * max(1, |z_j|).
/// Throws DomainError if a differencing point leaves the domain boxes.
inline Jacobians jacobian(const SmoothSystem &sys, const Eigen::VectorXd &a, const Eigen::VectorXd &b,
                          double step = 1e-6) {
    const int N = sys.n + sys.s;
    Eigen::VectorXd z(N);
    z << a, b;
    Eigen::VectorXd lo(N), hi(N);
    lo << sys.a_box.lo, sys.b_box.lo;
    hi << sys.a_box.hi, sys.b_box.hi;

    Jacobians J;
    J.full.resize(sys.m, N);
    for (int j = 0; j < N; ++j) {
        const double h = detail::fd_step(step, z(j));
        if (z(j) - h < lo(j) || z(j) + h > hi(j))
            throw DomainError("finite difference leaves the domain of " + sys.name + " in coordinate " +
                              std::to_string(j));
        Eigen::VectorXd zp = z, zm = z;
        zp(j) += h;
        zm(j) -= h;
        Eigen::VectorXd fp = sys(zp.head(sys.n), zp.tail(sys.s));
        Eigen::VectorXd fm = sys(zm.head(sys.n), zm.tail(sys.s));
        J.full.col(j) = (fp - fm) / (zp(j) - zm(j));
    }
    J.wrt_a = J.full.leftCols(sys.n);
    return J;
}

namespace detail {

// Jacobian in a only, switching to one-sided differences at the box faces.
inline Eigen::MatrixXd jacobian_a_in_box(const SmoothSystem &sys, const Eigen::VectorXd &a,
                                         const Eigen::VectorXd &b, const Eigen::VectorXd &fa, double step) {
    Eigen::MatrixXd J(sys.m, sys.n);
    for (int j = 0; j < sys.n; ++j) {
        const double h = fd_step(step, a(j));
        Eigen::VectorXd ap = a, am = a;
        bool up = a(j) + h <= sys.a_box.hi(j);
        bool down = a(j) - h >= sys.a_box.lo(j);
        if (up) ap(j) += h;
        if (down) am(j) -= h;
        Eigen::VectorXd fp = up ? sys(ap, b) : fa;
        Eigen::VectorXd fm = down ? sys(am, b) : fa;
        J.col(j) = (fp - fm) / (ap(j) - am(j));
    }
    return J;
}

} // namespace detail

/// Count of singular values above svd_tol * sigma_max.
inline int numerical_rank(const Eigen::VectorXd &singular_values, double svd_tol) {
    if (singular_values.size() == 0) return 0;
    const double top = singular_values.maxCoeff();
    if (!(top > 0.0)) return 0;
    return static_cast<int>((singular_values.array() > svd_tol * top).count());
}

struct RankReport {
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd singular_values_full;
    Eigen::VectorXd singular_values_a;
    int rank_full = 0;
    int rank_a = 0;
    int m = 0;
    int n = 0;
    /// rank dF = m.
    bool regular = false;
    /// rank dF_b = m although m > n; cannot happen for a correct Jacobian.
    bool inconsistent = false;
    double residual = 0.0;
    /// Orthonormal basis (columns) of the numerical null space of dF_b.
    Eigen::MatrixXd null_directions;
};

inline RankReport rank_at(const SmoothSystem &sys, const Eigen::VectorXd &a, const Eigen::VectorXd &b,
                          double svd_tol = 1e-8, double step = 1e-6) {
    const Jacobians J = jacobian(sys, a, b, step);
    RankReport r;
    r.a = a;
    r.b = b;
    r.m = sys.m;
    r.n = sys.n;
    r.residual = sys(a, b).lpNorm<Eigen::Infinity>();
    r.singular_values_full = Eigen::JacobiSVD<Eigen::MatrixXd>(J.full).singularValues();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_a(J.wrt_a, Eigen::ComputeFullV);
    r.singular_values_a = svd_a.singularValues();
    r.rank_full = numerical_rank(r.singular_values_full, svd_tol);
    r.rank_a = numerical_rank(r.singular_values_a, svd_tol);
    r.regular = r.rank_full == sys.m;
    r.inconsistent = sys.m > sys.n && r.rank_a == sys.m;
    const int nullity = sys.n - r.rank_a;
    r.null_directions = svd_a.matrixV().rightCols(nullity);
    return r;
}

struct SolveOptions {
    int max_iter = 200;
    double step = 1e-6;
    /// Local runs stop once |F|_inf falls below this.
    double target = 1e-13;
};

struct LocalSolution {
    Eigen::VectorXd a;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool failed = false;
};

/// Damped Gauss-Newton (Levenberg) descent on |F(., b)|^2 projected onto A.
/// Evaluation failures are treated as rejected steps.
inline LocalSolution local_solve(const SmoothSystem &sys, const Eigen::VectorXd &b, Eigen::VectorXd a0,
                                 const SolveOptions &opts = {}) {
    LocalSolution out;
    Eigen::VectorXd a = sys.a_box.clamp(a0);
    Eigen::VectorXd r;
    try {
        r = sys(a, b);
    } catch (const Error &) {
        out.a = a;
        out.failed = true;
        return out;
    }
    if (!r.allFinite()) {
        out.a = a;
        out.failed = true;
        return out;
    }
    double lambda = 1e-3;
    int it = 0;
    for (; it < opts.max_iter && r.lpNorm<Eigen::Infinity>() > opts.target; ++it) {
        Eigen::MatrixXd J;
        try {
            J = detail::jacobian_a_in_box(sys, a, b, r, opts.step);
        } catch (const Error &) {
            break;
        }
        if (!J.allFinite()) break;
        const Eigen::MatrixXd H = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        const double scale = std::max(1e-12, H.diagonal().maxCoeff());
        bool accepted = false;
        bool stalled = false;
        for (int tries = 0; tries < 12 && !accepted; ++tries) {
            Eigen::MatrixXd damped = H;
            damped.diagonal().array() += lambda * scale;
            Eigen::VectorXd d = damped.ldlt().solve(-g);
            Eigen::VectorXd candidate = sys.a_box.clamp(a + d);
            if ((candidate - a).norm() <= 1e-15 * (1.0 + a.norm())) {
                stalled = true;
                break;
            }
            Eigen::VectorXd rc;
            bool ok = true;
            try {
                rc = sys(candidate, b);
                ok = rc.allFinite();
            } catch (const Error &) {
                ok = false;
            }
            if (ok && rc.squaredNorm() < r.squaredNorm()) {
                a = std::move(candidate);
                r = std::move(rc);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted || stalled) break;
    }
    out.a = a;
    out.residual = r.lpNorm<Eigen::Infinity>();
    out.iterations = it;
    return out;
}

struct CountOptions {
    int n_starts = 200;
    std::uint64_t seed = 0;
    double res_tol = 1e-8;
    double cluster_tol = 1e-4;
    double svd_tol = 1e-8;
    unsigned workers = 1;
    SolveOptions solver;
};

struct SolutionCount {
    std::vector<Eigen::VectorXd> solutions;
    std::vector<double> residuals;
    /// dF_b is rank deficient at some solution: solutions form a continuum.
    bool non_isolated = false;
    /// Null-space basis of dF_b at the first non-isolated solution.
    Eigen::MatrixXd null_directions;
    /// Row-space basis of dF_b there: the combinations of a that the data pin down.
    Eigen::MatrixXd identified_directions;
    int starts = 0;
    int converged = 0;
    int clustered = 0;
    double min_residual = std::numeric_limits<double>::infinity();
};

/// Multistart search for the zeros of F(., b) over A. Heuristic: a zero count
/// means no start converged, not that no solution exists.
inline SolutionCount count_solutions(const SmoothSystem &sys, const Eigen::VectorXd &b, const CountOptions &opts = {}) {
    std::vector<LocalSolution> runs(static_cast<std::size_t>(std::max(0, opts.n_starts)));
    parallel_for(runs.size(), opts.workers, [&](std::size_t k) {
        Rng rng = task_rng(opts.seed, k);
        runs[k] = local_solve(sys, b, sys.draw_start(b, rng), opts.solver);
    });

    SolutionCount out;
    out.starts = opts.n_starts;
    for (const auto &run : runs) {
        out.min_residual = std::min(out.min_residual, run.residual);
        if (run.failed || !(run.residual <= opts.res_tol)) continue;
        ++out.converged;
        bool known = std::any_of(out.solutions.begin(), out.solutions.end(),
                                 [&](const Eigen::VectorXd &s) { return (s - run.a).norm() <= opts.cluster_tol; });
        if (known) continue;
        out.solutions.push_back(run.a);
        out.residuals.push_back(run.residual);
    }
    out.clustered = static_cast<int>(out.solutions.size());

    for (const auto &a : out.solutions) {
        Eigen::VectorXd fa = sys(a, b);
        Eigen::MatrixXd J = detail::jacobian_a_in_box(sys, a, b, fa, opts.solver.step);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
        int rank = numerical_rank(svd.singularValues(), opts.svd_tol);
        if (rank < sys.n) {
            out.non_isolated = true;
            out.null_directions = svd.matrixV().rightCols(sys.n - rank);
            out.identified_directions = svd.matrixV().leftCols(rank);
            break;
        }
    }
    return out;
}

struct AuditOptions {
    int n_samples = 100;
    std::uint64_t seed = 0;
    double svd_tol = 1e-8;
    double step = 1e-6;
    unsigned workers = 1;
    /// Used to find solutions when the system has no range sampler.
    CountOptions count;
};

struct AuditReport {
    int samples = 0;
    int evaluated = 0;
    int no_solution = 0;
    int failures = 0;
    int n_regular = 0;
    int min_rank_full = std::numeric_limits<int>::max();
    int min_rank_a = std::numeric_limits<int>::max();
    int max_rank_a = 0;
    int m = 0;
    int n = 0;
    int inconsistent = 0;
    std::vector<RankReport> non_regular;

    bool all_regular() const { return evaluated > 0 && n_regular == evaluated; }
};

/// Samples zeros (a, b) of F and checks whether dF has full row rank m there.
inline AuditReport regular_value_audit(const SmoothSystem &sys, const AuditOptions &opts = {}) {
    struct Slot {
        std::optional<RankReport> report;
        bool no_solution = false;
        bool failed = false;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(std::max(0, opts.n_samples)));
    parallel_for(slots.size(), opts.workers, [&](std::size_t k) {
        Rng rng = task_rng(opts.seed, k);
        Eigen::VectorXd a, b;
        if (sys.sample_range) {
            std::tie(a, b) = sys.sample_range(rng);
        } else {
            b = sys.draw_data(rng);
            CountOptions co = opts.count;
            co.seed = derive_seed(opts.seed, k + 0x5A5A5A5AULL);
            co.workers = 1;
            auto sc = count_solutions(sys, b, co);
            if (sc.solutions.empty()) {
                slots[k].no_solution = true;
                return;
            }
            a = sc.solutions.front();
        }
        try {
            slots[k].report = rank_at(sys, a, b, opts.svd_tol, opts.step);
        } catch (const Error &) {
            slots[k].failed = true;
        }
    });

    AuditReport out;
    out.samples = opts.n_samples;
    out.m = sys.m;
    out.n = sys.n;
    for (auto &slot : slots) {
        if (slot.no_solution) ++out.no_solution;
        if (slot.failed) ++out.failures;
        if (!slot.report) continue;
        const auto &r = *slot.report;
        ++out.evaluated;
        out.min_rank_full = std::min(out.min_rank_full, r.rank_full);
        out.min_rank_a = std::min(out.min_rank_a, r.rank_a);
        out.max_rank_a = std::max(out.max_rank_a, r.rank_a);
        if (r.inconsistent) ++out.inconsistent;
        if (r.regular)
            ++out.n_regular;
        else
            out.non_regular.push_back(r);
    }
    if (out.evaluated == 0) out.min_rank_full = out.min_rank_a = 0;
    return out;
}

struct ProbeOptions {
    int n_draws = 1000;
    std::uint64_t seed = 0;
    double res_tol = 1e-8;
    /// Multistart budget per data draw.
    int n_starts = 20;
    /// Draw data on the model range instead of uniformly.
    bool on_range = false;
    unsigned workers = 1;
    SolveOptions solver;
};

struct ProbeReport {
    int n_draws = 0;
    int n_solvable = 0;
    double fraction_solvable = 0.0;
    std::vector<Eigen::VectorXd> draws;
    /// Multistart minimum of |F(., b)|_inf per draw; an upper bound on the true minimum.
    std::vector<double> minima;
    std::vector<std::pair<double, double>> quantiles;
    std::string warning;
};

/// Linear-interpolation quantile of a sample.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double w = pos - static_cast<double>(lo);
    return v[lo] + w * (v[hi] - v[lo]);
}

/// Estimates how much of the data space admits a solution: for each draw of b
/// the multistart minimum of |F(., b)|_inf is recorded, and b counts as
/// solvable when it is at most res_tol. Starts within a draw run in order and
/// stop at the first solvable one.
inline ProbeReport range_probe(const SmoothSystem &sys, const ProbeOptions &opts = {}) {
    ProbeReport out;
    out.n_draws = std::max(0, opts.n_draws);
    if (sys.m <= sys.n) out.warning = "m <= n: the range need not be a null set";
    if (opts.on_range && !sys.sample_range) throw DomainError(sys.name + " has no range sampler");
    out.draws.resize(static_cast<std::size_t>(out.n_draws));
    out.minima.resize(out.draws.size());

    parallel_for(out.draws.size(), opts.workers, [&](std::size_t d) {
        Rng rng = task_rng(opts.seed, d);
        Eigen::VectorXd b = opts.on_range ? sys.sample_range(rng).second : sys.draw_data(rng);
        Rng start_rng = task_rng(derive_seed(opts.seed, d), 0xC0FFEEULL);
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < opts.n_starts && !(best <= opts.res_tol); ++k) {
            auto run = local_solve(sys, b, sys.draw_start(b, start_rng), opts.solver);
            if (!run.failed) best = std::min(best, run.residual);
        }
        out.draws[d] = std::move(b);
        out.minima[d] = best;
    });

    for (double v : out.minima)
        if (v <= opts.res_tol) ++out.n_solvable;
    out.fraction_solvable = out.n_draws ? static_cast<double>(out.n_solvable) / out.n_draws : 0.0;
    for (double q : {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0}) out.quantiles.emplace_back(q, quantile(out.minima, q));
    return out;
}

/// Worked examples with exact evaluators: "ex1" (everywhere point identified),
/// "ex2" (nowhere point identified), "logistic" and "piecewise" scalar maps.
inline std::vector<SmoothSystem> builtin_examples() {
    std::vector<SmoothSystem> out;

    SmoothSystem ex1;
    ex1.name = "ex1";
    ex1.description = "F(a; b) = (b1 - a, b2 - a): range is the diagonal, a = b1 = b2 on it";
    ex1.n = 1;
    ex1.s = 2;
    ex1.m = 2;
    ex1.evaluator = [](const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
        return Eigen::VectorXd((b.array() - a(0)).matrix());
    };
    ex1.a_box = Box::cube(1, -5.0, 5.0);
    ex1.b_box = Box::cube(2, -5.0, 5.0);
    ex1.probe_box = Box::cube(2, -1.0, 1.0);
    ex1.sample_range = [](Rng &rng) {
        Eigen::VectorXd a(1);
        a(0) = uniform(rng, -1.0, 1.0);
        return std::make_pair(a, Eigen::VectorXd::Constant(2, a(0)).eval());
    };
    out.push_back(std::move(ex1));

    SmoothSystem ex2;
    ex2.name = "ex2";
    ex2.description = "F(a; b) = b - (a1 + a2) 1: data identify only a1 + a2";
    ex2.n = 2;
    ex2.s = 3;
    ex2.m = 3;
    ex2.evaluator = [](const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
        return Eigen::VectorXd((b.array() - (a(0) + a(1))).matrix());
    };
    ex2.a_box = Box::cube(2, -5.0, 5.0);
    ex2.b_box = Box::cube(3, -5.0, 5.0);
    ex2.probe_box = Box::cube(3, -1.0, 1.0);
    ex2.sample_range = [](Rng &rng) {
        Eigen::VectorXd a(2);
        a(0) = uniform(rng, -1.0, 1.0);
        a(1) = uniform(rng, -1.0, 1.0);
        return std::make_pair(a, Eigen::VectorXd::Constant(3, a(0) + a(1)).eval());
    };
    out.push_back(std::move(ex2));

    SmoothSystem logistic;
    logistic.name = "logistic";
    logistic.description = "F(theta; p) = p - 1 / (1 + exp(theta))";
    logistic.n = logistic.s = logistic.m = 1;
    logistic.evaluator = [](const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
        Eigen::VectorXd f(1);
        f(0) = b(0) - 1.0 / (1.0 + std::exp(a(0)));
        return f;
    };
    logistic.a_box = Box::cube(1, -10.0, 10.0);
    logistic.b_box = Box::cube(1, 0.0, 1.0);
    logistic.probe_box = Box::cube(1, 0.01, 0.99);
    logistic.sample_range = [](Rng &rng) {
        Eigen::VectorXd a(1), b(1);
        a(0) = uniform(rng, -5.0, 5.0);
        b(0) = 1.0 / (1.0 + std::exp(a(0)));
        return std::make_pair(a, b);
    };
    out.push_back(std::move(logistic));

    SmoothSystem piecewise;
    piecewise.name = "piecewise";
    piecewise.description = "F(theta; p) = p - min(max(theta, 0), 1)";
    piecewise.n = piecewise.s = piecewise.m = 1;
    piecewise.evaluator = [](const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
        Eigen::VectorXd f(1);
        f(0) = b(0) - std::clamp(a(0), 0.0, 1.0);
        return f;
    };
    piecewise.a_box = Box::cube(1, -2.0, 2.0);
    piecewise.b_box = Box::cube(1, 0.0, 1.0);
    piecewise.probe_box = Box::cube(1, 0.0, 1.0);
    piecewise.sample_range = [](Rng &rng) {
        Eigen::VectorXd a(1), b(1);
        a(0) = uniform(rng, -2.0, 2.0);
        b(0) = std::clamp(a(0), 0.0, 1.0);
        return std::make_pair(a, b);
    };
    out.push_back(std::move(piecewise));

    return out;
}

inline SmoothSystem builtin_example(const std::string &name) {
    for (auto &sys : builtin_examples())
        if (sys.name == name) return sys;
    throw DomainError("unknown built-in example '" + name + "'");
}

} // namespace hyperid
