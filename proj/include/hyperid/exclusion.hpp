#pragma once

// Identification of the discount factor from exclusion restrictions under
// exponential discounting (beta = beta~ = 1). For a candidate delta the data
// are inverted into ex-ante values and utilities; every restriction
// u_i(x_r, x_e) = u_i(x_r, x_e') then becomes one scalar equation in delta.

#include "data.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "system.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace hyperid {

struct ExclusionRestriction {
    int choice = 1; // 1..I
    int x_r = 0;
    int x_e = 0;
    int x_e_prime = 1;

    bool operator==(const ExclusionRestriction &) const = default;
};

inline void validate(const ExclusionRestriction &r, const StateSpace &ss, int n_choices) {
    if (r.choice < 1 || r.choice >= n_choices)
        throw DimensionError("restriction choice " + std::to_string(r.choice) + " outside 1.." +
                             std::to_string(n_choices - 1));
    if (r.x_r < 0 || r.x_r >= ss.n_r) throw DimensionError("restriction x_r out of range");
    if (r.x_e < 0 || r.x_e >= ss.n_e || r.x_e_prime < 0 || r.x_e_prime >= ss.n_e)
        throw DimensionError("restriction x_e out of range");
    if (r.x_e == r.x_e_prime) throw DomainError("restriction needs two distinct excluded states");
}

/// The consecutive-pair restrictions (i, x_r, k, k+1), in residual order.
inline std::vector<ExclusionRestriction> consecutive_restrictions(const StateSpace &ss, int n_choices) {
    std::vector<ExclusionRestriction> out;
    for (int i = 1; i < n_choices; ++i)
        for (int xr = 0; xr < ss.n_r; ++xr)
            for (int xe = 0; xe + 1 < ss.n_e; ++xe) out.push_back({i, xr, xe, xe + 1});
    return out;
}

/// V = (Id - delta Pi_0)^{-1} (gamma - ln P_0).
inline Eigen::VectorXd exante_values(const DataSet &data, double delta) {
    if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("delta must lie in [0, 1)");
    const int X = data.n_states();
    Eigen::VectorXd rhs(X);
    for (int x = 0; x < X; ++x) {
        double p0 = data.P(0, x);
        if (!(p0 >= kInteriorMin)) throw LogDomainError("reference choice probability is not interior");
        rhs(x) = kEulerGamma - std::log(p0);
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(X, X) - delta * data.kernel[0];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) throw SingularSystem("Id - delta Pi_0 is singular");
    return lu.solve(rhs);
}

/// u_i(x) = ln P_i(x) - ln P_0(x) - delta ((Pi_i - Pi_0) V(delta))(x).
inline UtilityMatrix recover_utilities(const DataSet &data, double delta) {
    const Eigen::VectorXd V = exante_values(data, delta);
    const Eigen::MatrixXd log_p = log_probabilities(data.P);
    const Eigen::VectorXd base = data.kernel[0] * V;
    UtilityMatrix u(data.n_alternatives(), data.n_states());
    for (int i = 1; i < data.n_choices; ++i) {
        Eigen::VectorXd contrast = data.kernel[i] * V - base;
        u.row(i - 1) = (log_p.row(i) - log_p.row(0) - delta * contrast.transpose());
    }
    return u;
}

inline double moment_condition(const DataSet &data, const ExclusionRestriction &r, double delta) {
    validate(r, data.states, data.n_choices);
    const UtilityMatrix u = recover_utilities(data, delta);
    return u(r.choice - 1, data.states.index(r.x_r, r.x_e)) - u(r.choice - 1, data.states.index(r.x_r, r.x_e_prime));
}

struct IdentifiedSetOptions {
    int grid_size = 1000;
    /// Bound on |m(delta)| at a reported root and the near-zero threshold for plateaus.
    double root_tol = 1e-10;
    double lo = 0.0;
    double hi = kDeltaMax;
    unsigned workers = 1;
    int max_bisections = 200;
};

struct IdentifiedSet {
    ExclusionRestriction restriction;
    std::vector<double> roots;     // strictly increasing
    std::vector<double> residuals; // m(root)
    int grid_size = 0;
    int sign_changes = 0;
    /// Runs of >= 3 consecutive grid points with |m| < root_tol; not rooted.
    std::vector<std::pair<double, double>> plateaus;
    bool degenerate = false;
    /// Set by intersect_sets when no root is shared.
    bool empty_intersection = false;

    bool point_identified() const { return roots.size() == 1; }
};

struct MomentTrace {
    std::vector<double> delta;
    std::vector<double> value;
};

inline MomentTrace moment_trace(const DataSet &data, const ExclusionRestriction &r, const IdentifiedSetOptions &opts) {
    validate(r, data.states, data.n_choices);
    if (opts.grid_size < 2) throw DomainError("grid needs at least two points");
    MomentTrace t;
    t.delta.resize(static_cast<std::size_t>(opts.grid_size));
    t.value.resize(t.delta.size());
    parallel_for(t.delta.size(), opts.workers, [&](std::size_t k) {
        double d = opts.lo + (opts.hi - opts.lo) * static_cast<double>(k) / (opts.grid_size - 1);
        t.delta[k] = d;
        t.value[k] = moment_condition(data, r, d);
    });
    return t;
}

/// Roots of the moment condition on [lo, hi]: sign changes on a uniform grid
/// refined by bisection. Throws DegenerateRestriction when |m| < root_tol on
/// the entire grid.
inline IdentifiedSet identified_set(const DataSet &data, const ExclusionRestriction &r,
                                    const IdentifiedSetOptions &opts = {}) {
    if (opts.grid_size < 100) throw DomainError("grid_size must be at least 100");
    const MomentTrace t = moment_trace(data, r, opts);
    const std::size_t G = t.delta.size();

    IdentifiedSet out;
    out.restriction = r;
    out.grid_size = opts.grid_size;

    std::vector<bool> small(G);
    for (std::size_t k = 0; k < G; ++k) small[k] = std::abs(t.value[k]) < opts.root_tol;
    if (std::all_of(small.begin(), small.end(), [](bool b) { return b; }))
        throw DegenerateRestriction("moment condition vanishes on the whole delta grid");

    std::vector<bool> in_plateau(G, false);
    for (std::size_t k = 0; k < G;) {
        if (!small[k]) {
            ++k;
            continue;
        }
        std::size_t end = k;
        while (end + 1 < G && small[end + 1]) ++end;
        if (end - k + 1 >= 3) {
            out.plateaus.emplace_back(t.delta[k], t.delta[end]);
            for (std::size_t j = k; j <= end; ++j) in_plateau[j] = true;
        }
        k = end + 1;
    }
    out.degenerate = !out.plateaus.empty();

    auto m = [&](double d) { return moment_condition(data, r, d); };
    auto accept = [&](double root, double value) {
        if (std::abs(value) > opts.root_tol) return;
        if (!out.roots.empty() && root <= out.roots.back()) return;
        out.roots.push_back(root);
        out.residuals.push_back(value);
    };

    for (std::size_t k = 0; k < G; ++k) {
        if (in_plateau[k]) continue;
        if (t.value[k] == 0.0) {
            accept(t.delta[k], 0.0);
            continue;
        }
        if (k + 1 >= G || in_plateau[k + 1] || t.value[k + 1] == 0.0) continue;
        if ((t.value[k] < 0.0) == (t.value[k + 1] < 0.0)) continue;

        ++out.sign_changes;
        double a = t.delta[k], b = t.delta[k + 1];
        double fa = t.value[k], fb = t.value[k + 1];
        for (int it = 0; it < opts.max_bisections && b - a > 0.0; ++it) {
            double mid = 0.5 * (a + b);
            if (mid <= a || mid >= b) break;
            double fm = m(mid);
            if (fm == 0.0) {
                a = b = mid;
                fa = fb = 0.0;
                break;
            }
            if ((fm < 0.0) == (fa < 0.0)) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
                fb = fm;
            }
        }
        if (std::abs(fa) <= std::abs(fb))
            accept(a, fa);
        else
            accept(b, fb);
    }
    return out;
}

/// Roots of the first set that appear, within match_tol, in every other set.
inline IdentifiedSet intersect_sets(const std::vector<IdentifiedSet> &sets, double match_tol) {
    if (sets.empty()) throw DomainError("intersection of an empty family of sets");
    IdentifiedSet out;
    out.restriction = sets.front().restriction;
    out.grid_size = sets.front().grid_size;
    out.degenerate = std::all_of(sets.begin(), sets.end(), [](const auto &s) { return s.degenerate; });
    const auto &first = sets.front();
    for (std::size_t k = 0; k < first.roots.size(); ++k) {
        bool everywhere = true;
        for (std::size_t j = 1; j < sets.size() && everywhere; ++j) {
            const auto &rs = sets[j].roots;
            everywhere = std::any_of(rs.begin(), rs.end(),
                                     [&](double r) { return std::abs(r - first.roots[k]) <= match_tol; });
        }
        if (everywhere) {
            out.roots.push_back(first.roots[k]);
            out.residuals.push_back(first.residuals[k]);
        }
    }
    out.empty_intersection = out.roots.empty();
    return out;
}

} // namespace hyperid
