#pragma once

// The stacked equation system G~(u, beta, beta~, delta; P, Pi) = 0: one
// Hotz-Miller log-odds equation per (i, x) followed by the exclusion
// restrictions u_i(x_r, x_e) = u_i(x_r, x_e + 1).

#include "data.hpp"
#include "model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace hyperid {

struct SystemDims {
    int n_alternatives = 1; // I
    int n_r = 1;
    int n_e = 2;

    int n_states() const { return n_r * n_e; }
    int n_hotz_miller() const { return n_alternatives * n_states(); }
    int n_exclusions() const { return n_alternatives * (n_e - 1) * n_r; }
    /// Unknowns (u, beta, beta~, delta).
    int n() const { return n_hotz_miller() + 3; }
    /// Equations.
    int m() const { return n_hotz_miller() + n_exclusions(); }
    /// Data coordinates.
    int s() const { return DataSet::flat_size(n_alternatives + 1, n_states()); }

    StateSpace states() const { return StateSpace{n_r, n_e}; }

    static SystemDims of(const StateSpace &ss, int n_choices) { return SystemDims{n_choices - 1, ss.n_r, ss.n_e}; }
};

/// True when the design has at least four exclusion restrictions, i.e. more
/// equations than unknowns.
inline bool design_check(const SystemDims &dims) { return dims.n_exclusions() >= 4; }

/// Flat parameter vector a = (u_1(0..X-1), ..., u_I(0..X-1), beta, beta~, delta).
struct ParamVector {
    Eigen::VectorXd values;

    static ParamVector pack(const UtilityMatrix &u, const DiscountParams &disc) {
        const Eigen::Index IX = u.size();
        ParamVector a;
        a.values.resize(IX + 3);
        for (Eigen::Index i = 0; i < u.rows(); ++i) a.values.segment(i * u.cols(), u.cols()) = u.row(i).transpose();
        a.values(IX) = disc.beta;
        a.values(IX + 1) = disc.beta_tilde;
        a.values(IX + 2) = disc.delta;
        return a;
    }

    UtilityMatrix utilities(const SystemDims &dims) const {
        check(dims);
        const int X = dims.n_states();
        UtilityMatrix u(dims.n_alternatives, X);
        for (int i = 0; i < dims.n_alternatives; ++i) u.row(i) = values.segment(i * X, X).transpose();
        return u;
    }

    DiscountParams discount(const SystemDims &dims) const {
        check(dims);
        const int IX = dims.n_hotz_miller();
        return DiscountParams{values(IX), values(IX + 1), values(IX + 2)};
    }

    void check(const SystemDims &dims) const {
        if (values.size() != dims.n())
            throw DimensionError("parameter vector has length " + std::to_string(values.size()) + ", expected " +
                                 std::to_string(dims.n()));
    }
};

/// Memo of perceived value functions keyed on the exact bits of (u, beta~,
/// delta). Hits return the stored solution unchanged, so results never depend
/// on whether the cache was consulted. Safe for concurrent use.
class WarmStartCache {
  public:
    std::optional<Eigen::VectorXd> find(const Eigen::MatrixXd &u_full, double beta_tilde, double delta) const {
        auto key = make_key(u_full, beta_tilde, delta);
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        ++hits_;
        return it->second;
    }

    void store(const Eigen::MatrixXd &u_full, double beta_tilde, double delta, const Eigen::VectorXd &V) {
        auto key = make_key(u_full, beta_tilde, delta);
        std::lock_guard<std::mutex> lock(mutex_);
        if (entries_.size() >= capacity_) entries_.clear();
        entries_.emplace(std::move(key), V);
    }

    std::size_t hits() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return hits_;
    }

  private:
    using Key = std::vector<std::uint64_t>;

    static Key make_key(const Eigen::MatrixXd &u_full, double beta_tilde, double delta) {
        Key key(static_cast<std::size_t>(u_full.size()) + 2);
        std::memcpy(key.data(), u_full.data(), sizeof(double) * static_cast<std::size_t>(u_full.size()));
        std::memcpy(&key[key.size() - 2], &beta_tilde, sizeof(double));
        std::memcpy(&key[key.size() - 1], &delta, sizeof(double));
        return key;
    }

    mutable std::mutex mutex_;
    std::map<Key, Eigen::VectorXd> entries_;
    std::size_t capacity_ = 4096;
    mutable std::size_t hits_ = 0;
};

struct ResidualOptions {
    double tol = 1e-12;
    int max_iter = 10000;
    WarmStartCache *cache = nullptr;
};

inline constexpr double kLogFloor = 1e-300;
inline constexpr double kInteriorMin = 1e-12;

inline Eigen::MatrixXd log_probabilities(const Eigen::MatrixXd &P) {
    Eigen::MatrixXd out(P.rows(), P.cols());
    for (Eigen::Index x = 0; x < P.cols(); ++x)
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            double p = P(i, x);
            if (!(p >= kInteriorMin))
                throw LogDomainError("choice probability " + std::to_string(p) + " at choice " + std::to_string(i) +
                                     ", state " + std::to_string(x) + " is not interior");
            out(i, x) = std::log(std::max(p, kLogFloor));
        }
    return out;
}

/// Entry (i, x): ln P_i(x) - ln P_0(x) - u_i(x) - beta delta (Z_i(x) - Z_0(x)),
/// with Z from the perceived fixed point at (u, beta~, delta) under the data
/// kernel. Ordered (i, x) row-major.
inline Eigen::VectorXd hotz_miller_residuals(const ParamVector &params, const DataSet &data,
                                             const ResidualOptions &opts = {}) {
    const SystemDims dims = SystemDims::of(data.states, data.n_choices);
    const UtilityMatrix u = params.utilities(dims);
    const DiscountParams disc = params.discount(dims);
    const Eigen::MatrixXd log_p = log_probabilities(data.P);
    const Eigen::MatrixXd u_full = full_utilities(u);

    SolverOptions solver;
    solver.tol = opts.tol;
    solver.max_iter = opts.max_iter;
    solver.method = FixedPointMethod::newton;

    Eigen::VectorXd V;
    if (auto hit = opts.cache ? opts.cache->find(u_full, disc.beta_tilde, disc.delta) : std::nullopt) {
        V = std::move(*hit);
    } else {
        V = solve_perceived_values(u_full, data.kernel, disc.beta_tilde, disc.delta, solver).V;
        if (opts.cache) opts.cache->store(u_full, disc.beta_tilde, disc.delta, V);
    }
    const Eigen::MatrixXd Z = continuation_values(data.kernel, V);

    const int X = dims.n_states();
    Eigen::VectorXd r(dims.n_hotz_miller());
    for (int i = 1; i < data.n_choices; ++i)
        for (int x = 0; x < X; ++x)
            r((i - 1) * X + x) =
                log_p(i, x) - log_p(0, x) - u(i - 1, x) - disc.beta * disc.delta * (Z(i, x) - Z(0, x));
    return r;
}

/// Entry (i, x_r, k) = u_i(x_r, k) - u_i(x_r, k+1) for k = 0..n_e-2.
inline Eigen::VectorXd exclusion_residuals(const ParamVector &params, const SystemDims &dims) {
    const UtilityMatrix u = params.utilities(dims);
    const StateSpace ss = dims.states();
    Eigen::VectorXd r(dims.n_exclusions());
    int k = 0;
    for (int i = 0; i < dims.n_alternatives; ++i)
        for (int xr = 0; xr < dims.n_r; ++xr)
            for (int xe = 0; xe + 1 < dims.n_e; ++xe) r(k++) = u(i, ss.index(xr, xe)) - u(i, ss.index(xr, xe + 1));
    return r;
}

inline Eigen::VectorXd g_tilde(const ParamVector &params, const DataSet &data, const ResidualOptions &opts = {}) {
    const SystemDims dims = SystemDims::of(data.states, data.n_choices);
    Eigen::VectorXd g(dims.m());
    g.head(dims.n_hotz_miller()) = hotz_miller_residuals(params, data, opts);
    g.tail(dims.n_exclusions()) = exclusion_residuals(params, dims);
    return g;
}

/// Writes g as CSV rows block,index_i,index_x_or_pair,value. Hotz-Miller rows
/// carry the state x; exclusion rows carry the pair index x_r*(n_e-1)+k.
inline void write_residuals_csv(std::ostream &out, const Eigen::VectorXd &g, const SystemDims &dims) {
    if (g.size() != dims.m()) throw DimensionError("residual vector length does not match the design");
    out << "block,index_i,index_x_or_pair,value\n";
    out.precision(17);
    const int X = dims.n_states();
    const int pairs = dims.n_r * (dims.n_e - 1);
    for (int k = 0; k < dims.n_hotz_miller(); ++k)
        out << "hotz_miller," << (k / X + 1) << ',' << (k % X) << ',' << g(k) << '\n';
    for (int k = 0; k < dims.n_exclusions(); ++k)
        out << "exclusion," << (k / pairs + 1) << ',' << (k % pairs) << ',' << g(dims.n_hotz_miller() + k) << '\n';
}

} // namespace hyperid
