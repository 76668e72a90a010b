#pragma once

// Stationary dynamic discrete choice with partially naive quasi-hyperbolic
// discounting: primitives, validation and the perception-perfect fixed point.

#include "errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace hyperid {

/// Mean of the type-1 extreme value distribution.
inline constexpr double kEulerGamma = 0.5772156649015329;

/// Largest admissible standard discount factor.
inline constexpr double kDeltaMax = 1.0 - 1e-6;

inline constexpr double kRowSumTolerance = 1e-9;

/// Observed states x = (x_r, x_e), flattened as x = x_r * n_e + x_e.
struct StateSpace {
    int n_r = 1;
    int n_e = 2;

    int size() const { return n_r * n_e; }
    int index(int x_r, int x_e) const { return x_r * n_e + x_e; }
    int relevant(int x) const { return x / n_e; }
    int excluded(int x) const { return x % n_e; }

    bool operator==(const StateSpace &) const = default;
};

/// One row-stochastic X x X matrix per choice; row x holds pi(. | x, i).
struct TransitionKernel {
    std::vector<Eigen::MatrixXd> by_choice;

    int n_choices() const { return static_cast<int>(by_choice.size()); }
    int n_states() const { return by_choice.empty() ? 0 : static_cast<int>(by_choice.front().rows()); }
    const Eigen::MatrixXd &operator[](int i) const { return by_choice[static_cast<std::size_t>(i)]; }
    Eigen::MatrixXd &operator[](int i) { return by_choice[static_cast<std::size_t>(i)]; }

    static TransitionKernel uniform(int n_choices, int n_states) {
        TransitionKernel k;
        k.by_choice.assign(static_cast<std::size_t>(n_choices),
                           Eigen::MatrixXd::Constant(n_states, n_states, 1.0 / n_states));
        return k;
    }
};

struct DiscountParams {
    double beta = 1.0;
    double beta_tilde = 1.0;
    double delta = 0.9;
};

/// Utilities of choices 1..I (row i-1 holds u_i(.)); u_0 = 0 is implied.
using UtilityMatrix = Eigen::MatrixXd;

struct ModelPrimitives {
    StateSpace states;
    int n_choices = 2; // I + 1
    UtilityMatrix u;
    DiscountParams disc;

    int n_alternatives() const { return n_choices - 1; }
    int n_free() const { return n_alternatives() * states.size() + 3; }
};

/// Primitives paired with a kernel that passed validate().
struct Model {
    ModelPrimitives primitives;
    TransitionKernel kernel;
};

inline void check_kernel(const TransitionKernel &kernel, int n_choices, int n_states) {
    if (kernel.n_choices() != n_choices)
        throw DimensionError("kernel has " + std::to_string(kernel.n_choices()) + " choices, expected " +
                             std::to_string(n_choices));
    for (int i = 0; i < n_choices; ++i) {
        const auto &pi = kernel[i];
        if (pi.rows() != n_states || pi.cols() != n_states)
            throw DimensionError("kernel block " + std::to_string(i) + " is not " + std::to_string(n_states) +
                                 "x" + std::to_string(n_states));
        for (int x = 0; x < n_states; ++x) {
            for (int y = 0; y < n_states; ++y) {
                if (!(pi(x, y) >= 0.0 && pi(x, y) <= 1.0))
                    throw DomainError("transition probability outside [0,1] at choice " + std::to_string(i) +
                                      ", state " + std::to_string(x));
            }
            double sum = pi.row(x).sum();
            if (std::abs(sum - 1.0) > kRowSumTolerance)
                throw RowSumError("transition row (choice " + std::to_string(i) + ", state " + std::to_string(x) +
                                  ") sums to " + std::to_string(sum));
        }
    }
}

inline void check_discount(const DiscountParams &d) {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(d.beta)) throw DomainError("beta must lie in (0, 1], got " + std::to_string(d.beta));
    if (!in_unit(d.beta_tilde))
        throw DomainError("beta_tilde must lie in (0, 1], got " + std::to_string(d.beta_tilde));
    if (!(d.delta > 0.0 && d.delta <= kDeltaMax))
        throw DomainError("delta must lie in (0, 1 - 1e-6], got " + std::to_string(d.delta));
}

inline Model validate(ModelPrimitives primitives, TransitionKernel kernel) {
    const auto &ss = primitives.states;
    if (ss.n_r < 1) throw DimensionError("n_r must be at least 1");
    if (ss.n_e < 2) throw DimensionError("n_e must be at least 2");
    if (primitives.n_choices < 2) throw DimensionError("need at least two choices");
    const int X = ss.size();
    if (primitives.u.rows() != primitives.n_alternatives() || primitives.u.cols() != X)
        throw DimensionError("utility matrix must be " + std::to_string(primitives.n_alternatives()) + "x" +
                             std::to_string(X));
    if (!primitives.u.allFinite()) throw DomainError("utilities must be finite");
    check_discount(primitives.disc);
    check_kernel(kernel, primitives.n_choices, X);
    return Model{std::move(primitives), std::move(kernel)};
}

/// (I+1) x X utilities with the zero row of the reference choice prepended.
inline Eigen::MatrixXd full_utilities(const UtilityMatrix &u) {
    Eigen::MatrixXd full(u.rows() + 1, u.cols());
    full.row(0).setZero();
    full.bottomRows(u.rows()) = u;
    return full;
}

/// Z_i(x) = sum_x' pi(x'|x,i) V(x'), laid out (I+1) x X.
inline Eigen::MatrixXd continuation_values(const TransitionKernel &kernel, const Eigen::VectorXd &V) {
    Eigen::MatrixXd Z(kernel.n_choices(), V.size());
    for (int i = 0; i < kernel.n_choices(); ++i) Z.row(i) = (kernel[i] * V).transpose();
    return Z;
}

/// Column-wise logit of a (choices x states) index matrix. Returns the
/// probabilities and writes the log-sum-exp of every column to `lse`.
inline Eigen::MatrixXd column_logit(const Eigen::MatrixXd &w, Eigen::VectorXd *lse = nullptr) {
    Eigen::MatrixXd p(w.rows(), w.cols());
    if (lse) lse->resize(w.cols());
    for (Eigen::Index x = 0; x < w.cols(); ++x) {
        double top = w.col(x).maxCoeff();
        Eigen::ArrayXd e = (w.col(x).array() - top).exp();
        double total = e.sum();
        p.col(x) = (e / total).matrix();
        if (lse) (*lse)(x) = top + std::log(total);
    }
    return p;
}

enum class FixedPointMethod {
    successive_approximation,
    /// Successive approximation burn-in followed by Newton-Kantorovich steps.
    newton
};

struct SolverOptions {
    double tol = 1e-12;
    int max_iter = 10000;
    double damping = 1.0;
    FixedPointMethod method = FixedPointMethod::successive_approximation;
    int newton_burn_in = 10;
    bool record_history = false;
};

/// Perceived long-run values together with convergence diagnostics.
struct PerceivedValues {
    Eigen::VectorXd V;
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> history;
};

namespace detail {

struct BellmanEval {
    Eigen::VectorXd TV;
    Eigen::MatrixXd Z;
    Eigen::MatrixXd P_tilde;
};

// T(V)(x) = sum_i P~_i [u_i + gamma - ln P~_i + delta Z_i]
//         = gamma + lse(u + b~ d Z) + (1 - b~) d sum_i P~_i Z_i.
inline BellmanEval bellman(const Eigen::MatrixXd &u_full, const TransitionKernel &kernel, double beta_tilde,
                           double delta, const Eigen::VectorXd &V) {
    BellmanEval out;
    out.Z = continuation_values(kernel, V);
    Eigen::VectorXd lse;
    out.P_tilde = column_logit(u_full + beta_tilde * delta * out.Z, &lse);
    Eigen::VectorXd expected_z = (out.P_tilde.array() * out.Z.array()).colwise().sum().transpose();
    out.TV = (kEulerGamma + lse.array() + (1.0 - beta_tilde) * delta * expected_z.array()).matrix();
    return out;
}

// Derivative of T with respect to V at the point where `eval` was computed.
inline Eigen::MatrixXd bellman_jacobian(const TransitionKernel &kernel, double beta_tilde, double delta,
                                        const BellmanEval &eval) {
    const Eigen::Index X = eval.TV.size();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(X, X);
    for (Eigen::Index x = 0; x < X; ++x) {
        double z_bar = eval.P_tilde.col(x).dot(eval.Z.col(x));
        for (int i = 0; i < kernel.n_choices(); ++i) {
            double p = eval.P_tilde(i, x);
            double weight =
                delta * p + (1.0 - beta_tilde) * beta_tilde * delta * delta * p * (eval.Z(i, x) - z_bar);
            J.row(x) += weight * kernel[i].row(x);
        }
    }
    return J;
}

inline double scaled_residual(const Eigen::VectorXd &TV, const Eigen::VectorXd &V) {
    return (TV - V).lpNorm<Eigen::Infinity>() / std::max(1.0, V.lpNorm<Eigen::Infinity>());
}

} // namespace detail

/// Solves V = T(V) for the perceived value function of future selves with
/// present bias beta_tilde. The stopping rule is on the sup-norm residual
/// scaled by max(1, |V|_inf). Starts from `V0` when given, zero otherwise.
inline PerceivedValues solve_perceived_values(const Eigen::MatrixXd &u_full, const TransitionKernel &kernel,
                                              double beta_tilde, double delta, const SolverOptions &opts,
                                              const Eigen::VectorXd *V0 = nullptr) {
    if (!(opts.tol > 0.0)) throw DomainError("solver tolerance must be positive");
    if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw DomainError("damping must lie in (0, 1]");
    const int X = static_cast<int>(u_full.cols());
    PerceivedValues out;
    out.V = V0 ? *V0 : Eigen::VectorXd::Zero(X);
    double residual = std::numeric_limits<double>::infinity();

    for (int it = 0; it < opts.max_iter; ++it) {
        auto eval = detail::bellman(u_full, kernel, beta_tilde, delta, out.V);
        residual = detail::scaled_residual(eval.TV, out.V);
        if (opts.record_history) out.history.push_back(residual);
        if (!std::isfinite(residual)) break;
        if (residual <= opts.tol) {
            out.residual = residual;
            out.iterations = it;
            return out;
        }
        bool use_newton = opts.method == FixedPointMethod::newton && it >= opts.newton_burn_in;
        if (use_newton) {
            Eigen::MatrixXd J = detail::bellman_jacobian(kernel, beta_tilde, delta, eval);
            Eigen::MatrixXd A = Eigen::MatrixXd::Identity(X, X) - J;
            Eigen::VectorXd step = A.partialPivLu().solve(eval.TV - out.V);
            Eigen::VectorXd candidate = out.V + step;
            auto check = detail::bellman(u_full, kernel, beta_tilde, delta, candidate);
            if (step.allFinite() && detail::scaled_residual(check.TV, candidate) < residual) {
                out.V = std::move(candidate);
                continue;
            }
        }
        out.V = out.V + opts.damping * (eval.TV - out.V);
    }
    throw NoConvergence(residual, opts.max_iter);
}

/// Converged model: perceived values, continuation values and both CCP sets.
struct SolvedModel {
    Eigen::VectorXd V;
    Eigen::MatrixXd Z;       // (I+1) x X
    Eigen::MatrixXd P_tilde; // perceived future-self CCPs, (I+1) x X
    Eigen::MatrixXd P;       // observed CCPs, (I+1) x X
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> history;
};

inline SolvedModel solve_fixed_point(const Model &model, const SolverOptions &opts = {}) {
    const auto &prim = model.primitives;
    const Eigen::MatrixXd u_full = full_utilities(prim.u);
    auto pv = solve_perceived_values(u_full, model.kernel, prim.disc.beta_tilde, prim.disc.delta, opts);

    SolvedModel out;
    out.V = std::move(pv.V);
    out.residual = pv.residual;
    out.iterations = pv.iterations;
    out.history = std::move(pv.history);
    out.Z = continuation_values(model.kernel, out.V);
    const double d = prim.disc.delta;
    out.P_tilde = column_logit(u_full + prim.disc.beta_tilde * d * out.Z);
    out.P = column_logit(u_full + prim.disc.beta * d * out.Z);
    return out;
}

inline SolvedModel solve_fixed_point(const ModelPrimitives &primitives, const TransitionKernel &kernel, double tol,
                                     int max_iter) {
    SolverOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    return solve_fixed_point(validate(primitives, kernel), opts);
}

} // namespace hyperid
