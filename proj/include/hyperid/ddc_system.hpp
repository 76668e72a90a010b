#pragma once

// G~ exposed as a SmoothSystem: a = (u, beta, beta~, delta), b = the flat data vector.

#include "data.hpp"
#include "genericity.hpp"
#include "model.hpp"
#include "system.hpp"

#include <memory>

namespace hyperid {

struct DdcWrapOptions {
    double tol = 1e-12;
    double u_max = 10.0;
    /// Lower end used for the open intervals (0, 1] of the discount parameters.
    double discount_floor = 1e-6;
    /// Memoize perceived value functions across evaluations.
    bool cache = false;
};

namespace detail {

inline Eigen::VectorXd random_simplex(Rng &rng, int k, double lo, double hi) {
    Eigen::VectorXd v(k);
    for (int j = 0; j < k; ++j) v(j) = uniform(rng, lo, hi);
    return v / v.sum();
}

inline TransitionKernel random_kernel(Rng &rng, int n_choices, int n_states, double lo, double hi) {
    TransitionKernel k;
    k.by_choice.assign(static_cast<std::size_t>(n_choices), Eigen::MatrixXd(n_states, n_states));
    for (int i = 0; i < n_choices; ++i)
        for (int x = 0; x < n_states; ++x) k[i].row(x) = random_simplex(rng, n_states, lo, hi).transpose();
    return k;
}

} // namespace detail

/// Random data drawn in the probability box and normalized onto the simplexes.
inline DataSet random_dataset(Rng &rng, const StateSpace &ss, int n_choices, double lo = 1e-6,
                              double hi = 1.0 - 1e-6) {
    DataSet d;
    d.states = ss;
    d.n_choices = n_choices;
    d.P.resize(n_choices, ss.size());
    for (int x = 0; x < ss.size(); ++x) d.P.col(x) = detail::random_simplex(rng, n_choices, lo, hi);
    d.kernel = detail::random_kernel(rng, n_choices, ss.size(), lo, hi);
    return d;
}

/// Random primitives whose utilities satisfy every exclusion restriction.
inline Model random_exclusion_model(Rng &rng, const StateSpace &ss, int n_choices) {
    ModelPrimitives prim;
    prim.states = ss;
    prim.n_choices = n_choices;
    prim.u.resize(n_choices - 1, ss.size());
    for (int i = 0; i + 1 < n_choices; ++i)
        for (int xr = 0; xr < ss.n_r; ++xr) {
            double level = uniform(rng, -2.0, 2.0);
            for (int xe = 0; xe < ss.n_e; ++xe) prim.u(i, ss.index(xr, xe)) = level;
        }
    prim.disc.beta = uniform(rng, 0.3, 1.0);
    prim.disc.beta_tilde = uniform(rng, 0.3, 1.0);
    prim.disc.delta = uniform(rng, 0.3, 0.95);
    return validate(std::move(prim), detail::random_kernel(rng, n_choices, ss.size(), 0.05, 1.0));
}

/// Wraps g_tilde with A = [-u_max, u_max]^{IX} x (0,1]^2 x (0, 1-1e-6] and
/// B = [1e-6, 1-1e-6]^s. Random data are normalized per simplex; the range
/// sampler draws exclusion-respecting primitives and a random kernel and
/// returns the data they generate.
inline SmoothSystem wrap_ddc(const DataSet &data, const SystemDims &dims, const DdcWrapOptions &opts = {}) {
    validate(data);
    if (SystemDims::of(data.states, data.n_choices).n() != dims.n() || dims.s() != data.flat_size())
        throw DimensionError("data do not match the declared design");

    SmoothSystem sys;
    sys.name = "ddc";
    sys.description = "Hotz-Miller and exclusion equations of the partially naive model";
    sys.n = dims.n();
    sys.s = dims.s();
    sys.m = dims.m();

    const StateSpace ss = dims.states();
    const int n_choices = dims.n_alternatives + 1;
    auto cache = opts.cache ? std::make_shared<WarmStartCache>() : nullptr;
    const double tol = opts.tol;

    sys.evaluator = [ss, n_choices, tol, cache](const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
        DataSet d = DataSet::unflatten(b, ss, n_choices);
        ResidualOptions ro;
        ro.tol = tol;
        ro.cache = cache.get();
        return g_tilde(ParamVector{a}, d, ro);
    };

    const int IX = dims.n_hotz_miller();
    sys.a_box.lo = Eigen::VectorXd::Constant(sys.n, -opts.u_max);
    sys.a_box.hi = Eigen::VectorXd::Constant(sys.n, opts.u_max);
    sys.a_box.lo.tail(3).setConstant(opts.discount_floor);
    sys.a_box.hi(IX) = 1.0;
    sys.a_box.hi(IX + 1) = 1.0;
    sys.a_box.hi(IX + 2) = kDeltaMax;
    sys.b_box = Box::cube(sys.s, 1e-6, 1.0 - 1e-6);
    sys.probe_box = sys.b_box;

    sys.sample_data = [ss, n_choices](Rng &rng) { return random_dataset(rng, ss, n_choices).flatten(); };
    sys.sample_range = [ss, n_choices, tol](Rng &rng) {
        Model model = random_exclusion_model(rng, ss, n_choices);
        SolverOptions so;
        so.tol = tol;
        so.method = FixedPointMethod::newton;
        SolvedModel solved = solve_fixed_point(model, so);
        Eigen::VectorXd a = ParamVector::pack(model.primitives.u, model.primitives.disc).values;
        return std::make_pair(a, generated_data(model, solved).flatten());
    };
    return sys;
}

} // namespace hyperid
