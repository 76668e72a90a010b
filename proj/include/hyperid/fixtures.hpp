#pragma once

// Reference designs used by the test suites and the shipped configs.

#include "model.hpp"

namespace hyperid::fixtures {

/// I = 2, n_r = 2, n_e = 2 (X = 4). The excluded component shifts every
/// transition row but not the utilities.
inline TransitionKernel reference_kernel() {
    TransitionKernel k;
    Eigen::MatrixXd p0(4, 4), p1(4, 4), p2(4, 4);
    p0 << 0.6, 0.2, 0.1, 0.1, //
        0.2, 0.5, 0.2, 0.1,   //
        0.1, 0.2, 0.5, 0.2,   //
        0.1, 0.1, 0.2, 0.6;
    p1 << 0.1, 0.5, 0.3, 0.1, //
        0.3, 0.1, 0.2, 0.4,   //
        0.25, 0.25, 0.25, 0.25, //
        0.4, 0.3, 0.2, 0.1;
    p2 << 0.2, 0.2, 0.5, 0.1, //
        0.1, 0.3, 0.1, 0.5,   //
        0.5, 0.1, 0.3, 0.1,   //
        0.3, 0.4, 0.1, 0.2;
    k.by_choice = {p0, p1, p2};
    return k;
}

/// Exclusion-respecting utilities: u_1 = (0.5, -0.3), u_2 = (-0.2, 0.4) per x_r.
inline UtilityMatrix reference_utilities() {
    UtilityMatrix u(2, 4);
    u << 0.5, 0.5, -0.3, -0.3, //
        -0.2, -0.2, 0.4, 0.4;
    return u;
}

/// beta = 0.7, beta~ = 0.9, delta = 0.85.
inline Model reference_model(DiscountParams disc = {0.7, 0.9, 0.85}) {
    ModelPrimitives prim;
    prim.states = StateSpace{2, 2};
    prim.n_choices = 3;
    prim.u = reference_utilities();
    prim.disc = disc;
    return validate(std::move(prim), reference_kernel());
}

/// Reference design with exponential discounting.
inline Model exponential_model(double delta) { return reference_model(DiscountParams{1.0, 1.0, delta}); }

/// One-period finite dependence: choice 0 renews the state to a fixed
/// distribution q from every state, so the continuation contrast of any
/// choice against choice 0 does not depend on delta.
inline Model renewal_model(double delta) {
    TransitionKernel k = reference_kernel();
    Eigen::RowVectorXd q(4);
    q << 0.4, 0.3, 0.2, 0.1;
    for (int x = 0; x < 4; ++x) k[0].row(x) = q;
    ModelPrimitives prim;
    prim.states = StateSpace{2, 2};
    prim.n_choices = 3;
    prim.u = reference_utilities();
    prim.disc = DiscountParams{1.0, 1.0, delta};
    return validate(std::move(prim), std::move(k));
}

/// Transitions that do not depend on the choice: every restriction's moment
/// condition vanishes identically.
inline Model choice_independent_model(double delta) {
    TransitionKernel k = reference_kernel();
    k[1] = k[0];
    k[2] = k[0];
    ModelPrimitives prim;
    prim.states = StateSpace{2, 2};
    prim.n_choices = 3;
    prim.u = reference_utilities();
    prim.disc = DiscountParams{1.0, 1.0, delta};
    return validate(std::move(prim), std::move(k));
}

} // namespace hyperid::fixtures
