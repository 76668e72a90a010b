#pragma once

#include "model.hpp"

#include <Eigen/Dense>

#include <string>

namespace hyperid {

/// Observed choice probabilities and transition kernel.
///
/// The flat representation b drops the reference choice probability P_0(x) in
/// every state and the last transition probability pi(X-1 | x, i) in every
/// row, leaving s = I X + (I+1) X (X-1) coordinates. Layout: P_1(0..X-1), ...,
/// P_I(0..X-1), then for every choice i and from-state x the first X-1
/// entries of pi(. | x, i).
struct DataSet {
    StateSpace states;
    int n_choices = 2;
    Eigen::MatrixXd P; // (I+1) x X
    TransitionKernel kernel;

    int n_states() const { return states.size(); }
    int n_alternatives() const { return n_choices - 1; }

    static int flat_size(int n_choices, int n_states) {
        return (n_choices - 1) * n_states + n_choices * n_states * (n_states - 1);
    }
    int flat_size() const { return flat_size(n_choices, n_states()); }

    Eigen::VectorXd flatten() const {
        const int X = n_states();
        Eigen::VectorXd b(flat_size());
        int k = 0;
        for (int i = 1; i < n_choices; ++i)
            for (int x = 0; x < X; ++x) b(k++) = P(i, x);
        for (int i = 0; i < n_choices; ++i)
            for (int x = 0; x < X; ++x)
                for (int y = 0; y + 1 < X; ++y) b(k++) = kernel[i](x, y);
        return b;
    }

    /// Inverse of flatten(); dropped coordinates are one minus the kept ones.
    static DataSet unflatten(const Eigen::VectorXd &b, const StateSpace &states, int n_choices) {
        const int X = states.size();
        if (b.size() != flat_size(n_choices, X))
            throw DimensionError("data vector has length " + std::to_string(b.size()) + ", expected " +
                                 std::to_string(flat_size(n_choices, X)));
        DataSet d;
        d.states = states;
        d.n_choices = n_choices;
        d.P.resize(n_choices, X);
        int k = 0;
        for (int i = 1; i < n_choices; ++i)
            for (int x = 0; x < X; ++x) d.P(i, x) = b(k++);
        for (int x = 0; x < X; ++x) d.P(0, x) = 1.0 - d.P.col(x).tail(n_choices - 1).sum();
        d.kernel.by_choice.assign(static_cast<std::size_t>(n_choices), Eigen::MatrixXd(X, X));
        for (int i = 0; i < n_choices; ++i)
            for (int x = 0; x < X; ++x) {
                double rest = 1.0;
                for (int y = 0; y + 1 < X; ++y) {
                    d.kernel[i](x, y) = b(k++);
                    rest -= d.kernel[i](x, y);
                }
                d.kernel[i](x, X - 1) = rest;
            }
        return d;
    }
};

inline void validate(const DataSet &data) {
    const int X = data.n_states();
    if (data.states.n_e < 2 || data.states.n_r < 1) throw DimensionError("invalid state space");
    if (data.P.rows() != data.n_choices || data.P.cols() != X)
        throw DimensionError("choice probability matrix must be " + std::to_string(data.n_choices) + "x" +
                             std::to_string(X));
    for (int x = 0; x < X; ++x) {
        for (int i = 0; i < data.n_choices; ++i)
            if (!(data.P(i, x) >= 0.0 && data.P(i, x) <= 1.0))
                throw DomainError("choice probability outside [0,1] at choice " + std::to_string(i) + ", state " +
                                  std::to_string(x));
        if (std::abs(data.P.col(x).sum() - 1.0) > kRowSumTolerance)
            throw RowSumError("choice probabilities in state " + std::to_string(x) + " do not sum to one");
    }
    check_kernel(data.kernel, data.n_choices, X);
}

/// Population data implied by a solved model.
inline DataSet generated_data(const Model &model, const SolvedModel &solved) {
    DataSet d;
    d.states = model.primitives.states;
    d.n_choices = model.primitives.n_choices;
    d.P = solved.P;
    d.kernel = model.kernel;
    return d;
}

} // namespace hyperid
