#pragma once

#include "data.hpp"
#include "model.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <tuple>
#include <vector>

namespace hyperid {

struct PanelRecord {
    std::int64_t agent = 0;
    int period = 0;
    int state = 0;
    int choice = 0;

    bool operator==(const PanelRecord &) const = default;
};

using Panel = std::vector<PanelRecord>;

namespace detail {

inline int draw_categorical(Rng &rng, const Eigen::Ref<const Eigen::VectorXd> &probs) {
    double target = uniform01(rng);
    double cum = 0.0;
    const int last = static_cast<int>(probs.size()) - 1;
    for (int k = 0; k < last; ++k) {
        cum += probs(k);
        if (target < cum) return k;
    }
    return last;
}

} // namespace detail

/// Simulates n_agents independent histories of n_periods each. Agent k draws
/// from its own stream seeded by (seed, k), so the panel does not depend on
/// the worker count. Records are ordered by agent, then period.
inline Panel simulate_panel(const SolvedModel &solved, const TransitionKernel &kernel, std::int64_t n_agents,
                            int n_periods, std::uint64_t seed, unsigned workers = 0) {
    if (n_agents < 0 || n_periods < 0) throw DomainError("panel dimensions must be non-negative");
    const int X = static_cast<int>(solved.P.cols());
    if (kernel.n_choices() != solved.P.rows() || kernel.n_states() != X)
        throw DimensionError("kernel does not match the solved model");

    Panel panel(static_cast<std::size_t>(n_agents) * static_cast<std::size_t>(n_periods));
    parallel_for(static_cast<std::size_t>(n_agents), workers, [&](std::size_t agent) {
        Rng rng = task_rng(seed, agent);
        int x = uniform_index(rng, X);
        for (int t = 0; t < n_periods; ++t) {
            int i = detail::draw_categorical(rng, solved.P.col(x));
            panel[agent * static_cast<std::size_t>(n_periods) + static_cast<std::size_t>(t)] =
                PanelRecord{static_cast<std::int64_t>(agent), t, x, i};
            x = detail::draw_categorical(rng, kernel[i].row(x).transpose());
        }
    });
    return panel;
}

struct FrequencyOptions {
    /// Add one to every count before normalizing instead of failing on empty cells.
    bool laplace = false;
};

/// Cell-frequency estimates of the CCPs and the transition kernel. A
/// transition is counted between consecutive periods of the same agent.
inline DataSet estimate_frequencies(const Panel &panel, const StateSpace &states, int n_choices,
                                    const FrequencyOptions &opts = {}) {
    const int X = states.size();
    Eigen::MatrixXd choice_counts = Eigen::MatrixXd::Zero(n_choices, X);
    std::vector<Eigen::MatrixXd> trans_counts(static_cast<std::size_t>(n_choices), Eigen::MatrixXd::Zero(X, X));

    std::vector<std::size_t> order(panel.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(panel[a].agent, panel[a].period) < std::tie(panel[b].agent, panel[b].period);
    });

    const PanelRecord *prev = nullptr;
    for (std::size_t k : order) {
        const auto &r = panel[k];
        if (r.state < 0 || r.state >= X || r.choice < 0 || r.choice >= n_choices)
            throw DimensionError("panel record outside the declared design");
        choice_counts(r.choice, r.state) += 1.0;
        if (prev && prev->agent == r.agent && prev->period + 1 == r.period)
            trans_counts[static_cast<std::size_t>(prev->choice)](prev->state, r.state) += 1.0;
        prev = &r;
    }

    if (opts.laplace) {
        choice_counts.array() += 1.0;
        for (auto &c : trans_counts) c.array() += 1.0;
    } else {
        for (int x = 0; x < X; ++x)
            for (int i = 0; i < n_choices; ++i)
                if (choice_counts(i, x) == 0.0) throw EmptyCell("choice", i, x);
        for (int i = 0; i < n_choices; ++i)
            for (int x = 0; x < X; ++x)
                if (trans_counts[static_cast<std::size_t>(i)].row(x).sum() == 0.0) throw EmptyCell("transition", i, x);
    }

    DataSet d;
    d.states = states;
    d.n_choices = n_choices;
    d.P = choice_counts;
    for (int x = 0; x < X; ++x) d.P.col(x) /= choice_counts.col(x).sum();
    d.kernel.by_choice = std::move(trans_counts);
    for (auto &c : d.kernel.by_choice)
        for (int x = 0; x < X; ++x) c.row(x) /= c.row(x).sum();
    return d;
}

} // namespace hyperid
