#include <hyperid/fixtures.hpp>
#include <hyperid/panel.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace hyperid;

namespace {

SolvedModel reference_solution() { return solve_fixed_point(fixtures::reference_model()); }

// Two states, three choices. Probabilities are multiples of 1/4 and transition
// entries multiples of 1/5, so a panel with exact cell counts can be built.
struct ExactDesign {
    StateSpace states{1, 2};
    Eigen::MatrixXd P;
    TransitionKernel kernel;

    ExactDesign() {
        P.resize(3, 2);
        P << 0.25, 0.5, //
            0.5, 0.25,  //
            0.25, 0.25;
        Eigen::MatrixXd k0(2, 2), k1(2, 2), k2(2, 2);
        k0 << 0.6, 0.4, 0.2, 0.8;
        k1 << 0.4, 0.6, 1.0, 0.0;
        k2 << 0.2, 0.8, 0.8, 0.2;
        kernel.by_choice = {k0, k1, k2};
    }

    // Two-period agents: 400 start in each state, split by P, then by the kernel;
    // second-period choices are again split by P.
    Panel panel() const {
        Panel out;
        std::int64_t agent = 0;
        std::vector<int> arrivals(2, 0);
        std::vector<std::pair<int, int>> firsts;
        for (int x = 0; x < 2; ++x)
            for (int i = 0; i < 3; ++i)
                for (int y = 0; y < 2; ++y) {
                    int n = static_cast<int>(std::lround(400.0 * P(i, x) * kernel[i](x, y)));
                    for (int c = 0; c < n; ++c) firsts.emplace_back(x * 3 + i, y);
                    arrivals[static_cast<std::size_t>(y)] += n;
                }
        std::vector<std::vector<int>> second_choices(2);
        for (int y = 0; y < 2; ++y)
            for (int j = 0; j < 3; ++j) {
                int n = static_cast<int>(std::lround(arrivals[static_cast<std::size_t>(y)] * P(j, y)));
                second_choices[static_cast<std::size_t>(y)].insert(second_choices[static_cast<std::size_t>(y)].end(), n, j);
            }
        std::vector<std::size_t> used(2, 0);
        for (auto [xi, y] : firsts) {
            out.push_back({agent, 0, xi / 3, xi % 3});
            out.push_back({agent, 1, y, second_choices[static_cast<std::size_t>(y)][used[static_cast<std::size_t>(y)]++]});
            ++agent;
        }
        return out;
    }
};

} // namespace

TEST(SimulatePanel, ZeroAgentsGiveEmptyPanel) {
    auto solved = reference_solution();
    EXPECT_TRUE(simulate_panel(solved, fixtures::reference_kernel(), 0, 10, 1).empty());
    EXPECT_THROW(simulate_panel(solved, fixtures::reference_kernel(), -1, 10, 1), DomainError);
}

TEST(SimulatePanel, RecordsAreOrderedAndInRange) {
    auto solved = reference_solution();
    auto panel = simulate_panel(solved, fixtures::reference_kernel(), 7, 5, 11);
    ASSERT_EQ(panel.size(), 35u);
    for (std::size_t k = 0; k < panel.size(); ++k) {
        EXPECT_EQ(panel[k].agent, static_cast<std::int64_t>(k / 5));
        EXPECT_EQ(panel[k].period, static_cast<int>(k % 5));
        EXPECT_GE(panel[k].state, 0);
        EXPECT_LT(panel[k].state, 4);
        EXPECT_GE(panel[k].choice, 0);
        EXPECT_LT(panel[k].choice, 3);
    }
}

TEST(SimulatePanel, SameSeedSamePanelAcrossWorkerCounts) {
    auto solved = reference_solution();
    auto kernel = fixtures::reference_kernel();
    auto a = simulate_panel(solved, kernel, 500, 20, 42, 1);
    auto b = simulate_panel(solved, kernel, 500, 20, 42, 4);
    auto c = simulate_panel(solved, kernel, 500, 20, 43, 1);
    ASSERT_EQ(a.size(), b.size());
    bool same = true, differs = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        same = same && a[k].state == b[k].state && a[k].choice == b[k].choice;
        differs = differs || a[k].state != c[k].state || a[k].choice != c[k].choice;
    }
    EXPECT_TRUE(same);
    EXPECT_TRUE(differs);
}

TEST(SimulatePanel, ChoiceFrequenciesWithinThreeStandardErrors) {
    auto solved = reference_solution();
    auto panel = simulate_panel(solved, fixtures::reference_kernel(), 20000, 50, 2024);
    ASSERT_EQ(panel.size(), 1000000u);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(3, 4);
    for (const auto &r : panel) counts(r.choice, r.state) += 1.0;
    for (int x = 0; x < 4; ++x) {
        const double visits = counts.col(x).sum();
        for (int i = 0; i < 3; ++i) {
            const double p = solved.P(i, x);
            const double se = std::sqrt(p * (1.0 - p) / visits);
            EXPECT_LT(std::abs(counts(i, x) / visits - p), 3.0 * se) << "choice " << i << " state " << x;
        }
    }
}

TEST(EstimateFrequencies, ExactPanelRecoversExactProbabilities) {
    ExactDesign design;
    auto d = estimate_frequencies(design.panel(), design.states, 3);
    EXPECT_LT((d.P - design.P).lpNorm<Eigen::Infinity>(), 1e-15);
    for (int i = 0; i < 3; ++i) EXPECT_LT((d.kernel[i] - design.kernel[i]).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(EstimateFrequencies, RecordOrderDoesNotMatter) {
    ExactDesign design;
    auto panel = design.panel();
    std::reverse(panel.begin(), panel.end());
    auto d = estimate_frequencies(panel, design.states, 3);
    EXPECT_LT((d.P - design.P).lpNorm<Eigen::Infinity>(), 1e-15);
    EXPECT_LT((d.kernel[2] - design.kernel[2]).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(EstimateFrequencies, EmptyCellIsReported) {
    Panel panel{{0, 0, 0, 0}, {0, 1, 1, 1}, {1, 0, 1, 0}, {1, 1, 0, 1}};
    try {
        estimate_frequencies(panel, StateSpace{1, 2}, 2);
        FAIL() << "expected EmptyCell";
    } catch (const EmptyCell &e) {
        EXPECT_NE(std::string(e.what()).find("transition"), std::string::npos);
    }
    EXPECT_THROW(estimate_frequencies(Panel{}, StateSpace{1, 2}, 2), EmptyCell);
}

TEST(EstimateFrequencies, LaplaceSmoothingFillsEmptyCells) {
    Panel panel{{0, 0, 0, 0}, {0, 1, 1, 1}};
    FrequencyOptions opts;
    opts.laplace = true;
    auto d = estimate_frequencies(panel, StateSpace{1, 2}, 2, opts);
    // State 0: one visit with choice 0, so (1+1, 0+1) / 3.
    EXPECT_NEAR(d.P(0, 0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(d.P(1, 0), 1.0 / 3.0, 1e-15);
    // Transition 0 -> 1 under choice 0: (0+1, 1+1) / 3.
    EXPECT_NEAR(d.kernel[0](0, 1), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(d.kernel[1](1, 0), 0.5, 1e-15);
    EXPECT_NO_THROW(validate(d));
}

TEST(EstimateFrequencies, RejectsRecordsOutsideTheDesign) {
    Panel panel{{0, 0, 5, 0}};
    EXPECT_THROW(estimate_frequencies(panel, StateSpace{1, 2}, 2), DimensionError);
}

TEST(EstimateFrequencies, LargePanelIsAccurate) {
    auto solved = reference_solution();
    auto kernel = fixtures::reference_kernel();
    auto panel = simulate_panel(solved, kernel, 100000, 50, 7);
    auto d = estimate_frequencies(panel, StateSpace{2, 2}, 3);
    EXPECT_LT((d.P - solved.P).lpNorm<Eigen::Infinity>(), 0.01);
    for (int i = 0; i < 3; ++i) EXPECT_LT((d.kernel[i] - kernel[i]).lpNorm<Eigen::Infinity>(), 0.01);
}
