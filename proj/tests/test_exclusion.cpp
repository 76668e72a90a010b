#include <hyperid/exclusion.hpp>
#include <hyperid/fixtures.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace hyperid;

namespace {

DataSet data_of(const Model &model) {
    SolverOptions opts;
    opts.method = FixedPointMethod::newton;
    return generated_data(model, solve_fixed_point(model, opts));
}

bool contains(const std::vector<double> &roots, double value, double tol) {
    return std::any_of(roots.begin(), roots.end(), [&](double r) { return std::abs(r - value) <= tol; });
}

} // namespace

TEST(ExanteValues, StaticCase) {
    auto data = data_of(fixtures::exponential_model(0.8));
    auto V = exante_values(data, 0.0);
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(V(x), kEulerGamma - std::log(data.P(0, x)), 1e-14);
}

TEST(ExanteValues, ZeroUtilityClosedForm) {
    auto data = data_of(fixtures::exponential_model(0.8));
    data.P.setConstant(1.0 / 3.0);
    for (double delta : {0.0, 0.3, 0.9}) {
        auto V = exante_values(data, delta);
        for (int x = 0; x < 4; ++x) EXPECT_NEAR(V(x), (kEulerGamma + std::log(3.0)) / (1.0 - delta), 1e-12);
    }
}

TEST(ExanteValues, SolvesTheLinearSystem) {
    auto data = data_of(fixtures::reference_model());
    for (double delta : {0.2, 0.85, 0.99}) {
        auto V = exante_values(data, delta);
        Eigen::VectorXd rhs = (kEulerGamma - data.P.row(0).array().log()).matrix().transpose();
        Eigen::VectorXd residual = V - delta * data.kernel[0] * V - rhs;
        EXPECT_LT(residual.lpNorm<Eigen::Infinity>(), 1e-12);
    }
    EXPECT_THROW(exante_values(data, 1.0), DomainError);
    EXPECT_THROW(exante_values(data, -0.1), DomainError);
}

TEST(RecoverUtilities, RoundTripAtTrueDelta) {
    for (double delta : {0.3, 0.8, 0.95}) {
        auto model = fixtures::exponential_model(delta);
        auto u = recover_utilities(data_of(model), delta);
        EXPECT_LT((u - model.primitives.u).lpNorm<Eigen::Infinity>(), 1e-8) << "delta " << delta;
    }
}

TEST(RecoverUtilities, StaticCaseIsLogOdds) {
    auto data = data_of(fixtures::reference_model());
    auto u = recover_utilities(data, 0.0);
    for (int i = 1; i < 3; ++i)
        for (int x = 0; x < 4; ++x) EXPECT_NEAR(u(i - 1, x), std::log(data.P(i, x) / data.P(0, x)), 1e-14);
}

TEST(RecoverUtilities, ChoiceIndependentTransitionsIgnoreDelta) {
    auto data = data_of(fixtures::choice_independent_model(0.6));
    auto low = recover_utilities(data, 0.1);
    auto high = recover_utilities(data, 0.95);
    EXPECT_LT((low - high).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(RecoverUtilities, SatisfiesHotzMillerAtExponentialParameters) {
    auto data = data_of(fixtures::reference_model());
    for (double delta : {0.1, 0.5, 0.9}) {
        auto a = ParamVector::pack(recover_utilities(data, delta), {1.0, 1.0, delta});
        EXPECT_LE(hotz_miller_residuals(a, data).lpNorm<Eigen::Infinity>(), 1e-8) << "delta " << delta;
    }
}

TEST(Restriction, Validation) {
    const StateSpace ss{2, 2};
    EXPECT_NO_THROW(validate(ExclusionRestriction{1, 0, 0, 1}, ss, 3));
    EXPECT_THROW(validate(ExclusionRestriction{0, 0, 0, 1}, ss, 3), DimensionError);
    EXPECT_THROW(validate(ExclusionRestriction{3, 0, 0, 1}, ss, 3), DimensionError);
    EXPECT_THROW(validate(ExclusionRestriction{1, 2, 0, 1}, ss, 3), DimensionError);
    EXPECT_THROW(validate(ExclusionRestriction{1, 0, 1, 1}, ss, 3), DomainError);
    auto all = consecutive_restrictions(ss, 3);
    ASSERT_EQ(all.size(), 4u);
    EXPECT_EQ(all[2], (ExclusionRestriction{2, 0, 0, 1}));
}

TEST(MomentCondition, VanishesAtTrueDelta) {
    auto model = fixtures::exponential_model(0.8);
    auto data = data_of(model);
    for (const auto &r : consecutive_restrictions(data.states, 3)) {
        EXPECT_LT(std::abs(moment_condition(data, r, 0.8)), 1e-9);
        EXPECT_GT(std::abs(moment_condition(data, r, 0.4)), 1e-6);
    }
}

TEST(MomentCondition, AntisymmetricInTheExcludedPair) {
    auto data = data_of(fixtures::reference_model());
    for (double delta : {0.2, 0.7})
        EXPECT_EQ(moment_condition(data, {1, 1, 0, 1}, delta), -moment_condition(data, {1, 1, 1, 0}, delta));
}

TEST(IdentifiedSet, ContainsTheTrueDelta) {
    for (double delta : {0.3, 0.8, 0.95}) {
        auto data = data_of(fixtures::exponential_model(delta));
        for (const auto &r : consecutive_restrictions(data.states, 3)) {
            auto set = identified_set(data, r);
            EXPECT_TRUE(contains(set.roots, delta, 1e-6)) << "delta " << delta << " choice " << r.choice << " x_r " << r.x_r;
            EXPECT_FALSE(set.degenerate);
            for (double v : set.residuals) EXPECT_LE(std::abs(v), 1e-10);
            EXPECT_TRUE(std::is_sorted(set.roots.begin(), set.roots.end()));
        }
    }
}

TEST(IdentifiedSet, MultipleRoots) {
    auto data = data_of(fixtures::exponential_model(0.8));
    auto set = identified_set(data, {1, 0, 0, 1});
    ASSERT_EQ(set.roots.size(), 2u);
    EXPECT_NEAR(set.roots[0], 0.727252, 1e-6);
    EXPECT_NEAR(set.roots[1], 0.8, 1e-9);
    EXPECT_FALSE(set.point_identified());
    EXPECT_EQ(set.sign_changes, 2);
}

TEST(IdentifiedSet, RenewalDesignIsPointIdentified) {
    auto data = data_of(fixtures::renewal_model(0.8));
    for (const auto &r : consecutive_restrictions(data.states, 3)) {
        auto set = identified_set(data, r);
        ASSERT_TRUE(set.point_identified()) << "choice " << r.choice << " x_r " << r.x_r;
        EXPECT_NEAR(set.roots.front(), 0.8, 1e-8);
    }
}

TEST(IdentifiedSet, ChoiceIndependentTransitionsAreDegenerate) {
    auto data = data_of(fixtures::choice_independent_model(0.8));
    EXPECT_THROW(identified_set(data, {1, 0, 0, 1}), DegenerateRestriction);
}

TEST(IdentifiedSet, RejectsCoarseGrid) {
    auto data = data_of(fixtures::exponential_model(0.8));
    IdentifiedSetOptions opts;
    opts.grid_size = 99;
    EXPECT_THROW(identified_set(data, {1, 0, 0, 1}, opts), DomainError);
}

TEST(IdentifiedSet, WorkerCountDoesNotChangeRoots) {
    auto data = data_of(fixtures::exponential_model(0.95));
    IdentifiedSetOptions serial, threaded;
    threaded.workers = 4;
    auto a = identified_set(data, {1, 0, 0, 1}, serial);
    auto b = identified_set(data, {1, 0, 0, 1}, threaded);
    EXPECT_EQ(a.roots, b.roots);
    EXPECT_EQ(a.residuals, b.residuals);
}

TEST(MomentTrace, GridEndpoints) {
    auto data = data_of(fixtures::exponential_model(0.8));
    IdentifiedSetOptions opts;
    opts.grid_size = 101;
    auto t = moment_trace(data, {2, 1, 0, 1}, opts);
    ASSERT_EQ(t.delta.size(), 101u);
    EXPECT_EQ(t.delta.front(), 0.0);
    EXPECT_EQ(t.delta.back(), kDeltaMax);
    EXPECT_EQ(t.value[50], moment_condition(data, {2, 1, 0, 1}, t.delta[50]));
}

TEST(IntersectSets, SharedRootsSurvive) {
    IdentifiedSet a, b, c;
    a.roots = {0.3, 0.8};
    a.residuals = {1e-12, -1e-12};
    b.roots = {0.8 + 1e-9};
    b.residuals = {0.0};
    c.roots = {0.5};
    c.residuals = {0.0};

    auto ab = intersect_sets({a, b}, 1e-6);
    ASSERT_EQ(ab.roots.size(), 1u);
    EXPECT_EQ(ab.roots[0], 0.8);
    EXPECT_FALSE(ab.empty_intersection);

    auto single = intersect_sets({a}, 1e-6);
    EXPECT_EQ(single.roots, a.roots);

    auto none = intersect_sets({a, b, c}, 1e-6);
    EXPECT_TRUE(none.roots.empty());
    EXPECT_TRUE(none.empty_intersection);

    EXPECT_THROW(intersect_sets({}, 1e-6), DomainError);
}

TEST(IntersectSets, AllRestrictionsAgreeOnTheTruth) {
    auto data = data_of(fixtures::exponential_model(0.8));
    std::vector<IdentifiedSet> sets;
    for (const auto &r : consecutive_restrictions(data.states, 3)) sets.push_back(identified_set(data, r));
    auto joint = intersect_sets(sets, 1e-6);
    ASSERT_EQ(joint.roots.size(), 1u);
    EXPECT_NEAR(joint.roots[0], 0.8, 1e-8);
}
