#include <hyperid/ddc_system.hpp>
#include <hyperid/fixtures.hpp>
#include <hyperid/system.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace hyperid;

namespace {

const SystemDims kReference{2, 2, 2};

DataSet reference_data(DiscountParams disc = {0.7, 0.9, 0.85}) {
    auto model = fixtures::reference_model(disc);
    SolverOptions opts;
    opts.method = FixedPointMethod::newton;
    return generated_data(model, solve_fixed_point(model, opts));
}

ParamVector truth(DiscountParams disc = {0.7, 0.9, 0.85}) {
    return ParamVector::pack(fixtures::reference_utilities(), disc);
}

} // namespace

TEST(SystemDims, ReferenceDesign) {
    EXPECT_EQ(kReference.n(), 11);
    EXPECT_EQ(kReference.m(), 12);
    EXPECT_EQ(kReference.s(), 44);
    EXPECT_EQ(kReference.n_exclusions(), 4);
}

TEST(SystemDims, DimensionLaw) {
    for (int I = 1; I <= 3; ++I)
        for (int nr = 1; nr <= 3; ++nr)
            for (int ne = 1; ne <= 4; ++ne) {
                SystemDims d{I, nr, ne};
                const int X = nr * ne;
                EXPECT_EQ(d.n(), I * X + 3);
                EXPECT_EQ(d.m() - d.n(), I * (ne - 1) * nr - 3);
                EXPECT_EQ(d.s(), I * X + (I + 1) * X * (X - 1));
                EXPECT_EQ(design_check(d), I * (ne - 1) * nr >= 4);
            }
}

TEST(SystemDims, DesignCheck) {
    EXPECT_TRUE(design_check(kReference));
    EXPECT_FALSE(design_check(SystemDims{1, 2, 2}));
    EXPECT_FALSE(design_check(SystemDims{3, 1, 1}));
    EXPECT_TRUE(design_check(SystemDims{1, 2, 3}));
}

TEST(ParamVector, PackAndUnpack) {
    auto a = truth();
    ASSERT_EQ(a.values.size(), 11);
    EXPECT_TRUE(a.utilities(kReference) == fixtures::reference_utilities());
    auto disc = a.discount(kReference);
    EXPECT_EQ(disc.beta, 0.7);
    EXPECT_EQ(disc.beta_tilde, 0.9);
    EXPECT_EQ(disc.delta, 0.85);
    EXPECT_THROW(ParamVector{Eigen::VectorXd::Zero(10)}.utilities(kReference), DimensionError);
}

TEST(HotzMiller, VanishesAtTruth) {
    auto r = hotz_miller_residuals(truth(), reference_data());
    ASSERT_EQ(r.size(), 8);
    EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(HotzMiller, StaticLimit) {
    const DiscountParams disc{0.7, 0.9, 1e-9};
    auto r = hotz_miller_residuals(truth(disc), reference_data(disc));
    EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-8);
    // With delta near zero the residual is the static log-odds contrast.
    auto data = reference_data(disc);
    auto a = truth(disc);
    a.values(0) += 0.25;
    EXPECT_NEAR(hotz_miller_residuals(a, data)(0), -0.25, 1e-8);
}

TEST(HotzMiller, DetectsPresentBias) {
    auto r = hotz_miller_residuals(truth({0.8, 0.9, 0.85}), reference_data());
    EXPECT_GT(r.lpNorm<Eigen::Infinity>(), 1e-4);
}

TEST(Exclusion, ResidualLayout) {
    SystemDims dims{2, 2, 3};
    EXPECT_EQ(dims.n_exclusions(), 8);
    UtilityMatrix u = UtilityMatrix::Zero(2, 6);
    u(0, 0) = 1.0; // (x_r 0, x_e 0)
    u(1, 5) = 2.0; // (x_r 1, x_e 2)
    auto r = exclusion_residuals(ParamVector::pack(u, {1.0, 1.0, 0.5}), dims);
    ASSERT_EQ(r.size(), 8);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(8);
    expected(0) = 1.0;
    expected(7) = -2.0;
    EXPECT_TRUE(r == expected);
}

TEST(GTilde, LengthAndExclusionBlock) {
    auto data = reference_data();
    auto g = g_tilde(truth(), data);
    ASSERT_EQ(g.size(), 12);
    EXPECT_LT(g.lpNorm<Eigen::Infinity>(), 1e-8);

    auto a = truth();
    a.values(0) += 0.5; // u_1 at (x_r 0, x_e 0)
    auto shifted = g_tilde(a, data);
    EXPECT_NEAR(shifted(8), 0.5, 1e-15);
    a.values(1) += 1.0; // u_1 at (x_r 0, x_e 1)
    EXPECT_NEAR(g_tilde(a, data)(8), -0.5, 1e-15);
}

TEST(GTilde, BlocksAreExactlyTheComponentResiduals) {
    auto data = reference_data();
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        ParamVector a{Eigen::VectorXd(11)};
        for (int k = 0; k < 8; ++k) a.values(k) = uniform(rng, -2.0, 2.0);
        for (int k = 8; k < 11; ++k) a.values(k) = uniform(rng, 0.05, 0.95);
        auto g = g_tilde(a, data);
        EXPECT_TRUE(g.head(8) == hotz_miller_residuals(a, data));
        EXPECT_TRUE(g.tail(4) == exclusion_residuals(a, kReference));
    }
}

TEST(GTilde, VanishesAtGeneratingPrimitives) {
    const StateSpace ss{2, 2};
    ResidualOptions opts;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Rng rng = task_rng(99, seed);
        Model model = random_exclusion_model(rng, ss, 3);
        SolverOptions so;
        so.method = FixedPointMethod::newton;
        auto data = generated_data(model, solve_fixed_point(model, so));
        auto a = ParamVector::pack(model.primitives.u, model.primitives.disc);
        EXPECT_LE(g_tilde(a, data, opts).lpNorm<Eigen::Infinity>(), 100 * opts.tol) << "seed " << seed;
    }
}

TEST(DataSet, FlattenRoundTrip) {
    const StateSpace ss{2, 2};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = task_rng(3, seed);
        DataSet d = random_dataset(rng, ss, 3);
        Eigen::VectorXd b = d.flatten();
        ASSERT_EQ(b.size(), 44);
        DataSet back = DataSet::unflatten(b, ss, 3);
        EXPECT_LT((back.P - d.P).lpNorm<Eigen::Infinity>(), 1e-15);
        for (int i = 0; i < 3; ++i) EXPECT_LT((back.kernel[i] - d.kernel[i]).lpNorm<Eigen::Infinity>(), 1e-15);
        EXPECT_TRUE(back.flatten() == b);
    }
    EXPECT_THROW(DataSet::unflatten(Eigen::VectorXd::Zero(43), ss, 3), DimensionError);
}

TEST(WarmStartCache, HitsReturnIdenticalResiduals) {
    auto data = reference_data();
    WarmStartCache cache;
    ResidualOptions cached;
    cached.cache = &cache;
    auto a = truth({0.6, 0.8, 0.7});
    auto plain = g_tilde(a, data);
    auto first = g_tilde(a, data, cached);
    auto second = g_tilde(a, data, cached);
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_TRUE(plain == first);
    EXPECT_TRUE(first == second);
    // beta does not enter the perceived fixed point, so it shares the entry.
    a.values(8) = 0.65;
    g_tilde(a, data, cached);
    EXPECT_EQ(cache.hits(), 2u);
    a.values(10) = 0.71;
    g_tilde(a, data, cached);
    EXPECT_EQ(cache.hits(), 2u);
}

TEST(Residuals, CsvLayout) {
    auto g = g_tilde(truth(), reference_data());
    std::ostringstream out;
    write_residuals_csv(out, g, kReference);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "block,index_i,index_x_or_pair,value");
    int hm = 0, ex = 0;
    while (std::getline(in, line)) {
        if (line.rfind("hotz_miller,", 0) == 0) ++hm;
        if (line.rfind("exclusion,", 0) == 0) ++ex;
    }
    EXPECT_EQ(hm, 8);
    EXPECT_EQ(ex, 4);
    EXPECT_THROW(write_residuals_csv(out, Eigen::VectorXd::Zero(3), kReference), DimensionError);
}

TEST(Residuals, BoundaryProbabilitiesAreRejected) {
    auto data = reference_data();
    data.P(0, 2) += data.P(1, 2);
    data.P(1, 2) = 0.0;
    EXPECT_THROW(hotz_miller_residuals(truth(), data), LogDomainError);
}
