#include "helpers.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace fairalloc;
using namespace fairalloc::testing;

namespace {

std::vector<double> pick(std::size_t n, std::initializer_list<std::size_t> idx) {
    std::vector<double> w(n, 0.0);
    for (auto j : idx) w[j] = 1.0;
    return w;
}

} // namespace

TEST(RelevanceMatrix, RejectsOutOfRangeEntries) {
    EXPECT_THROW(matrix_of({{0.5, 1.2}}), InputError);
    EXPECT_THROW(matrix_of({{-0.1}}), InputError);
    EXPECT_THROW(RelevanceMatrix(Matrix(0, 3)), InputError);
    EXPECT_NO_THROW(matrix_of({{0.0, 1.0}}));
}

TEST(Allocation, BinaryFlagTracksEntries) {
    auto a = allocation_of({{1.0, 0.0}, {1e-10, 1.0 - 1e-10}});
    EXPECT_TRUE(a.binary());
    a.set(0, 1, 0.3);
    EXPECT_FALSE(a.binary());
    a.set(0, 1, 0.0);
    EXPECT_TRUE(a.binary());
    EXPECT_THROW(allocation_of({{1.5}}), InputError);
}

TEST(GroupPartition, RejectsEmptyGroupsAndCountsSizes) {
    EXPECT_THROW(GroupPartition({0, 2}), InputError);
    EXPECT_THROW(GroupPartition({-1}), InputError);
    GroupPartition g({1, 0, 1});
    EXPECT_EQ(g.groups(), 2u);
    EXPECT_EQ(g.size(1), 2u);
    EXPECT_EQ(g.sizes()[0] + g.sizes()[1], 3u);
}

TEST(ProducerValues, NeedsOnePositiveEntry) {
    EXPECT_THROW(ProducerValues({0.0, 0.0}), InputError);
    EXPECT_THROW(ProducerValues({1.0, -1.0}), InputError);
    EXPECT_NO_THROW(ProducerValues({0.0, 2.0}));
}

TEST(FairnessParams, ValidatesRanges) {
    FairnessParams p;
    p.k = 4;
    EXPECT_THROW(p.validate(3), InputError);
    p.k = 2;
    p.alpha = 1.0;
    EXPECT_THROW(p.validate(3), InputError);
    p.alpha = 0.5;
    p.gamma = 1.1;
    EXPECT_THROW(p.validate(3), InputError);
    p.gamma = 1.0;
    p.theta = -0.1;
    EXPECT_THROW(p.validate(3), InputError);
    p.theta = 1.0;
    EXPECT_NO_THROW(p.validate(3));
}

TEST(ConsumerUtility, TopKOfFullTopKIsOne) {
    const std::vector<double> rho{0.9, 0.6, 0.3};
    EXPECT_DOUBLE_EQ(consumer_utility(rho, pick(3, {0, 1}), 2, Normalization::TopK), 1.0);
}

TEST(ConsumerUtility, TopKPartialSelection) {
    const std::vector<double> rho{0.9, 0.6, 0.3};
    EXPECT_NEAR(consumer_utility(rho, pick(3, {0, 2}), 2, Normalization::TopK), (0.9 + 0.3) / (0.9 + 0.6), 1e-15);
}

TEST(ConsumerUtility, SingleMaxDenominator) {
    const std::vector<double> rho{0.9, 0.6, 0.3};
    EXPECT_NEAR(consumer_utility(rho, pick(3, {1}), 1, Normalization::SingleMax), 0.6 / 0.9, 1e-15);
}

TEST(ConsumerUtility, ZeroRowIsFullySatisfiedAndMismatchThrows) {
    const std::vector<double> zero{0.0, 0.0};
    EXPECT_DOUBLE_EQ(consumer_utility(zero, pick(2, {0}), 1, Normalization::TopK), 1.0);
    const std::vector<double> rho{0.5, 0.5};
    EXPECT_THROW(consumer_utility(rho, pick(3, {0}), 1, Normalization::TopK), InputError);
}

TEST(ConsumerUtility, LinearInWeights) {
    rng::Stream s(42);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> rho(6), w1(6), w2(6), mix(6);
        for (auto& v : rho) v = s.uniform();
        for (auto& v : w1) v = s.uniform();
        for (auto& v : w2) v = s.uniform();
        const double a = s.uniform();
        for (std::size_t j = 0; j < 6; ++j) mix[j] = a * w1[j] + (1 - a) * w2[j];
        const double lhs = consumer_utility(rho, mix, 3, Normalization::TopK);
        const double rhs = a * consumer_utility(rho, w1, 3, Normalization::TopK) +
                           (1 - a) * consumer_utility(rho, w2, 3, Normalization::TopK);
        EXPECT_NEAR(lhs, rhs, 1e-12);
    }
}

TEST(TopKIndices, TiesGoToLowerIndex) {
    const std::vector<double> row{0.7, 0.7, 0.6};
    EXPECT_EQ(top_k_indices(row, 2), (std::vector<std::size_t>{0, 1}));
    const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
    EXPECT_EQ(top_k_indices(flat, 3), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ProducerExposures, ColumnSums) {
    EXPECT_EQ(producer_exposures(Allocation(2, 3)), (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(producer_exposures(allocation_of({{1, 0, 0}, {1, 0, 0}})), (std::vector<double>{2, 0, 0}));
    EXPECT_DOUBLE_EQ(producer_exposures(allocation_of({{0.5, 0}, {0.5, 0}}))[0], 1.0);
}

TEST(GroupLosses, TopKAllocationHasZeroLoss) {
    const auto inst = random_instance(3, 6, 5, 2);
    Allocation a(6, 5);
    for (std::size_t i = 0; i < 6; ++i)
        for (auto j : top_k_indices(inst.rho.row(i), 2)) a.set(i, j, 1.0);
    for (double l : group_losses(inst.rho, a, *inst.groups, 2)) EXPECT_NEAR(l, 0.0, 1e-15);
}

TEST(GroupLosses, GroupAveragesUtilityShortfall) {
    // consumer 0 takes its best item (utility 1), consumer 1 gets 0.8 of its best
    const auto rho = matrix_of({{1.0, 0.5}, {1.0, 0.8}});
    const auto w = allocation_of({{1, 0}, {0, 1}});
    const auto L = group_losses(rho, w, GroupPartition::single(2), 1);
    ASSERT_EQ(L.size(), 1u);
    EXPECT_NEAR(L[0], ((1.0 - 1.0) + (1.0 - 0.8)) / 2.0, 1e-15);
}

TEST(GroupLosses, IdentityPartitionIsElementwise) {
    const auto inst = random_instance(5, 7, 4);
    const auto w = random_k_allocation(5, 7, 4, 2);
    const auto L = group_losses(inst.rho, w, GroupPartition::identity(7), 2);
    const auto u = consumer_utilities(inst.rho, w, 2, Normalization::TopK);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(L[i], 1.0 - u[i], 1e-15);
}

TEST(CvarValue, AlphaZeroTauZeroIsMean) {
    const std::vector<double> L{0.2, 0.4};
    EXPECT_NEAR(cvar_value(L, 0.0, 0.0), 0.3, 1e-15);
}

TEST(CvarValue, GridMinimumAtHalfIsMaxLoss) {
    const std::vector<double> L{0.2, 0.4};
    double best = 1e9;
    for (int t = 0; t <= 1000; ++t) best = std::min(best, cvar_value(L, t * 1e-3, 0.5));
    EXPECT_NEAR(best, 0.4, 1e-12);
    EXPECT_NEAR(cvar_minimize(L, 0.5).value, best, 1e-12);
}

TEST(CvarValue, ConstantLossesAndBadAlpha) {
    const std::vector<double> L(5, 0.37);
    for (double a : {0.0, 0.3, 0.9}) EXPECT_NEAR(cvar_value(L, 0.37, a), 0.37, 1e-15);
    EXPECT_THROW(cvar_value(L, 0.0, 1.0), InputError);
}

TEST(CvarValue, MinimizerMatchesGridAndIsMonotoneInAlpha) {
    rng::Stream s(11);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> L(5);
        for (auto& l : L) l = s.uniform();
        const double mean = std::accumulate(L.begin(), L.end(), 0.0) / 5.0;
        EXPECT_NEAR(cvar_minimize(L, 0.0).value, mean, 1e-12);
        double prev = -1.0;
        for (double a : {0.0, 0.2, 0.4, 0.6, 0.8, 0.95}) {
            double grid = 1e9;
            for (int t = 0; t <= 2000; ++t) grid = std::min(grid, cvar_value(L, t * 5e-4, a));
            const double exact = cvar_minimize(L, a).value;
            EXPECT_LE(exact, grid + 1e-12);
            EXPECT_GE(exact, prev - 1e-12);
            prev = exact;
        }
    }
}

TEST(Gmv, AllocationWeighted) {
    EXPECT_DOUBLE_EQ(gmv_of_allocation(Allocation(2, 2), ProducerValues({5, 3})), 0.0);
    const auto w = allocation_of({{1, 1}, {1, 0}});  // exposures [2,1]
    EXPECT_DOUBLE_EQ(gmv_of_allocation(w, ProducerValues({5, 3})), 13.0);
    const auto a = random_k_allocation(9, 6, 5, 3);
    EXPECT_DOUBLE_EQ(gmv_of_allocation(a, ProducerValues(std::vector<double>(5, 1.0))), 18.0);
}

TEST(ViolationReport, CleanForFeasibleBinary) {
    FairnessParams p;
    p.k = 2;
    const auto w = random_k_allocation(1, 10, 5, 2);
    EXPECT_TRUE(violation_report(w, p, 0, 0.0, nullptr).clean());
}

TEST(ViolationReport, OneShortRowOfHundred) {
    FairnessParams p;
    p.k = 2;
    auto w = random_k_allocation(2, 100, 5, 2);
    for (std::size_t j = 0; j < 5; ++j)
        if (w(37, j) > 0.5) {
            w.set(37, j, 0.0);
            break;
        }
    const auto r = violation_report(w, p, 0, 0.0, nullptr);
    EXPECT_DOUBLE_EQ(r.under_alloc_pct, 1.0);
    EXPECT_DOUBLE_EQ(r.over_alloc_pct, 0.0);
}

TEST(ViolationReport, OneLowProducerOfFifty) {
    FairnessParams p;
    p.k = 1;
    Allocation w(100, 50);
    // producer 0 gets one consumer, the others two each except producer 49 which gets three
    std::size_t i = 0;
    w.set(i++, 0, 1.0);
    for (std::size_t j = 1; j < 50; ++j)
        for (int c = 0; c < (j == 49 ? 3 : 2); ++c) w.set(i++, j, 1.0);
    ASSERT_EQ(i, 100u);
    const auto r = violation_report(w, p, 2, 0.0, nullptr);
    EXPECT_DOUBLE_EQ(r.producer_violation_pct, 2.0);
    EXPECT_DOUBLE_EQ(r.under_alloc_pct, 0.0);
}

TEST(ViolationReport, FractionalRowsSnapWithinTolerance) {
    FairnessParams p;
    p.k = 1;
    const auto w = allocation_of({{0.5, 0.5 - 1e-8}, {0.7, 0.7}});
    const auto r = violation_report(w, p, 0, 0.0, nullptr);
    EXPECT_DOUBLE_EQ(r.under_alloc_pct, 0.0);
    EXPECT_DOUBLE_EQ(r.over_alloc_pct, 50.0);
}

TEST(ViolationReport, GmvShortfall) {
    FairnessParams p;
    p.k = 1;
    const auto w = allocation_of({{1, 0}});
    const ProducerValues v({1.0, 3.0});
    const auto r = violation_report(w, p, 0, 2.0, &v);
    EXPECT_TRUE(r.gmv_violated);
    EXPECT_DOUBLE_EQ(r.gmv_shortfall, 1.0);
}

TEST(GroupVariance, Population) {
    EXPECT_NEAR(group_utility_variance(std::vector<double>{0.4, 0.4, 0.4}), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(group_utility_variance(std::vector<double>{1.0, 0.0}), 0.25);
    EXPECT_DOUBLE_EQ(group_utility_variance(std::vector<double>{0.7}), 0.0);
    EXPECT_THROW(group_utility_variance(std::vector<double>{}), InputError);
}
