#include "helpers.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace fairalloc;
using namespace fairalloc::testing;

namespace {

/// Max over all binary allocations with row sums k of the smallest column sum.
long brute_max_min_exposure(int m, int n, int k) {
    const auto subsets = fairalloc::detail::k_subsets(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
    long best = -1;
    std::vector<long> col(static_cast<std::size_t>(n));
    std::function<void(int)> rec = [&](int i) {
        if (i == m) {
            best = std::max(best, *std::min_element(col.begin(), col.end()));
            return;
        }
        for (const auto& s : subsets) {
            for (auto j : s) ++col[j];
            rec(i + 1);
            for (auto j : s) --col[j];
        }
    };
    rec(0);
    return best;
}

} // namespace

TEST(ProducerBaseline, SpecExamples) {
    EXPECT_EQ(producer_fairness_baseline(4, 2, 1), brute_max_min_exposure(4, 2, 1));
    EXPECT_EQ(producer_fairness_baseline(4, 2, 1), 2);
    EXPECT_EQ(producer_fairness_baseline(3, 2, 2), 3);
    EXPECT_EQ(producer_fairness_baseline(5, 3, 2), brute_max_min_exposure(5, 3, 2));
    EXPECT_THROW(producer_fairness_baseline(3, 2, 3), InputError);
}

TEST(ProducerFloor, CeilOfGammaTimesBaseline) {
    FairnessParams p;
    p.k = 2;
    p.gamma = 0.5;
    EXPECT_EQ(producer_floor(p, 10, 4), 3);  // ceil(0.5 * 5)
    p.gamma = 0.0;
    EXPECT_EQ(producer_floor(p, 10, 4), 0);
    p.producer_floor_override = 7;
    EXPECT_EQ(producer_floor(p, 10, 4), 7);
}

TEST(GmvMax, MatchesEnumeration) {
    const ProducerValues v({5, 3, 1});
    EXPECT_DOUBLE_EQ(gmv_max(v, 2, 2), 16.0);
    for (int m = 1; m <= 3; ++m)
        for (int n = 1; n <= 4; ++n)
            for (int k = 1; k <= n; ++k) {
                std::vector<double> vals(static_cast<std::size_t>(n));
                for (int j = 0; j < n; ++j) vals[static_cast<std::size_t>(j)] = 1.0 + ((j * 7) % 5);
                const ProducerValues pv(vals);
                const auto subsets = fairalloc::detail::k_subsets(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
                double best_row = 0.0;
                for (const auto& s : subsets) {
                    double g = 0.0;
                    for (auto j : s) g += vals[j];
                    best_row = std::max(best_row, g);
                }
                // rows are independent without further constraints
                EXPECT_DOUBLE_EQ(gmv_max(pv, static_cast<std::size_t>(m), k), m * best_row);
            }
    EXPECT_DOUBLE_EQ(gmv_max(ProducerValues({2, 9, 4}), 1, 1), 9.0);
    EXPECT_DOUBLE_EQ(gmv_max(ProducerValues(std::vector<double>(5, 1.0)), 4, 3), 12.0);
}

TEST(BruteForce, SingleConsumerArgmax) {
    Instance inst{matrix_of({{0.2, 0.9, 0.5}}), std::nullopt, std::nullopt};
    FairnessParams p;
    const auto r = brute_force_solve(inst, p);
    EXPECT_DOUBLE_EQ(r.best_objective, 1.0);
    EXPECT_EQ(r.best_allocation(0, 1), 1.0);
    EXPECT_EQ(r.enumerated_count, 3u);
}

TEST(BruteForce, TwoByTwoFloorPicksBestMatching) {
    Instance inst{matrix_of({{0.9, 0.1}, {0.8, 0.2}}), std::nullopt, std::nullopt};
    FairnessParams p;
    p.gamma = 1.0;
    const auto r = brute_force_solve(inst, p);
    // only the two matchings meet floor 1
    const double a = (1.0 + 0.2 / 0.8) / 2.0;        // 0->0, 1->1
    const double b = (0.1 / 0.9 + 1.0) / 2.0;        // 0->1, 1->0
    EXPECT_NEAR(r.best_objective, std::max(a, b), 1e-15);
    EXPECT_EQ(r.enumerated_count, 4u);
}

TEST(BruteForce, InfeasibleFloorNamesFamily) {
    Instance inst{matrix_of({{0.2, 0.9, 0.5}}), std::nullopt, std::nullopt};
    FairnessParams p;
    p.producer_floor_override = 1;
    try {
        brute_force_solve(inst, p);
        FAIL() << "expected infeasibility";
    } catch (const InfeasibleError& e) {
        EXPECT_EQ(e.family(), ConstraintFamily::ProducerFloor);
    }
}

TEST(BruteForce, GmvFloorForcesValuableProducer) {
    Instance inst{matrix_of({{0.2, 0.9}}), std::nullopt, ProducerValues({1.0, 0.0})};
    FairnessParams p;
    p.theta = 1.0;
    const auto r = brute_force_solve(inst, p);
    EXPECT_EQ(r.best_allocation(0, 0), 1.0);
}

TEST(BruteForce, GmvInfeasibleNamesFamily) {
    // the floor forces a matching, whose GMV is half of the unconstrained maximum
    Instance inst{matrix_of({{0.5, 0.5}, {0.5, 0.5}}), std::nullopt, ProducerValues({1.0, 0.0})};
    FairnessParams p;
    p.gamma = 1.0;
    p.theta = 0.75;
    try {
        brute_force_solve(inst, p);
        FAIL() << "expected infeasibility";
    } catch (const InfeasibleError& e) {
        EXPECT_EQ(e.family(), ConstraintFamily::Gmv);
    }
}

TEST(BruteForce, GuardRefusesLargeEnumeration) {
    const auto inst = random_instance(1, 8, 10);
    FairnessParams p;
    p.k = 5;
    EXPECT_THROW(brute_force_solve(inst, p), SizeError);
}

TEST(BruteForce, DominatesRandomFeasibleAllocations) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto inst = random_instance(seed, 3, 4, 2);
        for (auto obj : {Objective::Mean, Objective::MaxMin, Objective::CVaR}) {
            FairnessParams p;
            p.k = 2;
            p.objective = obj;
            p.alpha = 0.5;
            const auto best = brute_force_solve(inst, p).best_objective;
            const auto groups = inst.groups_or_single();
            for (std::uint64_t r = 0; r < 100; ++r) {
                const auto w = random_k_allocation(seed * 1000 + r, 3, 4, 2);
                const double v = allocation_objective(inst.rho, w, groups, p);
                if (maximizes(obj)) EXPECT_LE(v, best + 1e-12);
                else EXPECT_GE(v, best - 1e-12);
            }
        }
    }
}
