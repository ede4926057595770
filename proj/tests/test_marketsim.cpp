#include "helpers.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace fairalloc;
using namespace fairalloc::testing;

namespace {

RelevanceMatrix constant(std::size_t m, std::size_t n, double v) { return RelevanceMatrix(Matrix(m, n, v)); }

} // namespace

TEST(Simulate, CertainPurchasesSellMinOfDemandAndSupply) {
    for (auto [m, n, k] : {std::tuple{3, 10, 2}, std::tuple{8, 10, 3}, std::tuple{5, 5, 5}}) {
        const auto w = random_k_allocation(1, m, n, k);
        const auto log = simulate_purchases(constant(m, n, 1.0), w, k, nullptr, 7);
        EXPECT_EQ(log.purchases, std::min<std::size_t>(m * k, n));
    }
}

TEST(Simulate, ZeroRelevanceBuysNothing) {
    const auto w = random_k_allocation(1, 6, 6, 2);
    const auto log = simulate_purchases(constant(6, 6, 0.0), w, 2, nullptr, 7);
    EXPECT_TRUE(log.events.empty());
    EXPECT_EQ(sell_through_rate(log, 6), 0.0);
}

TEST(Simulate, DeterministicForFixedSeed) {
    const auto inst = random_instance(3, 40, 25);
    const auto w = random_k_allocation(3, 40, 25, 3);
    for (auto order : {ConsumerOrder::AsGiven, ConsumerOrder::Shuffled}) {
        std::ostringstream a, b;
        simulate_purchases(inst.rho, w, 3, nullptr, 11, order).write_csv(a);
        simulate_purchases(inst.rho, w, 3, nullptr, 11, order).write_csv(b);
        EXPECT_EQ(a.str(), b.str());
    }
}

TEST(Simulate, UnitSupplyAndMonotoneSoldSet) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto inst = random_instance(seed, 30, 12);
        const auto w = random_k_allocation(seed, 30, 12, 4);
        const auto log = simulate_purchases(inst.rho, w, 4, nullptr, seed, ConsumerOrder::Shuffled);
        std::set<std::size_t> seen;
        std::size_t last_step = 0;
        for (const auto& e : log.events) {
            EXPECT_TRUE(seen.insert(e.producer).second);
            EXPECT_GE(e.step, last_step);
            last_step = e.step;
        }
        EXPECT_LE(log.purchases, std::min<std::size_t>(30 * 4, 12));
    }
}

TEST(Simulate, ShuffledOrderVisitsEveryConsumerOnce) {
    const auto w = random_k_allocation(2, 9, 40, 1);
    const auto log = simulate_purchases(constant(9, 40, 1.0), w, 1, nullptr, 5, ConsumerOrder::Shuffled);
    std::set<std::size_t> consumers;
    for (const auto& e : log.events) consumers.insert(e.consumer);
    EXPECT_EQ(consumers.size(), 9u);
    EXPECT_EQ(log.events.size(), 9u);
}

TEST(Simulate, SoldOutItemsAreReplacedByNextBest) {
    // both consumers are shown producer 0 only; the second falls back to its best unsold item
    const auto rho = matrix_of({{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}});
    const auto w = allocation_of({{1, 0, 0}, {1, 0, 0}});
    const auto log = simulate_purchases(rho, w, 1, nullptr, 3);
    ASSERT_EQ(log.events.size(), 2u);
    EXPECT_EQ(log.events[0].producer, 0u);
    EXPECT_EQ(log.events[1].producer, 1u);
}

TEST(Simulate, RejectsFractionalAllocation) {
    const auto w = allocation_of({{0.5, 0.5}});
    EXPECT_THROW(simulate_purchases(constant(1, 2, 1.0), w, 1, nullptr, 1), InputError);
}

TEST(SellThrough, Ratio) {
    TransactionLog log;
    log.sold.assign(10, 0);
    EXPECT_EQ(sell_through_rate(log, 10), 0.0);
    log.sold[1] = log.sold[4] = log.sold[8] = 1;
    EXPECT_DOUBLE_EQ(sell_through_rate(log, 10), 0.3);
    log.sold.assign(10, 1);
    EXPECT_DOUBLE_EQ(sell_through_rate(log, 10), 1.0);
}

TEST(RealizedGmv, SumsSoldValues) {
    TransactionLog log;
    log.sold.assign(3, 0);
    const ProducerValues v({5, 1, 3});
    EXPECT_EQ(realized_gmv(log, v), 0.0);
    log.sold[0] = log.sold[2] = 1;
    EXPECT_DOUBLE_EQ(realized_gmv(log, v), 8.0);
    const auto inst = random_instance(4, 10, 8);
    const auto w = random_k_allocation(4, 10, 8, 2);
    const auto l = simulate_purchases(inst.rho, w, 2, nullptr, 4);
    EXPECT_DOUBLE_EQ(realized_gmv(l, ProducerValues(std::vector<double>(8, 1.0))), static_cast<double>(l.purchases));
}

TEST(TransactionLog, CsvExport) {
    const auto w = allocation_of({{0, 1}});
    const ProducerValues v({2.0, 4.5});
    const auto log = simulate_purchases(constant(1, 2, 1.0), w, 1, &v, 1);
    std::ostringstream os;
    log.write_csv(os, &v);
    EXPECT_EQ(os.str(), "step,consumer,producer,value\n0,0,1,4.5\n");
    EXPECT_DOUBLE_EQ(log.gmv, 4.5);
}

TEST(ConsumerOrder, NamesRoundTrip) {
    EXPECT_EQ(consumer_order_from_string("as_given"), ConsumerOrder::AsGiven);
    EXPECT_EQ(consumer_order_from_string(to_string(ConsumerOrder::Shuffled)), ConsumerOrder::Shuffled);
    EXPECT_THROW(consumer_order_from_string("random"), InputError);
}
