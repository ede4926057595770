#pragma once

// Stepwise purchase simulation with unit supply. Consumers arrive one at a
// time; each re-ranks the unsold catalogue by w_ij * rho_ij, takes the top k
// and buys each with probability rho_ij. Bought producers sell out.

#include "fairalloc/core.hpp"
#include "fairalloc/rng.hpp"

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <vector>

namespace fairalloc {

enum class ConsumerOrder { AsGiven, Shuffled };

inline std::string to_string(ConsumerOrder o) { return o == ConsumerOrder::AsGiven ? "as_given" : "shuffled"; }

inline ConsumerOrder consumer_order_from_string(const std::string& s) {
    if (s == "as_given") return ConsumerOrder::AsGiven;
    if (s == "shuffled") return ConsumerOrder::Shuffled;
    throw InputError("unknown consumer order '" + s + "' (expected as_given|shuffled)");
}

struct Purchase {
    std::size_t step = 0;      // position of the consumer in the processing order
    std::size_t consumer = 0;
    std::size_t producer = 0;
};

struct TransactionLog {
    std::vector<Purchase> events;
    std::vector<char> sold;    // per producer
    std::size_t purchases = 0;
    double gmv = 0.0;          // realized GMV when values were supplied, else 0

    void write_csv(std::ostream& os, const ProducerValues* values = nullptr) const {
        os << "step,consumer,producer,value\n";
        char buf[128];
        for (const auto& e : events) {
            if (values)
                std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", e.step, e.consumer, e.producer,
                              (*values)[e.producer]);
            else
                std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,\n", e.step, e.consumer, e.producer);
            os << buf;
        }
    }
};

/// Distinct producers sold over n.
inline double sell_through_rate(const TransactionLog& log, std::size_t n) {
    if (n == 0) return 0.0;
    std::size_t sold = 0;
    for (char s : log.sold) sold += s ? 1 : 0;
    return static_cast<double>(sold) / static_cast<double>(n);
}

/// Sum of v_j over sold producers.
inline double realized_gmv(const TransactionLog& log, const ProducerValues& values) {
    double g = 0.0;
    for (std::size_t j = 0; j < log.sold.size(); ++j)
        if (log.sold[j]) {
            if (j >= values.producers()) throw InputError("realized_gmv: values shorter than the catalogue");
            g += values[j];
        }
    return g;
}

/// Bernoulli draws use the substream (seed, consumer, slot); the shuffled
/// order uses the permutation keyed by (seed, "order").
inline TransactionLog simulate_purchases(const RelevanceMatrix& rho, const Allocation& w, int k,
                                         const ProducerValues* values, std::uint64_t seed,
                                         ConsumerOrder order = ConsumerOrder::AsGiven) {
    check_dims(rho, w);
    if (!w.binary()) throw InputError("simulate_purchases: allocation must be binary");
    const std::size_t m = rho.consumers(), n = rho.producers();
    if (k < 1 || static_cast<std::size_t>(k) > n) throw InputError("simulate_purchases: requires 1 <= k <= n");
    if (values && values->producers() != n) throw InputError("simulate_purchases: values do not match producers");

    std::vector<std::size_t> sequence(m);
    if (order == ConsumerOrder::Shuffled)
        sequence = rng::permutation(m, rng::substream(seed, std::uint64_t{0x6f72646572}));
    else
        for (std::size_t i = 0; i < m; ++i) sequence[i] = i;

    TransactionLog log;
    log.sold.assign(n, 0);
    std::vector<std::size_t> open;
    open.reserve(n);
    for (std::size_t step = 0; step < m; ++step) {
        const std::size_t i = sequence[step];
        open.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (!log.sold[j]) open.push_back(j);
        if (open.empty()) break;
        std::vector<double> s(open.size());
        for (std::size_t q = 0; q < open.size(); ++q) s[q] = w(i, open[q]) * rho(i, open[q]);
        const std::size_t take = std::min(open.size(), static_cast<std::size_t>(k));
        std::vector<std::size_t> chosen;
        for (std::size_t q : top_k_indices(s, take)) chosen.push_back(open[q]);
        for (std::size_t slot = 0; slot < chosen.size(); ++slot) {
            const std::size_t j = chosen[slot];
            rng::Stream slot_stream(rng::substream(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(slot)));
            if (slot_stream.bernoulli(rho(i, j))) {
                log.events.push_back({step, i, j});
                log.sold[j] = 1;
                ++log.purchases;
                if (values) log.gmv += (*values)[j];
            }
        }
    }
    return log;
}

} // namespace fairalloc
