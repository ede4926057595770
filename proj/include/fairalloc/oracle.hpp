#pragma once

// Exhaustive and closed-form references. These are the ground truth the LP,
// branch-and-bound and gradient solvers are checked against, so nothing here
// depends on those solvers.

#include "fairalloc/core.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fairalloc {

/// Maximum achievable minimum producer exposure over allocations with row sums
/// k. Total exposure is exactly m*k and the cyclic assignment
/// {(i*k + t) mod n : t < k} balances columns to within one, so the optimum is
/// floor(m*k/n).
inline long producer_fairness_baseline(long m, long n, long k) {
    if (m < 1 || n < 1) throw InputError("producer_fairness_baseline: m and n must be >= 1");
    if (k < 1 || k > n) throw InputError("producer_fairness_baseline: requires 1 <= k <= n");
    return (m * k) / n;
}

/// Enforced exposure floor: the override if given, else ceil(gamma * U*).
/// Exposures of binary allocations are integers, so the floor is an integer.
inline long producer_floor(const FairnessParams& params, std::size_t m, std::size_t n) {
    if (params.producer_floor_override) return *params.producer_floor_override;
    if (params.gamma <= 0.0) return 0;
    const auto base = producer_fairness_baseline(static_cast<long>(m), static_cast<long>(n),
                                                 params.k);
    return static_cast<long>(std::ceil(params.gamma * static_cast<double>(base) - 1e-9));
}

/// Largest value-weighted exposure reachable with row sums k: every consumer
/// takes the k most valuable producers.
inline double gmv_max(const ProducerValues& values, std::size_t m, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > values.producers())
        throw InputError("gmv_max: requires 1 <= k <= n");
    double top = 0.0;
    for (std::size_t j : top_k_indices(values.values(), static_cast<std::size_t>(k)))
        top += values[j];
    return static_cast<double>(m) * top;
}

/// theta * V_max, or 0 when the GMV row is disabled.
inline double gmv_floor(const FairnessParams& params, const ProducerValues* values, std::size_t m) {
    if (params.theta <= 0.0) return 0.0;
    if (!values) throw InputError("GMV threshold theta > 0 requires producer values");
    return params.theta * gmv_max(*values, m, params.k);
}

struct OracleResult {
    Allocation best_allocation;
    double best_objective = 0.0;
    std::uint64_t enumerated_count = 0;
};

inline constexpr std::uint64_t kOracleGuard = 10'000'000;

namespace detail {

inline std::vector<std::vector<std::size_t>> k_subsets(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur(k);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == k) {
            out.push_back(cur);
            return;
        }
        for (std::size_t j = start; j + (k - depth) <= n; ++j) {
            cur[depth] = j;
            rec(j + 1, depth + 1);
        }
    };
    rec(0, 0);
    return out;
}

} // namespace detail

/// Enumerate every combination of per-consumer k-subsets (lexicographic, first
/// consumer slowest) and keep the best feasible one; ties keep the first.
inline OracleResult brute_force_solve(const Instance& inst, const FairnessParams& params) {
    inst.validate();
    const std::size_t m = inst.consumers(), n = inst.producers();
    params.validate(n);
    if (params.objective == Objective::CVaR && !inst.groups)
        throw InputError("CVaR objective requires a group partition");
    const auto k = static_cast<std::size_t>(params.k);

    const auto subsets = detail::k_subsets(n, k);
    const std::uint64_t per = subsets.size();
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < m; ++i) {
        if (total > kOracleGuard / per)
            throw SizeError("brute force enumeration exceeds " + std::to_string(kOracleGuard) +
                            " combinations");
        total *= per;
    }

    const auto groups = inst.groups_or_single();
    const long floor = producer_floor(params, m, n);
    const ProducerValues* values = inst.values ? &*inst.values : nullptr;
    const double gmv_min = gmv_floor(params, values, m);
    const auto mode = params.utility_normalization();

    // utility of consumer i taking subset s
    std::vector<std::vector<double>> util(m, std::vector<double>(per));
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = inst.rho.row(i);
        const double denom = utility_denominator(row, params.k, mode);
        for (std::size_t s = 0; s < per; ++s) {
            double num = 0.0;
            for (std::size_t j : subsets[s]) num += row[j];
            util[i][s] = denom == 0.0 ? 1.0 : num / denom;
        }
    }

    const bool maximize = maximizes(params.objective);
    const double gmv_slack = 1e-9 * std::max(1.0, gmv_min);
    std::vector<std::size_t> choice(m, 0), best_choice;
    std::vector<double> exposure(n), u(m), loss(m);
    double best = 0.0;
    bool found = false, floor_satisfiable = false;

    for (std::uint64_t count = 0; count < total; ++count) {
        std::fill(exposure.begin(), exposure.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j : subsets[choice[i]]) exposure[j] += 1.0;
        bool ok = true;
        for (double e : exposure)
            if (e < static_cast<double>(floor)) { ok = false; break; }
        if (ok) {
            floor_satisfiable = true;
            if (gmv_min > 0.0) {
                double g = 0.0;
                for (std::size_t j = 0; j < n; ++j) g += (*values)[j] * exposure[j];
                ok = g >= gmv_min - gmv_slack;
            }
        }
        if (ok) {
            for (std::size_t i = 0; i < m; ++i) u[i] = util[i][choice[i]];
            double obj = 0.0;
            switch (params.objective) {
            case Objective::Mean:
                obj = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(m);
                break;
            case Objective::MaxMin:
                obj = *std::min_element(u.begin(), u.end());
                break;
            case Objective::CVaR:
                for (std::size_t i = 0; i < m; ++i) loss[i] = 1.0 - u[i];
                obj = cvar_minimize(group_means(loss, groups), params.alpha).value;
                break;
            }
            if (!found || (maximize ? obj > best : obj < best)) {
                best = obj;
                best_choice = choice;
                found = true;
            }
        }
        // odometer, last consumer fastest
        for (std::size_t i = m; i-- > 0;) {
            if (++choice[i] < per) break;
            choice[i] = 0;
        }
    }

    if (!found) {
        if (!floor_satisfiable)
            throw InfeasibleError(ConstraintFamily::ProducerFloor,
                                  "no allocation meets producer floor " + std::to_string(floor));
        throw InfeasibleError(ConstraintFamily::Gmv,
                              "no allocation meeting the producer floor also meets the GMV floor");
    }

    OracleResult res;
    res.best_allocation = Allocation(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j : subsets[best_choice[i]]) res.best_allocation.set(i, j, 1.0);
    res.best_objective = best;
    res.enumerated_count = total;
    return res;
}

} // namespace fairalloc
