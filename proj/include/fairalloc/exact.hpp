#pragma once

// Depth-first LP-bound branch and bound for the binary allocation programs.

#include "fairalloc/evaluate.hpp"
#include "fairalloc/lp.hpp"
#include "fairalloc/program.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fairalloc {

struct BnBLimits {
    long node_cap = 1'000'000;
    double time_cap_seconds = 300.0;
    double gap_tolerance = 1e-6;
};

struct BnBStats {
    long nodes = 0;
    long lp_solves = 0;
    long simplex_iterations = 0;
    double best_bound = 0.0;
    double incumbent = 0.0;
    double gap = 0.0;
    double wall_seconds = 0.0;
    bool caps_hit = false;
};

struct ExactSolution {
    Allocation allocation;
    double objective = 0.0;  // program sense
    BnBStats stats;
};

namespace detail {

inline constexpr double kIntegralityTol = 1e-6;

/// Objective of the program at a binary allocation, with the auxiliaries (t,
/// tau, slacks) set to their best values. nullopt if an allocation, floor or
/// GMV row is violated.
inline std::optional<double> evaluate_binary(const StandardProgram& p, const std::vector<double>& w) {
    const std::size_t nw = p.layout.allocation_vars();
    std::vector<double> x(p.num_vars, 0.0);
    std::copy(w.begin(), w.end(), x.begin());
    std::vector<double> residual;  // link-row requirement still to be met by auxiliaries
    for (const auto& row : p.rows) {
        double a = 0.0;
        for (std::size_t q = 0; q < row.index.size(); ++q)
            if (row.index[q] < nw) a += row.coef[q] * x[row.index[q]];
        switch (row.family) {
        case ConstraintFamily::Allocation:
            if (std::abs(a - row.rhs) > 1e-9) return std::nullopt;
            break;
        case ConstraintFamily::ProducerFloor:
            if (a < row.rhs - 1e-9) return std::nullopt;
            break;
        case ConstraintFamily::Gmv:
            if (a < row.rhs - 1e-9 * std::max(1.0, std::abs(row.rhs))) return std::nullopt;
            break;
        case ConstraintFamily::CvarLink:
        case ConstraintFamily::MaxMinLink:
            residual.push_back(row.rhs - a);
            break;
        }
    }
    double obj = p.objective_offset;
    for (std::size_t j = 0; j < nw; ++j) obj += p.objective[j] * x[j];
    if (p.layout.t) {
        // t <= utility_i for every link row: t = min_i (a_i), residual = -a_i
        double t = kInf;
        for (double r : residual) t = std::min(t, -r);
        obj += p.objective[*p.layout.t] * t;
    }
    if (p.layout.tau) {
        // s_g >= L_g - tau, L_g = residual_g; minimise over tau at breakpoints
        const double ct = p.objective[*p.layout.tau];
        auto value = [&](double tau) {
            double v = ct * tau;
            for (std::size_t g = 0; g < residual.size(); ++g)
                v += p.objective[p.layout.slack_begin + g] * std::max(residual[g] - tau, 0.0);
            return v;
        };
        double best = value(0.0);
        for (double r : residual)
            if (r >= 0.0) best = std::min(best, value(r));
        obj += best;
    }
    return obj;
}

/// Move exposure from producers above the floor to producers below it, one
/// unit at a time, taking the swap that gives up the least relaxation value.
/// Rows keep k entries. Returns nothing when no swap can fix a deficit.
inline std::optional<std::vector<double>> repair_floor(std::vector<double> w, const std::vector<double>& x,
                                                       std::size_t m, std::size_t n, long floor) {
    std::vector<long> exposure(n, 0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) exposure[j] += w[i * n + j] > 0.5;
    for (std::size_t j = 0; j < n; ++j) {
        while (exposure[j] < floor) {
            double best = kInf;
            std::size_t bi = m, bj = n;
            for (std::size_t i = 0; i < m; ++i) {
                if (w[i * n + j] > 0.5) continue;
                for (std::size_t q = 0; q < n; ++q) {
                    if (w[i * n + q] < 0.5 || exposure[q] <= floor) continue;
                    const double loss = x[i * n + q] - x[i * n + j];
                    if (loss < best) best = loss, bi = i, bj = q;
                }
            }
            if (bi == m) return std::nullopt;
            w[bi * n + bj] = 0.0;
            w[bi * n + j] = 1.0;
            --exposure[bj];
            ++exposure[j];
        }
    }
    return w;
}

} // namespace detail

/// Branch and bound on the binary program. Depth-first; branches on the most
/// fractional allocation variable (lowest index on ties) and explores the
/// up-branch (w = 1) first. The incumbent is seeded from top-k rounding of the
/// root relaxation, repaired towards the producer floor when the rounding
/// misses it.
inline ExactSolution solve_exact(const StandardProgram& program, const BnBLimits& limits = {}) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto& p = program;
    const std::size_t m = p.layout.consumers, n = p.layout.producers, nw = m * n;
    const int k = static_cast<int>(std::llround(p.rows.empty() ? 0.0 : p.rows.front().rhs));
    // search in "larger is better" units
    const double sense = p.sense == Sense::Maximize ? 1.0 : -1.0;

    lp::ProgramModel model(p);
    ExactSolution out;
    BnBStats& st = out.stats;

    const auto root_status = model.solve();
    ++st.lp_solves;
    if (root_status == lp::SimplexStatus::Infeasible) {
        const auto fam = detail::diagnose_infeasibility(p);
        throw InfeasibleError(fam, "no allocation satisfies the " + std::string(to_string(fam)) +
                                       " constraints");
    }
    if (root_status != lp::SimplexStatus::Optimal)
        throw NumericalError("root relaxation did not solve");

    bool have_incumbent = false;
    double incumbent = -kInf;
    std::vector<double> best_w;
    auto offer = [&](const std::vector<double>& w) {
        const auto v = detail::evaluate_binary(p, w);
        if (!v) return;
        const double sv = sense * *v;
        if (!have_incumbent || sv > incumbent) {
            incumbent = sv;
            best_w = w;
            have_incumbent = true;
        }
    };
    auto rounded = [&](const std::vector<double>& x) {
        std::vector<double> w(nw, 0.0);
        if (k < 1 || static_cast<std::size_t>(k) > n) return w;
        for (std::size_t i = 0; i < m; ++i) {
            std::span<const double> row(x.data() + i * n, n);
            for (std::size_t j : top_k_indices(row, static_cast<std::size_t>(k))) w[i * n + j] = 1.0;
        }
        return w;
    };

    struct Node {
        std::vector<std::pair<std::size_t, char>> fixings;
        lp::BoundedSimplex::Basis basis;
        double parent_bound;
    };
    std::vector<Node> stack;
    stack.push_back({{}, model.simplex().basis(), kInf});
    bool root = true;
    double gap_bound = -kInf;  // best bound among nodes closed by the gap tolerance
    auto& sx = model.simplex();

    auto prunable = [&](double v) {
        if (!have_incumbent) return false;
        return v <= incumbent + limits.gap_tolerance * std::max(std::abs(incumbent), 1e-9);
    };

    while (!stack.empty()) {
        const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
        // the root is already solved, so its rounding always gets a chance
        if (!root && (st.nodes >= limits.node_cap || elapsed >= limits.time_cap_seconds)) {
            st.caps_hit = true;
            break;
        }
        Node node = std::move(stack.back());
        stack.pop_back();
        if (prunable(node.parent_bound)) {
            if (node.parent_bound > incumbent) gap_bound = std::max(gap_bound, node.parent_bound);
            continue;
        }
        ++st.nodes;

        lp::SimplexStatus status;
        if (root) {
            status = root_status;
            root = false;
        } else {
            for (std::size_t j = 0; j < nw; ++j) sx.set_bounds(j, 0.0, 1.0);
            for (auto [j, v] : node.fixings) sx.set_bounds(j, v, v);
            sx.set_basis(node.basis);
            status = model.reoptimize();
            ++st.lp_solves;
        }
        if (status == lp::SimplexStatus::Infeasible) continue;
        if (status != lp::SimplexStatus::Optimal) throw NumericalError("node relaxation did not solve");

        const double v = sense * model.objective();
        if (prunable(v)) {
            if (v > incumbent) gap_bound = std::max(gap_bound, v);
            continue;
        }
        const auto x = sx.values();

        std::size_t branch = nw;
        double best_frac = detail::kIntegralityTol;
        for (std::size_t j = 0; j < nw; ++j) {
            const double f = std::min(x[j] - std::floor(x[j]), std::ceil(x[j]) - x[j]);
            if (f > best_frac + 1e-12) {
                best_frac = f;
                branch = j;
            }
        }
        if (branch == nw) {
            std::vector<double> w(nw);
            for (std::size_t j = 0; j < nw; ++j) w[j] = std::round(x[j]);
            offer(w);
            continue;
        }
        if (st.nodes == 1 || st.nodes % 64 == 0) {
            auto w = rounded(x);
            offer(w);
            if (p.producer_floor > 0)
                if (auto fixed = detail::repair_floor(std::move(w), x, m, n, p.producer_floor)) offer(*fixed);
        }
        if (prunable(v)) {
            if (v > incumbent) gap_bound = std::max(gap_bound, v);
            continue;
        }

        auto basis = sx.basis();
        Node down{node.fixings, basis, v};
        down.fixings.emplace_back(branch, 0);
        node.fixings.emplace_back(branch, 1);
        stack.push_back(std::move(down));
        stack.push_back({std::move(node.fixings), std::move(basis), v});
    }

    double bound = have_incumbent ? incumbent : -kInf;
    bound = std::max(bound, gap_bound);
    for (const auto& nd : stack) bound = std::max(bound, nd.parent_bound);
    st.simplex_iterations = sx.iterations();
    st.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();

    if (!have_incumbent) {
        if (st.caps_hit)
            throw NoSolutionError(sense * bound, "search limits reached without a feasible allocation");
        const auto fam = detail::diagnose_infeasibility(p);
        throw InfeasibleError(fam, "no binary allocation satisfies the " +
                                       std::string(to_string(fam)) + " constraints");
    }

    out.allocation = Allocation(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (best_w[i * n + j] > 0.5) out.allocation.set(i, j, 1.0);
    out.objective = sense * incumbent;
    st.incumbent = out.objective;
    st.best_bound = sense * bound;
    st.gap = (bound - incumbent) / std::max(std::abs(incumbent), 1e-9);
    return out;
}

/// Build, solve and report. Objective values are recomputed from the allocation.
inline SolveResult solve_exact(const Instance& inst, const FairnessParams& params,
                               const BnBLimits& limits = {}) {
    const auto program = build_program(inst, params, Integrality::Binary);
    auto sol = solve_exact(program, limits);
    SolverStats stats;
    stats.solver = "exact";
    stats.rounding = "none";
    stats.nodes = sol.stats.nodes;
    stats.lp_solves = sol.stats.lp_solves;
    stats.iterations = sol.stats.simplex_iterations;
    stats.best_bound = sol.stats.best_bound;
    stats.incumbent = sol.stats.incumbent;
    stats.gap = sol.stats.gap;
    stats.caps_hit = sol.stats.caps_hit;
    stats.wall_seconds = sol.stats.wall_seconds;
    return assemble_result(inst, params, std::move(sol.allocation), std::move(stats));
}

} // namespace fairalloc
