#pragma once

// LP relaxation of a StandardProgram and the three binarisation schemes.

#include "fairalloc/core.hpp"
#include "fairalloc/program.hpp"
#include "fairalloc/rng.hpp"
#include "fairalloc/simplex.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace fairalloc {

struct FractionalSolution {
    Matrix weights;               // m x n
    std::optional<double> t;      // max-min level
    std::optional<double> tau;    // CVaR threshold
    std::vector<double> slacks;   // CVaR per-group excess
    double objective = 0.0;       // in the program's own sense
    bool vertex = false;          // basic solution from the simplex path
    std::vector<double> duals;    // one per program row, d(objective)/d(rhs)
    long iterations = 0;
};

namespace lp {

/// Simplex model of a StandardProgram. Maximisation is handled by negating the
/// costs; bounds of structural variables can be changed between solves.
class ProgramModel {
public:
    explicit ProgramModel(const StandardProgram& p, SimplexOptions opt = {})
        : program_(&p), simplex_(make(p, opt)) {
        if (p.sense == Sense::Maximize)
            sign_ = -1.0;
    }

    const StandardProgram& program() const noexcept { return *program_; }
    BoundedSimplex& simplex() noexcept { return simplex_; }

    /// Cold solve. Starts from a dual feasible basis: in each allocation row
    /// the consumer's k-th most attractive producer is basic, the k-1 better
    /// ones sit at their upper bound and the rest at zero; for max-min, t is
    /// basic in the first link row. The dual simplex then repairs the floor,
    /// GMV and link rows.
    SimplexStatus solve() {
        crash_start();
        return simplex_.reoptimize_perturbed();
    }
    SimplexStatus reoptimize() { return simplex_.reoptimize(); }

    /// Objective in the program's sense, offset included.
    double objective() { return program_->objective_offset + sign_ * simplex_.objective(); }

    FractionalSolution solution() {
        const auto& p = *program_;
        FractionalSolution s;
        const auto x = simplex_.values();
        const std::size_t m = p.layout.consumers, n = p.layout.producers;
        s.weights = Matrix(m, n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                s.weights(i, j) = std::clamp(x[p.layout.w(i, j)], 0.0, 1.0);
        if (p.layout.t) s.t = x[*p.layout.t];
        if (p.layout.tau) s.tau = std::max(0.0, x[*p.layout.tau]);
        for (std::size_t g = 0; g < p.layout.slack_count; ++g)
            s.slacks.push_back(std::max(0.0, x[p.layout.slack_begin + g]));
        s.objective = p.objective_at(x);
        s.vertex = true;
        s.duals = simplex_.duals();
        for (double& y : s.duals) y *= sign_;
        s.iterations = simplex_.iterations();
        return s;
    }

private:
    static BoundedSimplex make(const StandardProgram& p, SimplexOptions opt) {
        SparseColumns a;
        a.rows = p.rows.size();
        std::vector<std::vector<std::pair<std::size_t, double>>> cols(p.num_vars);
        for (std::size_t r = 0; r < p.rows.size(); ++r) {
            const auto& row = p.rows[r];
            for (std::size_t q = 0; q < row.index.size(); ++q)
                if (row.coef[q] != 0.0) cols[row.index[q]].emplace_back(r, row.coef[q]);
        }
        a.start.assign(1, 0);
        for (const auto& c : cols) {
            for (auto [r, v] : c) {
                a.row.push_back(r);
                a.value.push_back(v);
            }
            a.start.push_back(a.row.size());
        }
        const double sign = p.sense == Sense::Maximize ? -1.0 : 1.0;
        std::vector<double> cost(p.num_vars);
        for (std::size_t j = 0; j < p.num_vars; ++j) cost[j] = sign * p.objective[j];
        std::vector<double> lo(p.rows.size()), hi(p.rows.size());
        for (std::size_t r = 0; r < p.rows.size(); ++r) {
            const auto& row = p.rows[r];
            lo[r] = row.sense == RowSense::LessEqual ? -kInf : row.rhs;
            hi[r] = row.sense == RowSense::GreaterEqual ? kInf : row.rhs;
        }
        return BoundedSimplex(std::move(a), std::move(cost), p.lower, p.upper, std::move(lo),
                              std::move(hi), opt);
    }

    void crash_start() {
        const auto& p = *program_;
        const std::size_t m = p.layout.consumers, n = p.layout.producers;
        const std::size_t R = p.rows.size(), N = p.num_vars;
        if (R < m || m == 0) return;
        const auto k = static_cast<std::size_t>(std::llround(p.rows.front().rhs));
        if (k == 0 || k > n) return;
        for (std::size_t i = 0; i < m; ++i)
            if (p.rows[i].family != ConstraintFamily::Allocation) return;

        // attractiveness: objective contribution, else weight in the link rows
        std::vector<double> link(N, 0.0);
        for (const auto& row : p.rows)
            if (row.family == ConstraintFamily::CvarLink || row.family == ConstraintFamily::MaxMinLink)
                for (std::size_t q = 0; q < row.index.size(); ++q) link[row.index[q]] += row.coef[q];
        const double dir = p.sense == Sense::Maximize ? 1.0 : -1.0;

        lp::BoundedSimplex::Basis basis;
        basis.head.resize(R);
        basis.at_upper.assign(N + R, 0);
        for (std::size_t r = 0; r < R; ++r) basis.head[r] = N + r;
        std::vector<double> score(n);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t v = p.layout.w(i, j);
                score[j] = p.objective[v] != 0.0 ? dir * p.objective[v] : link[v];
            }
            const auto top = top_k_indices(score, k);
            for (std::size_t q = 0; q + 1 < k; ++q) basis.at_upper[p.layout.w(i, top[q])] = 1;
            basis.head[i] = p.layout.w(i, top[k - 1]);
        }
        if (p.layout.t) {
            for (std::size_t r = m; r < R; ++r)
                if (p.rows[r].family == ConstraintFamily::MaxMinLink) {
                    basis.head[r] = *p.layout.t;
                    break;
                }
        }
        simplex_.set_basis(basis);
    }

    const StandardProgram* program_;
    BoundedSimplex simplex_;
    double sign_ = 1.0;
};

} // namespace lp

namespace detail {

/// Name the first constraint family whose addition makes the relaxation
/// infeasible. Allocation and floor rows form a transportation system, so if
/// their relaxation is feasible so is the binary problem and the GMV row is
/// to blame.
inline ConstraintFamily diagnose_infeasibility(const StandardProgram& p) {
    const ConstraintFamily order[] = {ConstraintFamily::Allocation, ConstraintFamily::ProducerFloor,
                                      ConstraintFamily::Gmv};
    StandardProgram q = p;
    q.rows.clear();
    q.integrality = Integrality::Relaxed;
    std::fill(q.objective.begin(), q.objective.end(), 0.0);
    ConstraintFamily last = ConstraintFamily::Allocation;
    for (auto fam : order) {
        bool added = false;
        for (const auto& row : p.rows)
            if (row.family == fam) {
                q.rows.push_back(row);
                added = true;
            }
        if (!added) continue;
        last = fam;
        lp::ProgramModel model(q);
        if (model.solve() == lp::SimplexStatus::Infeasible) return fam;
    }
    return last;
}

} // namespace detail

/// Optimal basic solution of the relaxed program.
inline FractionalSolution solve_lp(const StandardProgram& program) {
    lp::ProgramModel model(program);
    switch (model.solve()) {
    case lp::SimplexStatus::Optimal: break;
    case lp::SimplexStatus::Infeasible: {
        const auto fam = detail::diagnose_infeasibility(program);
        throw InfeasibleError(fam, "relaxed program violates the " + std::string(to_string(fam)) +
                                       " constraints");
    }
    case lp::SimplexStatus::Unbounded: throw NumericalError("relaxed program is unbounded");
    case lp::SimplexStatus::IterationLimit: throw NumericalError("simplex iteration limit reached");
    }
    return model.solution();
}

/// Threshold at 0.5, no repair.
inline Allocation round_hard(const Matrix& weights) {
    Allocation a(weights.rows(), weights.cols());
    for (std::size_t i = 0; i < weights.rows(); ++i)
        for (std::size_t j = 0; j < weights.cols(); ++j)
            if (weights(i, j) >= 0.5) a.set(i, j, 1.0);
    return a;
}
inline Allocation round_hard(const FractionalSolution& f) { return round_hard(f.weights); }

inline constexpr int kDefaultRoundingSamples = 32;

/// Independent Bernoulli(w_ij) draws; sample s uses the substream (seed, s).
inline std::vector<Allocation> round_prob(const Matrix& weights, std::uint64_t seed,
                                          int samples = kDefaultRoundingSamples) {
    if (samples < 1) throw InputError("round_prob: samples must be >= 1");
    std::vector<Allocation> out;
    out.reserve(static_cast<std::size_t>(samples));
    for (int s = 0; s < samples; ++s) {
        rng::Stream stream(rng::substream(seed, static_cast<std::uint64_t>(s)));
        Allocation a(weights.rows(), weights.cols());
        for (std::size_t i = 0; i < weights.rows(); ++i)
            for (std::size_t j = 0; j < weights.cols(); ++j)
                if (stream.uniform() < weights(i, j)) a.set(i, j, 1.0);
        out.push_back(std::move(a));
    }
    return out;
}
inline std::vector<Allocation> round_prob(const FractionalSolution& f, std::uint64_t seed,
                                          int samples = kDefaultRoundingSamples) {
    return round_prob(f.weights, seed, samples);
}

/// The k largest weights of every row, ties to the lower producer index.
inline Allocation round_topk(const Matrix& weights, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > weights.cols())
        throw InputError("round_topk: requires 1 <= k <= n");
    Allocation a(weights.rows(), weights.cols());
    for (std::size_t i = 0; i < weights.rows(); ++i)
        for (std::size_t j : top_k_indices(weights.row(i), static_cast<std::size_t>(k))) a.set(i, j, 1.0);
    return a;
}
inline Allocation round_topk(const FractionalSolution& f, int k) { return round_topk(f.weights, k); }

enum class Rounding { None, Hard, Prob, TopK };

inline std::string to_string(Rounding r) {
    switch (r) {
    case Rounding::None: return "none";
    case Rounding::Hard: return "hard";
    case Rounding::Prob: return "prob";
    case Rounding::TopK: return "topk";
    }
    return "?";
}

inline Rounding rounding_from_string(const std::string& s) {
    if (s == "none") return Rounding::None;
    if (s == "hard") return Rounding::Hard;
    if (s == "prob") return Rounding::Prob;
    if (s == "topk") return Rounding::TopK;
    throw InputError("unknown rounding '" + s + "' (expected none|hard|prob|topk)");
}

} // namespace fairalloc
