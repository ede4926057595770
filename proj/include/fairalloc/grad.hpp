#pragma once

// Gradient solvers over the sigmoid parameterisation w = sigmoid(z / eta_t).
//
//   L_util = tau + c * sum_g max(L_g(w) - tau, 0),   c = 1 / ((1 - alpha) G)
//   L_card = sum_i (c_i - k)^2                       c_i = sum_j w_ij
//   L_prod = sum_j max(0, p_min - p_j)^2             p_j = sum_i w_ij
//   L_bin  = sum_ij (w_ij (1 - w_ij))^2
//
// AugLag minimises L_util + a'(c - k) + b' max(0, p_min - p) + (lambda/2)(L_card + L_prod)
// with dual ascent on (a, b) every `dual_period` steps. SCGrad minimises
// L_util + L_card + L_prod + L_bin (each weight configurable, default 1).
//
// Steps default to Adam. Fixed-step descent is available but the penalty
// curvature grows like 1/eta^2 while the utility gradient stays O(1e-2), so a
// single fixed step is either unstable late or negligible early.

#include "fairalloc/core.hpp"
#include "fairalloc/lp.hpp"
#include "fairalloc/oracle.hpp"
#include "fairalloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace fairalloc {

enum class Optimizer { Plain, Adam };

struct GradConfig {
    double learning_rate = 0.05;
    int iterations = 5000;
    double eta0 = 1.0;
    double anneal_rate = 0.999;
    double eta_min = 0.05;
    double lambda = 10.0;          // quadratic penalty weight (AugLag)
    int dual_period = 50;          // primal steps between dual updates (AugLag)
    double dual_step = 1.0;        // dual ascent step; 0.1 * lambda by default
    double card_weight = 1.0;      // SCGrad
    double prod_weight = 1.0;      // SCGrad
    double bin_weight = 1.0;       // SCGrad
    double tolerance = 0.0;        // stop when |delta total loss| < tolerance (0 = never)
    double init_jitter = 0.01;     // uniform noise on the initial logits
    double init_top = 0.5;         // initial weight of each consumer's k most relevant producers
    Optimizer optimizer = Optimizer::Adam;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw InputError("grad: learning rate must be > 0");
        if (iterations < 1) throw InputError("grad: iteration cap must be >= 1");
        if (!(eta0 > 0.0)) throw InputError("grad: eta0 must be > 0");
        if (!(anneal_rate > 0.0 && anneal_rate < 1.0)) throw InputError("grad: anneal_rate must lie in (0,1)");
        if (!(eta_min > 0.0)) throw InputError("grad: eta_min must be > 0");
        if (!(lambda > 0.0)) throw InputError("grad: lambda must be > 0");
        if (dual_period < 1) throw InputError("grad: dual_period must be >= 1");
        if (!(dual_step >= 0.0)) throw InputError("grad: dual_step must be >= 0");
        if (!(tolerance >= 0.0)) throw InputError("grad: tolerance must be >= 0");
        if (!(init_top > 0.0 && init_top < 1.0)) throw InputError("grad: init_top must lie in (0,1)");
    }
};

/// max(eta0 * anneal_rate^t, eta_min)
inline double temperature(long t, const GradConfig& cfg) {
    if (t < 0) throw InputError("temperature: t must be >= 0");
    return std::max(cfg.eta0 * std::pow(cfg.anneal_rate, static_cast<double>(t)), cfg.eta_min);
}

struct GradTraceRow {
    long iteration = 0;
    double total = 0.0;
    double util = 0.0;
    double card = 0.0;
    double prod = 0.0;
    double bin = 0.0;
    double temperature = 0.0;
    double tau = 0.0;
    double dual_alloc_norm = 0.0;  // ||a||, AugLag only
    double dual_prod_norm = 0.0;   // ||b||, AugLag only
};

struct GradTrace {
    std::vector<GradTraceRow> rows;

    void write_csv(std::ostream& os) const {
        os << "iteration,total,util,card,prod,bin,temperature,tau,dual_alloc_norm,dual_prod_norm\n";
        char buf[512];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          r.iteration, r.total, r.util, r.card, r.prod, r.bin, r.temperature, r.tau,
                          r.dual_alloc_norm, r.dual_prod_norm);
            os << buf;
        }
    }
};

/// Divergence of a gradient solver; carries the trace up to the failure.
class GradientDivergence : public NumericalError {
public:
    GradientDivergence(const std::string& what, GradTrace trace)
        : NumericalError(what), trace_(std::move(trace)) {}
    const GradTrace& trace() const noexcept { return trace_; }

private:
    GradTrace trace_;
};

struct GradOutput {
    FractionalSolution solution;
    GradTrace trace;
};

namespace grad {

/// Fixed data of the loss terms.
struct LossContext {
    std::size_t m = 0, n = 0;
    int k = 1;
    double p_min = 0.0;
    double cvar_coef = 1.0;               // 1 / ((1 - alpha) G)
    std::vector<double> coef;             // rho_ij / (N_g D_i), 0 for zero rows
    std::vector<double> const_loss;       // per group: (#nonzero-relevance members) / N_g
    std::vector<int> group;               // per consumer

    static LossContext make(const Instance& inst, const FairnessParams& params) {
        inst.validate();
        params.validate(inst.producers());
        LossContext c;
        c.m = inst.consumers();
        c.n = inst.producers();
        c.k = params.k;
        c.p_min = static_cast<double>(producer_floor(params, c.m, c.n));
        const auto groups = inst.groups_or_single();
        c.cvar_coef = 1.0 / ((1.0 - params.alpha) * static_cast<double>(groups.groups()));
        const auto denom = utility_denominators(inst.rho, params.k, params.utility_normalization());
        c.coef.assign(c.m * c.n, 0.0);
        c.const_loss.assign(groups.groups(), 0.0);
        c.group.resize(c.m);
        for (std::size_t i = 0; i < c.m; ++i) {
            const auto g = static_cast<std::size_t>(groups.label(i));
            c.group[i] = groups.label(i);
            if (denom[i] == 0.0) continue;
            const double ng = static_cast<double>(groups.size(g));
            c.const_loss[g] += 1.0 / ng;
            for (std::size_t j = 0; j < c.n; ++j) c.coef[i * c.n + j] = inst.rho(i, j) / (ng * denom[i]);
        }
        return c;
    }

    std::vector<double> group_losses(const std::vector<double>& w) const {
        std::vector<double> L = const_loss;
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += coef[i * n + j] * w[i * n + j];
            L[static_cast<std::size_t>(group[i])] -= s;
        }
        return L;
    }
};

/// CVaR loss; accumulates scale * dL/dw into gw and returns dL/dtau via gtau.
inline double util_loss(const LossContext& c, const std::vector<double>& w, double tau,
                        std::vector<double>* gw = nullptr, double* gtau = nullptr, double scale = 1.0) {
    const auto L = c.group_losses(w);
    double v = tau;
    std::size_t active = 0;
    for (double l : L)
        if (l > tau) {
            v += c.cvar_coef * (l - tau);
            ++active;
        }
    if (gtau) *gtau = scale * (1.0 - c.cvar_coef * static_cast<double>(active));
    if (gw) {
        for (std::size_t i = 0; i < c.m; ++i) {
            if (!(L[static_cast<std::size_t>(c.group[i])] > tau)) continue;
            for (std::size_t j = 0; j < c.n; ++j)
                (*gw)[i * c.n + j] -= scale * c.cvar_coef * c.coef[i * c.n + j];
        }
    }
    return v;
}

inline std::vector<double> row_sums(const LossContext& c, const std::vector<double>& w) {
    std::vector<double> s(c.m, 0.0);
    for (std::size_t i = 0; i < c.m; ++i)
        for (std::size_t j = 0; j < c.n; ++j) s[i] += w[i * c.n + j];
    return s;
}

inline std::vector<double> col_sums(const LossContext& c, const std::vector<double>& w) {
    std::vector<double> s(c.n, 0.0);
    for (std::size_t i = 0; i < c.m; ++i)
        for (std::size_t j = 0; j < c.n; ++j) s[j] += w[i * c.n + j];
    return s;
}

inline double card_loss(const LossContext& c, const std::vector<double>& w,
                        std::vector<double>* gw = nullptr, double scale = 1.0) {
    const auto rs = row_sums(c, w);
    double v = 0.0;
    for (std::size_t i = 0; i < c.m; ++i) {
        const double dev = rs[i] - c.k;
        v += dev * dev;
        if (gw)
            for (std::size_t j = 0; j < c.n; ++j) (*gw)[i * c.n + j] += scale * 2.0 * dev;
    }
    return v;
}

inline double prod_loss(const LossContext& c, const std::vector<double>& w,
                        std::vector<double>* gw = nullptr, double scale = 1.0) {
    const auto cs = col_sums(c, w);
    double v = 0.0;
    for (std::size_t j = 0; j < c.n; ++j) {
        const double short_by = std::max(0.0, c.p_min - cs[j]);
        v += short_by * short_by;
        if (gw && short_by > 0.0)
            for (std::size_t i = 0; i < c.m; ++i) (*gw)[i * c.n + j] -= scale * 2.0 * short_by;
    }
    return v;
}

inline double bin_loss(const std::vector<double>& w, std::vector<double>* gw = nullptr,
                       double scale = 1.0) {
    double v = 0.0;
    for (std::size_t q = 0; q < w.size(); ++q) {
        const double a = w[q] * (1.0 - w[q]);
        v += a * a;
        if (gw) (*gw)[q] += scale * 2.0 * a * (1.0 - 2.0 * w[q]);
    }
    return v;
}

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline std::vector<double> weights_from_logits(const std::vector<double>& z, double eta) {
    std::vector<double> w(z.size());
    for (std::size_t q = 0; q < z.size(); ++q) w[q] = sigmoid(z[q] / eta);
    return w;
}

/// dL/dz = dL/dw * w (1 - w) / eta, in place.
inline void chain_to_logits(std::vector<double>& g, const std::vector<double>& w, double eta) {
    for (std::size_t q = 0; q < g.size(); ++q) g[q] *= w[q] * (1.0 - w[q]) / eta;
}

/// Initial logits: each consumer's k most relevant producers start at
/// init_top, the rest share the remaining k (1 - init_top) units evenly, so
/// rows start at sum k. A small seeded jitter breaks ties.
inline std::vector<double> initial_logits(const Instance& inst, int k, const GradConfig& cfg) {
    const std::size_t m = inst.consumers(), n = inst.producers();
    std::vector<double> z(m * n);
    const auto ku = static_cast<std::size_t>(k);
    const double top = cfg.init_top;
    const double rest = ku < n ? std::min(top, (1.0 - top) * static_cast<double>(k) / static_cast<double>(n - ku)) : top;
    const double z_top = cfg.eta0 * std::log(top / (1.0 - top));
    const double z_rest = cfg.eta0 * std::log(rest / (1.0 - rest));
    rng::Stream noise(rng::substream(cfg.seed, std::uint64_t{0x67726164}));
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<char> top(n, 0);
        for (std::size_t j : top_k_indices(inst.rho.row(i), ku)) top[j] = 1;
        for (std::size_t j = 0; j < n; ++j)
            z[i * n + j] = (top[j] ? z_top : z_rest) + cfg.init_jitter * (2.0 * noise.uniform() - 1.0);
    }
    return z;
}

enum class Method { AugLag, SCGrad };

inline GradOutput run(const Instance& inst, const FairnessParams& params, const GradConfig& cfg,
                      Method method) {
    cfg.validate();
    const auto ctx = LossContext::make(inst, params);
    const std::size_t m = ctx.m, n = ctx.n, N = m * n;
    auto z = initial_logits(inst, params.k, cfg);
    double tau = cvar_minimize(ctx.group_losses(weights_from_logits(z, cfg.eta0)), params.alpha).tau;
    std::vector<double> dual_a(m, 0.0), dual_b(n, 0.0);
    std::vector<double> g(N), w;
    // Adam state
    std::vector<double> m1(N + 1, 0.0), m2(N + 1, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    GradOutput out;
    out.trace.rows.reserve(static_cast<std::size_t>(cfg.iterations));
    double prev_total = std::numeric_limits<double>::quiet_NaN();
    double eta = cfg.eta0;

    for (long t = 0; t < cfg.iterations; ++t) {
        eta = temperature(t, cfg);
        w = weights_from_logits(z, eta);
        std::fill(g.begin(), g.end(), 0.0);
        GradTraceRow row;
        row.iteration = t;
        row.temperature = eta;
        double gtau = 0.0;
        row.util = util_loss(ctx, w, tau, &g, &gtau);
        row.tau = tau;
        double total = row.util;
        if (method == Method::AugLag) {
            const auto rs = row_sums(ctx, w);
            const auto cs = col_sums(ctx, w);
            for (std::size_t i = 0; i < m; ++i) {
                total += dual_a[i] * (rs[i] - ctx.k);
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += dual_a[i];
            }
            for (std::size_t j = 0; j < n; ++j) {
                const double short_by = std::max(0.0, ctx.p_min - cs[j]);
                total += dual_b[j] * short_by;
                if (short_by > 0.0)
                    for (std::size_t i = 0; i < m; ++i) g[i * n + j] -= dual_b[j];
            }
            row.card = card_loss(ctx, w, &g, 0.5 * cfg.lambda);
            row.prod = prod_loss(ctx, w, &g, 0.5 * cfg.lambda);
            row.bin = bin_loss(w);
            total += 0.5 * cfg.lambda * (row.card + row.prod);
            double na = 0.0, nb = 0.0;
            for (double a : dual_a) na += a * a;
            for (double b : dual_b) nb += b * b;
            row.dual_alloc_norm = std::sqrt(na);
            row.dual_prod_norm = std::sqrt(nb);
        } else {
            row.card = card_loss(ctx, w, &g, cfg.card_weight);
            row.prod = prod_loss(ctx, w, &g, cfg.prod_weight);
            row.bin = bin_loss(w, &g, cfg.bin_weight);
            total += cfg.card_weight * row.card + cfg.prod_weight * row.prod + cfg.bin_weight * row.bin;
        }
        row.total = total;
        out.trace.rows.push_back(row);
        if (!std::isfinite(total))
            throw GradientDivergence("gradient solver diverged at iteration " + std::to_string(t),
                                     std::move(out.trace));

        chain_to_logits(g, w, eta);
        if (cfg.optimizer == Optimizer::Adam) {
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(t + 1));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(t + 1));
            for (std::size_t q = 0; q <= N; ++q) {
                const double gq = q < N ? g[q] : gtau;
                m1[q] = b1 * m1[q] + (1 - b1) * gq;
                m2[q] = b2 * m2[q] + (1 - b2) * gq * gq;
                const double step = cfg.learning_rate * (m1[q] / c1) / (std::sqrt(m2[q] / c2) + eps);
                if (q < N) z[q] -= step;
                else tau -= step;
            }
        } else {
            for (std::size_t q = 0; q < N; ++q) z[q] -= cfg.learning_rate * g[q];
            tau -= cfg.learning_rate * gtau;
        }
        tau = std::max(tau, 0.0);

        if (method == Method::AugLag && (t + 1) % cfg.dual_period == 0) {
            const auto wn = weights_from_logits(z, eta);
            const auto rs = row_sums(ctx, wn);
            const auto cs = col_sums(ctx, wn);
            for (std::size_t i = 0; i < m; ++i) dual_a[i] += cfg.dual_step * (rs[i] - ctx.k);
            for (std::size_t j = 0; j < n; ++j)
                dual_b[j] = std::max(0.0, dual_b[j] + cfg.dual_step * std::max(0.0, ctx.p_min - cs[j]));
        }

        if (cfg.tolerance > 0.0 && std::abs(total - prev_total) < cfg.tolerance) break;
        prev_total = total;
    }

    w = weights_from_logits(z, eta);
    for (double v : w)
        if (!std::isfinite(v))
            throw GradientDivergence("gradient solver produced non-finite weights", std::move(out.trace));
    out.solution.weights = Matrix(m, n, 0.0);
    std::copy(w.begin(), w.end(), out.solution.weights.flat().begin());
    out.solution.tau = tau;
    out.solution.objective = util_loss(ctx, w, tau);
    out.solution.vertex = false;
    out.solution.iterations = static_cast<long>(out.trace.rows.size());
    return out;
}

} // namespace grad

inline GradOutput solve_auglag(const Instance& inst, const FairnessParams& params,
                               const GradConfig& cfg = {}) {
    return grad::run(inst, params, cfg, grad::Method::AugLag);
}

inline GradOutput solve_scgrad(const Instance& inst, const FairnessParams& params,
                               const GradConfig& cfg = {}) {
    return grad::run(inst, params, cfg, grad::Method::SCGrad);
}

} // namespace fairalloc
