#pragma once

// Translation of an allocation instance into a linear / mixed-binary program.
//
// Variable layout: w_ij at i*n + j, then (max-min) t, then (CVaR) tau followed by
// one slack s_g per group. Row order: m allocation rows, n producer-floor rows
// (gamma > 0 or an explicit floor), one GMV row (theta > 0), G CVaR link rows,
// m max-min link rows.

#include "fairalloc/core.hpp"
#include "fairalloc/oracle.hpp"

#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace fairalloc {

enum class Integrality { Binary, Relaxed };
enum class RowSense { Equal, GreaterEqual, LessEqual };
enum class Sense { Maximize, Minimize };

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ProgramRow {
    std::vector<std::size_t> index;
    std::vector<double> coef;
    RowSense sense = RowSense::Equal;
    double rhs = 0.0;
    ConstraintFamily family = ConstraintFamily::Allocation;
    std::string name;

    double activity(std::span<const double> x) const {
        double a = 0.0;
        for (std::size_t p = 0; p < index.size(); ++p) a += coef[p] * x[index[p]];
        return a;
    }
};

struct ProgramLayout {
    std::size_t consumers = 0;
    std::size_t producers = 0;
    std::optional<std::size_t> t;     // max-min level
    std::optional<std::size_t> tau;   // CVaR threshold
    std::size_t slack_begin = 0;      // first s_g
    std::size_t slack_count = 0;

    std::size_t w(std::size_t i, std::size_t j) const noexcept { return i * producers + j; }
    std::size_t allocation_vars() const noexcept { return consumers * producers; }
};

struct StandardProgram {
    std::size_t num_vars = 0;
    std::vector<double> lower, upper, objective;
    double objective_offset = 0.0;
    Sense sense = Sense::Maximize;
    std::vector<ProgramRow> rows;
    std::vector<char> integer;
    Integrality integrality = Integrality::Relaxed;
    ProgramLayout layout;
    long producer_floor = 0;
    double gmv_floor = 0.0;

    std::size_t count_rows(RowSense s) const {
        std::size_t c = 0;
        for (const auto& r : rows) c += r.sense == s;
        return c;
    }
    std::size_t count_rows(ConstraintFamily f) const {
        std::size_t c = 0;
        for (const auto& r : rows) c += r.family == f;
        return c;
    }

    double objective_at(std::span<const double> x) const {
        double v = objective_offset;
        for (std::size_t j = 0; j < num_vars; ++j) v += objective[j] * x[j];
        return v;
    }

    std::string var_name(std::size_t j) const {
        if (j < layout.allocation_vars())
            return "w_" + std::to_string(j / layout.producers) + "_" +
                   std::to_string(j % layout.producers);
        if (layout.t && j == *layout.t) return "t";
        if (layout.tau && j == *layout.tau) return "tau";
        return "s_" + std::to_string(j - layout.slack_begin);
    }
};

/// Build the program for (instance, params). Relaxed and Binary builds differ
/// only in the integrality mask.
inline StandardProgram build_program(const Instance& inst, const FairnessParams& params,
                                     Integrality integrality) {
    inst.validate();
    const std::size_t m = inst.consumers(), n = inst.producers();
    params.validate(n);
    if (params.objective == Objective::CVaR && !inst.groups)
        throw InputError("CVaR objective requires a group partition");
    const ProducerValues* values = inst.values ? &*inst.values : nullptr;

    StandardProgram p;
    p.integrality = integrality;
    p.layout.consumers = m;
    p.layout.producers = n;
    std::size_t nv = m * n;
    if (params.objective == Objective::MaxMin) p.layout.t = nv++;
    if (params.objective == Objective::CVaR) {
        p.layout.tau = nv++;
        p.layout.slack_begin = nv;
        p.layout.slack_count = inst.groups->groups();
        nv += p.layout.slack_count;
    }
    p.num_vars = nv;
    p.lower.assign(nv, 0.0);
    p.upper.assign(nv, kInf);
    p.objective.assign(nv, 0.0);
    p.integer.assign(nv, 0);
    for (std::size_t j = 0; j < m * n; ++j) {
        p.upper[j] = 1.0;
        p.integer[j] = integrality == Integrality::Binary;
    }

    const auto mode = params.utility_normalization();
    const auto denom = utility_denominators(inst.rho, params.k, mode);

    // sum_j w_ij = k
    for (std::size_t i = 0; i < m; ++i) {
        ProgramRow r;
        r.name = "alloc_" + std::to_string(i);
        r.family = ConstraintFamily::Allocation;
        r.sense = RowSense::Equal;
        r.rhs = params.k;
        for (std::size_t j = 0; j < n; ++j) {
            r.index.push_back(p.layout.w(i, j));
            r.coef.push_back(1.0);
        }
        p.rows.push_back(std::move(r));
    }

    // sum_i w_ij >= floor
    if (params.gamma > 0.0 || params.producer_floor_override) {
        p.producer_floor = producer_floor(params, m, n);
        for (std::size_t j = 0; j < n; ++j) {
            ProgramRow r;
            r.name = "floor_" + std::to_string(j);
            r.family = ConstraintFamily::ProducerFloor;
            r.sense = RowSense::GreaterEqual;
            r.rhs = static_cast<double>(p.producer_floor);
            for (std::size_t i = 0; i < m; ++i) {
                r.index.push_back(p.layout.w(i, j));
                r.coef.push_back(1.0);
            }
            p.rows.push_back(std::move(r));
        }
    }

    // sum_j v_j sum_i w_ij >= theta * V_max
    if (params.theta > 0.0) {
        p.gmv_floor = gmv_floor(params, values, m);
        ProgramRow r;
        r.name = "gmv";
        r.family = ConstraintFamily::Gmv;
        r.sense = RowSense::GreaterEqual;
        r.rhs = p.gmv_floor;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if ((*values)[j] != 0.0) {
                    r.index.push_back(p.layout.w(i, j));
                    r.coef.push_back((*values)[j]);
                }
        p.rows.push_back(std::move(r));
    }

    switch (params.objective) {
    case Objective::Mean: {
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            if (denom[i] == 0.0) {
                p.objective_offset += inv_m;
                continue;
            }
            for (std::size_t j = 0; j < n; ++j)
                p.objective[p.layout.w(i, j)] = inv_m * inst.rho(i, j) / denom[i];
        }
        p.sense = Sense::Maximize;
        break;
    }
    case Objective::MaxMin: {
        const std::size_t t = *p.layout.t;
        p.objective[t] = 1.0;
        p.sense = Sense::Maximize;
        // utility_i - t >= 0; a zero-relevance consumer has constant utility 1
        for (std::size_t i = 0; i < m; ++i) {
            ProgramRow r;
            r.name = "maxmin_" + std::to_string(i);
            r.family = ConstraintFamily::MaxMinLink;
            r.sense = RowSense::GreaterEqual;
            if (denom[i] == 0.0) {
                r.rhs = -1.0;
            } else {
                for (std::size_t j = 0; j < n; ++j)
                    if (inst.rho(i, j) != 0.0) {
                        r.index.push_back(p.layout.w(i, j));
                        r.coef.push_back(inst.rho(i, j) / denom[i]);
                    }
            }
            r.index.push_back(t);
            r.coef.push_back(-1.0);
            p.rows.push_back(std::move(r));
        }
        break;
    }
    case Objective::CVaR: {
        const auto& groups = *inst.groups;
        const std::size_t G = groups.groups();
        const std::size_t tau = *p.layout.tau;
        p.sense = Sense::Minimize;
        p.objective[tau] = 1.0;
        const double c = 1.0 / ((1.0 - params.alpha) * static_cast<double>(G));
        for (std::size_t g = 0; g < G; ++g) p.objective[p.layout.slack_begin + g] = c;
        // s_g + tau - L_g(w) >= 0 with
        // L_g(w) = (#nonzero-relevance members)/N_g - sum rho_ij w_ij / (N_g D_i)
        std::vector<ProgramRow> link(G);
        for (std::size_t g = 0; g < G; ++g) {
            link[g].name = "cvar_" + std::to_string(g);
            link[g].family = ConstraintFamily::CvarLink;
            link[g].sense = RowSense::GreaterEqual;
        }
        for (std::size_t i = 0; i < m; ++i) {
            const auto g = static_cast<std::size_t>(groups.label(i));
            if (denom[i] == 0.0) continue;
            const double ng = static_cast<double>(groups.size(g));
            link[g].rhs += 1.0 / ng;
            for (std::size_t j = 0; j < n; ++j)
                if (inst.rho(i, j) != 0.0) {
                    link[g].index.push_back(p.layout.w(i, j));
                    link[g].coef.push_back(inst.rho(i, j) / (ng * denom[i]));
                }
        }
        for (std::size_t g = 0; g < G; ++g) {
            link[g].index.push_back(p.layout.slack_begin + g);
            link[g].coef.push_back(1.0);
            link[g].index.push_back(tau);
            link[g].coef.push_back(1.0);
            p.rows.push_back(std::move(link[g]));
        }
        break;
    }
    }
    return p;
}

namespace detail {
inline std::string lp_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

/// Write the program in CPLEX LP text format.
inline void write_lp_format(const StandardProgram& p, std::ostream& os) {
    using detail::lp_number;
    os << "\\ fairalloc program: " << p.layout.consumers << " consumers, "
       << p.layout.producers << " producers\n";
    os << (p.sense == Sense::Maximize ? "Maximize\n" : "Minimize\n") << " obj:";
    bool any = false;
    for (std::size_t j = 0; j < p.num_vars; ++j)
        if (p.objective[j] != 0.0) {
            os << (p.objective[j] < 0 ? " - " : " + ") << lp_number(std::abs(p.objective[j]))
               << ' ' << p.var_name(j);
            any = true;
        }
    if (p.objective_offset != 0.0 || !any) os << " + " << lp_number(p.objective_offset) << " constant";
    os << "\nSubject To\n";
    for (const auto& r : p.rows) {
        os << ' ' << r.name << ':';
        for (std::size_t q = 0; q < r.index.size(); ++q)
            os << (r.coef[q] < 0 ? " - " : " + ") << lp_number(std::abs(r.coef[q])) << ' '
               << p.var_name(r.index[q]);
        if (r.index.empty()) os << " 0 constant";
        os << (r.sense == RowSense::Equal ? " = " : r.sense == RowSense::GreaterEqual ? " >= " : " <= ")
           << lp_number(r.rhs) << '\n';
    }
    os << "Bounds\n";
    for (std::size_t j = 0; j < p.num_vars; ++j) {
        os << ' ' << lp_number(p.lower[j]) << " <= " << p.var_name(j);
        if (std::isfinite(p.upper[j])) os << " <= " << lp_number(p.upper[j]);
        os << '\n';
    }
    if (p.objective_offset != 0.0 || !any) os << " constant = 1\n";
    bool header = false;
    for (std::size_t j = 0; j < p.num_vars; ++j)
        if (p.integer[j]) {
            if (!header) os << "Binaries\n";
            header = true;
            os << ' ' << p.var_name(j) << '\n';
        }
    os << "End\n";
}

inline std::string to_lp_format(const StandardProgram& p) {
    std::ostringstream os;
    write_lp_format(p, os);
    return os.str();
}

} // namespace fairalloc
