#pragma once

#include "fairalloc/errors.hpp"
#include "fairalloc/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fairalloc {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Consumer x producer relevance scores, every entry in [0,1].
class RelevanceMatrix {
public:
    RelevanceMatrix() = default;
    explicit RelevanceMatrix(Matrix scores) : scores_(std::move(scores)) {
        if (scores_.rows() == 0 || scores_.cols() == 0)
            throw InputError("relevance matrix must have at least one consumer and one producer");
        for (std::size_t i = 0; i < scores_.rows(); ++i)
            for (std::size_t j = 0; j < scores_.cols(); ++j) {
                const double v = scores_(i, j);
                if (!(v >= 0.0 && v <= 1.0))
                    throw InputError("relevance entry out of [0,1] at (" + std::to_string(i) +
                                     "," + std::to_string(j) + ")");
            }
    }

    std::size_t consumers() const noexcept { return scores_.rows(); }
    std::size_t producers() const noexcept { return scores_.cols(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return scores_(i, j); }
    std::span<const double> row(std::size_t i) const noexcept { return scores_.row(i); }
    const Matrix& scores() const noexcept { return scores_; }

private:
    Matrix scores_;
};

inline constexpr double kBinaryTol = 1e-9;

/// Allocation weights in [0,1]; fractional while solving, binary after rounding.
class Allocation {
public:
    Allocation() = default;
    Allocation(std::size_t m, std::size_t n) : weights_(m, n, 0.0), binary_(true) {}
    explicit Allocation(Matrix weights) : weights_(std::move(weights)) {
        for (double& v : weights_.flat()) {
            if (!std::isfinite(v) || v < -kBinaryTol || v > 1.0 + kBinaryTol)
                throw InputError("allocation weight outside [0,1]");
            v = std::clamp(v, 0.0, 1.0);
        }
        refresh();
    }

    std::size_t consumers() const noexcept { return weights_.rows(); }
    std::size_t producers() const noexcept { return weights_.cols(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return weights_(i, j); }
    std::span<const double> row(std::size_t i) const noexcept { return weights_.row(i); }
    const Matrix& weights() const noexcept { return weights_; }

    /// True iff every entry is within 1e-9 of 0 or 1.
    bool binary() const noexcept { return binary_; }

    void set(std::size_t i, std::size_t j, double v) {
        if (!(v >= 0.0 && v <= 1.0)) throw InputError("allocation weight outside [0,1]");
        weights_(i, j) = v;
        if (binary_ && std::min(v, 1.0 - v) > kBinaryTol) binary_ = false;
        else if (!binary_) refresh();
    }

    bool operator==(const Allocation& o) const { return weights_ == o.weights_; }

private:
    void refresh() {
        binary_ = std::all_of(weights_.flat().begin(), weights_.flat().end(),
                              [](double v) { return std::min(v, 1.0 - v) <= kBinaryTol; });
    }

    Matrix weights_;
    bool binary_ = true;
};

/// Partition of consumers into G nonempty groups.
class GroupPartition {
public:
    GroupPartition() = default;
    explicit GroupPartition(std::vector<int> labels) : labels_(std::move(labels)) {
        if (labels_.empty()) throw InputError("group partition needs at least one consumer");
        int max_label = -1;
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i] < 0)
                throw InputError("negative group label for consumer " + std::to_string(i));
            max_label = std::max(max_label, labels_[i]);
        }
        sizes_.assign(static_cast<std::size_t>(max_label) + 1, 0);
        for (int g : labels_) ++sizes_[static_cast<std::size_t>(g)];
        for (std::size_t g = 0; g < sizes_.size(); ++g)
            if (sizes_[g] == 0) throw InputError("group " + std::to_string(g) + " is empty");
    }

    static GroupPartition single(std::size_t m) { return GroupPartition(std::vector<int>(m, 0)); }
    static GroupPartition identity(std::size_t m) {
        std::vector<int> l(m);
        std::iota(l.begin(), l.end(), 0);
        return GroupPartition(std::move(l));
    }

    std::size_t consumers() const noexcept { return labels_.size(); }
    std::size_t groups() const noexcept { return sizes_.size(); }
    int label(std::size_t i) const noexcept { return labels_[i]; }
    std::size_t size(std::size_t g) const noexcept { return sizes_[g]; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }

private:
    std::vector<int> labels_;
    std::vector<std::size_t> sizes_;
};

/// Nonnegative per-producer values (price or margin units), at least one positive.
class ProducerValues {
public:
    ProducerValues() = default;
    explicit ProducerValues(std::vector<double> v) : values_(std::move(v)) {
        bool any_positive = false;
        for (std::size_t j = 0; j < values_.size(); ++j) {
            if (!(values_[j] >= 0.0) || !std::isfinite(values_[j]))
                throw InputError("producer value must be finite and >= 0 at producer " +
                                 std::to_string(j));
            any_positive = any_positive || values_[j] > 0.0;
        }
        if (!any_positive) throw InputError("at least one producer value must be positive");
    }

    std::size_t producers() const noexcept { return values_.size(); }
    double operator[](std::size_t j) const noexcept { return values_[j]; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> values_;
};

enum class Objective { MaxMin, Mean, CVaR };
enum class Normalization { TopK, SingleMax };

inline std::string to_string(Objective o) {
    switch (o) {
    case Objective::MaxMin: return "maxmin";
    case Objective::Mean: return "mean";
    case Objective::CVaR: return "cvar";
    }
    return "?";
}

inline Objective objective_from_string(const std::string& s) {
    if (s == "maxmin") return Objective::MaxMin;
    if (s == "mean") return Objective::Mean;
    if (s == "cvar") return Objective::CVaR;
    throw InputError("unknown objective '" + s + "' (expected maxmin|mean|cvar)");
}

/// Max-min uses the single best item as denominator; mean and CVaR use top-k.
constexpr Normalization default_normalization(Objective o) noexcept {
    return o == Objective::MaxMin ? Normalization::SingleMax : Normalization::TopK;
}

struct FairnessParams {
    int k = 1;
    double gamma = 0.0;
    double alpha = 0.0;
    double theta = 0.0;
    Objective objective = Objective::Mean;
    std::optional<Normalization> normalization;
    /// Replaces ceil(gamma * U*) when set; used to pose deliberately tight floors.
    std::optional<int> producer_floor_override;

    Normalization utility_normalization() const noexcept {
        return normalization.value_or(default_normalization(objective));
    }

    void validate(std::size_t producers) const {
        if (k < 1 || static_cast<std::size_t>(k) > producers)
            throw InputError("k must satisfy 1 <= k <= n (k=" + std::to_string(k) +
                             ", n=" + std::to_string(producers) + ")");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError("gamma must lie in [0,1]");
        if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("alpha must lie in [0,1)");
        if (!(theta >= 0.0 && theta <= 1.0)) throw InputError("theta must lie in [0,1]");
        if (producer_floor_override && *producer_floor_override < 0)
            throw InputError("producer floor override must be >= 0");
    }
};

/// A problem instance: relevance plus the optional group partition and values.
struct Instance {
    RelevanceMatrix rho;
    std::optional<GroupPartition> groups;
    std::optional<ProducerValues> values;

    std::size_t consumers() const noexcept { return rho.consumers(); }
    std::size_t producers() const noexcept { return rho.producers(); }

    void validate() const {
        if (groups && groups->consumers() != rho.consumers())
            throw InputError("group partition covers " + std::to_string(groups->consumers()) +
                             " consumers, relevance has " + std::to_string(rho.consumers()));
        if (values && values->producers() != rho.producers())
            throw InputError("producer values cover " + std::to_string(values->producers()) +
                             " producers, relevance has " + std::to_string(rho.producers()));
    }

    /// Groups if present, else every consumer in one group.
    GroupPartition groups_or_single() const {
        return groups ? *groups : GroupPartition::single(rho.consumers());
    }
};

struct ViolationReport {
    double under_alloc_pct = 0.0;
    double over_alloc_pct = 0.0;
    double producer_violation_pct = 0.0;
    bool gmv_violated = false;
    double gmv_shortfall = 0.0;

    bool clean() const noexcept {
        return under_alloc_pct == 0.0 && over_alloc_pct == 0.0 &&
               producer_violation_pct == 0.0 && !gmv_violated;
    }
};

struct SolverStats {
    std::string solver;
    std::string rounding;
    long iterations = 0;
    long nodes = 0;
    long lp_solves = 0;
    double best_bound = std::numeric_limits<double>::quiet_NaN();
    double incumbent = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    bool caps_hit = false;
    double wall_seconds = 0.0;
};

struct SolveResult {
    Allocation allocation;
    double objective_value = 0.0;
    std::vector<double> consumer_utilities;
    std::vector<double> group_utilities;
    double group_variance = 0.0;
    ViolationReport violations;
    SolverStats stats;

    double mean_utility() const {
        if (consumer_utilities.empty()) return 0.0;
        return std::accumulate(consumer_utilities.begin(), consumer_utilities.end(), 0.0) /
               static_cast<double>(consumer_utilities.size());
    }
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Indices of the k largest entries, ties to the lower index, in rank order.
inline std::vector<std::size_t> top_k_indices(std::span<const double> row, std::size_t k) {
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, row.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return row[a] > row[b] || (row[a] == row[b] && a < b);
                      });
    idx.resize(k);
    return idx;
}

/// Utility denominator: sum of the k best scores (TopK) or the best score (SingleMax).
inline double utility_denominator(std::span<const double> rho_row, int k, Normalization mode) {
    if (mode == Normalization::SingleMax)
        return rho_row.empty() ? 0.0 : *std::max_element(rho_row.begin(), rho_row.end());
    double s = 0.0;
    for (std::size_t j : top_k_indices(rho_row, static_cast<std::size_t>(k))) s += rho_row[j];
    return s;
}

inline std::vector<double> utility_denominators(const RelevanceMatrix& rho, int k,
                                                Normalization mode) {
    std::vector<double> d(rho.consumers());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = utility_denominator(rho.row(i), k, mode);
    return d;
}

/// Captured relevance over the best achievable; an all-zero row counts as fully served.
inline double consumer_utility(std::span<const double> rho_row, std::span<const double> w_row,
                               int k, Normalization mode) {
    if (rho_row.size() != w_row.size())
        throw InputError("consumer_utility: relevance and weight rows differ in length");
    if (k < 1 || static_cast<std::size_t>(k) > rho_row.size())
        throw InputError("consumer_utility: k must satisfy 1 <= k <= n");
    const double denom = utility_denominator(rho_row, k, mode);
    if (denom == 0.0) return 1.0;
    double num = 0.0;
    for (std::size_t j = 0; j < rho_row.size(); ++j) num += w_row[j] * rho_row[j];
    return num / denom;
}

inline void check_dims(const RelevanceMatrix& rho, const Allocation& w) {
    if (rho.consumers() != w.consumers() || rho.producers() != w.producers())
        throw InputError("allocation is " + std::to_string(w.consumers()) + "x" +
                         std::to_string(w.producers()) + " but relevance is " +
                         std::to_string(rho.consumers()) + "x" + std::to_string(rho.producers()));
}

inline std::vector<double> consumer_utilities(const RelevanceMatrix& rho, const Allocation& w,
                                              int k, Normalization mode) {
    check_dims(rho, w);
    std::vector<double> u(rho.consumers());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = consumer_utility(rho.row(i), w.row(i), k, mode);
    return u;
}

inline std::vector<double> producer_exposures(const Allocation& w) {
    std::vector<double> e(w.producers(), 0.0);
    for (std::size_t i = 0; i < w.consumers(); ++i) {
        auto r = w.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) e[j] += r[j];
    }
    return e;
}

inline std::vector<double> consumer_loads(const Allocation& w) {
    std::vector<double> c(w.consumers(), 0.0);
    for (std::size_t i = 0; i < w.consumers(); ++i) {
        auto r = w.row(i);
        c[i] = std::accumulate(r.begin(), r.end(), 0.0);
    }
    return c;
}

/// Per-group means of a per-consumer quantity.
inline std::vector<double> group_means(std::span<const double> per_consumer,
                                       const GroupPartition& groups) {
    if (per_consumer.size() != groups.consumers())
        throw InputError("group_means: partition does not match consumer count");
    std::vector<double> acc(groups.groups(), 0.0);
    for (std::size_t i = 0; i < per_consumer.size(); ++i)
        acc[static_cast<std::size_t>(groups.label(i))] += per_consumer[i];
    for (std::size_t g = 0; g < acc.size(); ++g) acc[g] /= static_cast<double>(groups.size(g));
    return acc;
}

/// Mean relevance loss (1 - top-k normalised utility) of each group.
inline std::vector<double> group_losses(const RelevanceMatrix& rho, const Allocation& w,
                                        const GroupPartition& groups, int k) {
    check_dims(rho, w);
    if (groups.consumers() != rho.consumers())
        throw InputError("group_losses: partition does not match consumer count");
    auto u = consumer_utilities(rho, w, k, Normalization::TopK);
    for (double& x : u) x = 1.0 - x;
    return group_means(u, groups);
}

/// tau + sum_g max(L_g - tau, 0) / ((1 - alpha) G).
inline double cvar_value(std::span<const double> losses, double tau, double alpha) {
    if (!(alpha < 1.0)) throw InputError("cvar_value: alpha must be < 1");
    if (losses.empty()) throw InputError("cvar_value: no groups");
    double tail = 0.0;
    for (double l : losses) tail += std::max(l - tau, 0.0);
    return tau + tail / ((1.0 - alpha) * static_cast<double>(losses.size()));
}

struct CvarMinimum {
    double value;
    double tau;
};

/// Minimum of cvar_value over tau >= 0. The function is convex and piecewise
/// linear in tau with kinks at the losses, so checking {0} and every nonnegative
/// loss is exact. Ties keep the smallest tau.
inline CvarMinimum cvar_minimize(std::span<const double> losses, double alpha) {
    CvarMinimum best{cvar_value(losses, 0.0, alpha), 0.0};
    std::vector<double> cand(losses.begin(), losses.end());
    std::sort(cand.begin(), cand.end());
    for (double t : cand) {
        if (t < 0.0) continue;
        const double v = cvar_value(losses, t, alpha);
        if (v < best.value) best = {v, t};
    }
    return best;
}

/// Allocation-weighted GMV: sum_j v_j * exposure_j.
inline double gmv_of_allocation(const Allocation& w, const ProducerValues& values) {
    if (values.producers() != w.producers())
        throw InputError("gmv_of_allocation: values do not match producer count");
    const auto e = producer_exposures(w);
    double s = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) s += values[j] * e[j];
    return s;
}

inline constexpr double kCountTol = 1e-6;

/// Snap a row or column sum to the nearest integer when within 1e-6 of it.
inline double snap_count(double s) noexcept {
    const double r = std::round(s);
    return std::abs(s - r) <= kCountTol ? r : s;
}

/// Percentages of consumers with row sum below/above k and of producers below
/// the exposure floor, plus the GMV shortfall when values are supplied.
inline ViolationReport violation_report(const Allocation& w, const FairnessParams& params,
                                        double producer_floor, double gmv_floor,
                                        const ProducerValues* values) {
    ViolationReport rep;
    const auto m = static_cast<double>(w.consumers());
    const auto n = static_cast<double>(w.producers());
    std::size_t under = 0, over = 0, low = 0;
    for (double c : consumer_loads(w)) {
        const double s = snap_count(c);
        if (s < params.k) ++under;
        else if (s > params.k) ++over;
    }
    for (double e : producer_exposures(w))
        if (snap_count(e) < producer_floor) ++low;
    rep.under_alloc_pct = 100.0 * static_cast<double>(under) / m;
    rep.over_alloc_pct = 100.0 * static_cast<double>(over) / m;
    rep.producer_violation_pct = 100.0 * static_cast<double>(low) / n;
    if (values && gmv_floor > 0.0) {
        const double gmv = gmv_of_allocation(w, *values);
        const double slack = 1e-9 * std::max(1.0, std::abs(gmv_floor));
        if (gmv < gmv_floor - slack) {
            rep.gmv_violated = true;
            rep.gmv_shortfall = gmv_floor - gmv;
        }
    }
    return rep;
}

/// Population variance.
inline double group_utility_variance(std::span<const double> group_utilities) {
    if (group_utilities.empty()) throw InputError("group_utility_variance: no groups");
    const double n = static_cast<double>(group_utilities.size());
    const double mean = std::accumulate(group_utilities.begin(), group_utilities.end(), 0.0) / n;
    double ss = 0.0;
    for (double u : group_utilities) ss += (u - mean) * (u - mean);
    return ss / n;
}

/// Value of the configured objective for an allocation: mean or minimum consumer
/// utility (maximised), or the tau-minimised CVaR of group losses (minimised).
inline double allocation_objective(const RelevanceMatrix& rho, const Allocation& w,
                                   const GroupPartition& groups, const FairnessParams& params) {
    const auto mode = params.utility_normalization();
    const auto u = consumer_utilities(rho, w, params.k, mode);
    switch (params.objective) {
    case Objective::Mean:
        return std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
    case Objective::MaxMin:
        return *std::min_element(u.begin(), u.end());
    case Objective::CVaR: {
        std::vector<double> loss(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) loss[i] = 1.0 - u[i];
        return cvar_minimize(group_means(loss, groups), params.alpha).value;
    }
    }
    return 0.0;
}

constexpr bool maximizes(Objective o) noexcept { return o != Objective::CVaR; }

} // namespace fairalloc
