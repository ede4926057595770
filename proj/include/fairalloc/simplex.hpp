#pragma once

// Bounded-variable revised simplex on
//
//     minimize c'x  subject to  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi.
//
// Each row r gets a logical variable s_r = (A x)_r with bounds [row_lo, row_hi],
// so the working system is [A  -I] (x, s) = 0 and the all-logical basis is a
// valid start. The basis inverse is kept explicitly (dense R x R) with
// product-form updates and a periodic refactorisation; at desk scale R stays in
// the hundreds, so this is simpler and fast enough.
//
// solve()      primal simplex: phase 1 minimises the sum of bound violations of
//              basic variables, phase 2 the objective. Dantzig pricing with a
//              Harris two-pass ratio test; switches to Bland's smallest-index
//              rule after 5*(rows+cols) consecutive non-improving iterations.
// reoptimize() dual simplex from the current basis. Used after bound changes
//              (branching), where the previous optimal basis stays dual
//              feasible. Falls back to the primal loop if the basis is not dual
//              feasible.

#include "fairalloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace fairalloc::lp {

enum class SimplexStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct SimplexOptions {
    double primal_tol = 1e-9;
    double dual_tol = 1e-9;
    double pivot_tol = 1e-9;
    int refactor_period = 100;
    long max_iterations = 5'000'000;
    double cost_perturbation = 1e-6;
};

/// Compressed sparse column storage of the structural part of A.
struct SparseColumns {
    std::size_t rows = 0;
    std::vector<std::size_t> start{0};
    std::vector<std::size_t> row;
    std::vector<double> value;

    std::size_t cols() const noexcept { return start.size() - 1; }
};

class BoundedSimplex {
public:
    struct Basis {
        std::vector<std::size_t> head;
        std::vector<char> at_upper;
        bool operator==(const Basis&) const = default;
    };

    BoundedSimplex(SparseColumns a, std::vector<double> cost, std::vector<double> col_lo,
                   std::vector<double> col_hi, std::vector<double> row_lo,
                   std::vector<double> row_hi, SimplexOptions opt = {})
        : a_(std::move(a)), opt_(opt) {
        R_ = a_.rows;
        N_ = a_.cols();
        const std::size_t nt = N_ + R_;
        if (cost.size() != N_ || col_lo.size() != N_ || col_hi.size() != N_ ||
            row_lo.size() != R_ || row_hi.size() != R_)
            throw InputError("simplex: inconsistent dimensions");
        cost_ = std::move(cost);
        cost_.resize(nt, 0.0);
        lo_ = std::move(col_lo);
        hi_ = std::move(col_hi);
        lo_.insert(lo_.end(), row_lo.begin(), row_lo.end());
        hi_.insert(hi_.end(), row_hi.begin(), row_hi.end());
        for (std::size_t j = 0; j < nt; ++j)
            if (lo_[j] > hi_[j]) throw InputError("simplex: empty bound interval");

        head_.resize(R_);
        pos_.assign(nt, kNonbasic);
        at_upper_.assign(nt, 0);
        for (std::size_t r = 0; r < R_; ++r) {
            head_[r] = N_ + r;
            pos_[N_ + r] = r;
        }
        for (std::size_t j = 0; j < N_; ++j) at_upper_[j] = !std::isfinite(lo_[j]) && std::isfinite(hi_[j]);
        x_.assign(nt, 0.0);
        binv_.assign(R_ * R_, 0.0);
        for (std::size_t r = 0; r < R_; ++r) binv_[r * R_ + r] = -1.0; // B = -I
        row_norm_.assign(R_, 1.0);
        y_.assign(R_, 0.0);
        d_.assign(nt, 0.0);
        alpha_.assign(R_, 0.0);
        // row-wise copy of A for computing rows of B^{-1} A
        row_start_.assign(R_ + 1, 0);
        for (std::size_t q = 0; q < a_.row.size(); ++q) ++row_start_[a_.row[q] + 1];
        for (std::size_t r = 0; r < R_; ++r) row_start_[r + 1] += row_start_[r];
        row_col_.resize(a_.row.size());
        row_val_.resize(a_.row.size());
        std::vector<std::size_t> fill(row_start_.begin(), row_start_.end() - 1);
        for (std::size_t j = 0; j < N_; ++j)
            for (std::size_t q = a_.start[j]; q < a_.start[j + 1]; ++q) {
                const std::size_t at = fill[a_.row[q]]++;
                row_col_[at] = j;
                row_val_[at] = a_.value[q];
            }
        rhs_.assign(R_, 0.0);
        cb_.assign(R_, 0.0);
    }

    std::size_t rows() const noexcept { return R_; }
    std::size_t cols() const noexcept { return N_; }
    long iterations() const noexcept { return iterations_; }

    /// Primal simplex from the current basis.
    SimplexStatus solve() { return primal_loop(); }

    /// Dual simplex from the current basis (expects dual feasibility).
    SimplexStatus reoptimize() { return dual_loop(); }

    /// Dual simplex with structural costs shifted by tiny index-dependent
    /// amounts in the dual feasible direction, which breaks the ties that make
    /// zero-cost columns pivot endlessly. The true costs are restored at the end
    /// and the primal simplex finishes from the resulting basis.
    SimplexStatus reoptimize_perturbed() {
        place_nonbasics();
        const auto cost = cost_;
        double scale = 0.0;
        for (std::size_t j = 0; j < N_; ++j) scale = std::max(scale, std::abs(cost_[j]));
        const double delta = opt_.cost_perturbation * std::max(scale, 1.0);
        for (std::size_t j = 0; j < N_; ++j) {
            if (pos_[j] != kNonbasic || lo_[j] == hi_[j]) continue;
            const double u = 1.0 + static_cast<double>(mix(j) % 4096) / 4096.0;
            cost_[j] += (at_upper_[j] ? -1.0 : 1.0) * delta * u;
        }
        const auto status = dual_loop();
        cost_ = cost;
        if (status != SimplexStatus::Optimal) return status;
        return primal_loop();
    }

private:
    static constexpr std::uint64_t mix(std::uint64_t x) noexcept {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    SimplexStatus primal_loop() {
        place_nonbasics();
        long stall = 0;
        bland_ = false;
        bool phase_one = true;
        for (;;) {
            if (iterations_ >= opt_.max_iterations) return SimplexStatus::IterationLimit;
            if (since_refactor_ >= opt_.refactor_period) refactor();
            compute_primal();
            const double infeas = load_phase_costs(phase_one);
            if (phase_one && infeas == 0.0) {
                phase_one = false;
                stall = 0;
                bland_ = false;
                load_phase_costs(false);
            }
            compute_duals();

            const auto [enter, dir] = price();
            if (enter == kNone) {
                if (phase_one) return SimplexStatus::Infeasible;
                return SimplexStatus::Optimal;
            }
            ftran(enter);
            const Step step = phase_one ? ratio_phase_one(dir) : ratio_phase_two(dir);
            const double range = hi_[enter] - lo_[enter];
            ++iterations_;
            if (step.pos == kNone && !std::isfinite(range)) {
                if (phase_one) throw NumericalError("simplex: unbounded ray in phase 1");
                return SimplexStatus::Unbounded;
            }
            const bool flip = step.pos == kNone || range <= step.theta;
            const double theta = flip ? range : step.theta;
            const double gain = theta * std::abs(d_[enter]);
            if (gain <= 1e-12) {
                if (++stall > 5 * static_cast<long>(R_ + N_)) bland_ = true;
            } else {
                stall = 0;
                bland_ = false;
            }
            if (flip) {
                at_upper_[enter] = !at_upper_[enter];
            } else {
                pivot(step.pos, enter, step.leave_upper);
            }
        }
    }

    SimplexStatus dual_loop() {
        place_nonbasics();
        load_phase_costs(false);
        compute_primal();
        compute_duals();
        // Boxed nonbasics with the wrong reduced-cost sign can simply switch bound.
        for (std::size_t j = 0; j < N_ + R_; ++j) {
            if (pos_[j] != kNonbasic || lo_[j] == hi_[j]) continue;
            const bool boxed = std::isfinite(lo_[j]) && std::isfinite(hi_[j]);
            if (!at_upper_[j] && d_[j] < -opt_.dual_tol) {
                if (!boxed) return primal_loop();
                at_upper_[j] = 1;
            } else if (at_upper_[j] && d_[j] > opt_.dual_tol) {
                if (!boxed) return primal_loop();
                at_upper_[j] = 0;
            }
        }
        // Primal values and reduced costs are updated in place after each pivot
        // and recomputed from scratch whenever the inverse is refactorised.
        std::vector<double> arow(N_ + R_, 0.0);
        std::vector<std::size_t> touched;
        for (;;) {
            if (iterations_ >= opt_.max_iterations) return SimplexStatus::IterationLimit;
            if (since_refactor_ >= opt_.refactor_period) {
                refactor();
                compute_primal();
                load_phase_costs(false);
                compute_duals();
            }

            // leaving row: largest squared infeasibility over the squared norm of
            // its row of B^{-1} (dual steepest edge, exact since B^{-1} is explicit)
            std::size_t p = kNone;
            double best_score = 0.0;
            for (std::size_t q = 0; q < R_; ++q) {
                const std::size_t v = head_[q];
                const double viol = std::max(lo_[v] - x_[v], x_[v] - hi_[v]);
                if (viol <= opt_.primal_tol) continue;
                const double score = viol * viol / std::max(row_norm_[q], 1e-12);
                if (score > best_score) {
                    best_score = score;
                    p = q;
                }
            }
            if (p == kNone) {
                // confirm against a fresh solve of the basic values
                compute_primal();
                bool clean = true;
                for (std::size_t q = 0; q < R_ && clean; ++q) {
                    const std::size_t v = head_[q];
                    clean = std::max(lo_[v] - x_[v], x_[v] - hi_[v]) <= opt_.primal_tol;
                }
                if (clean) break;
                continue;
            }

            const std::size_t leave = head_[p];
            const bool to_lower = x_[leave] < lo_[leave];
            const double* brow = &binv_[p * R_];
            compute_pivot_row(brow, arow, touched);
            // pass 1: Harris bound on the dual step
            double bound = std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::size_t j : touched) {
                const double a = arow[j];
                if (pos_[j] != kNonbasic || lo_[j] == hi_[j] || std::abs(a) <= opt_.pivot_tol) continue;
                const bool free = !std::isfinite(lo_[j]) && !std::isfinite(hi_[j]);
                const bool up_ok = free || !at_upper_[j];
                const bool down_ok = free || at_upper_[j];
                // x_leave changes by -a * dx_j
                const bool ok = to_lower ? ((up_ok && a < 0) || (down_ok && a > 0))
                                         : ((up_ok && a > 0) || (down_ok && a < 0));
                if (!ok) continue;
                any = true;
                bound = std::min(bound, (std::max(feasible_d(j), 0.0) + opt_.dual_tol) / std::abs(a));
            }
            if (!any) return SimplexStatus::Infeasible;
            // pass 2: largest pivot among ratios within the bound
            std::size_t enter = kNone;
            double best_a = 0.0;
            for (std::size_t j : touched) {
                const double a = arow[j];
                if (pos_[j] != kNonbasic || lo_[j] == hi_[j] || std::abs(a) <= opt_.pivot_tol) continue;
                const bool free = !std::isfinite(lo_[j]) && !std::isfinite(hi_[j]);
                const bool up_ok = free || !at_upper_[j];
                const bool down_ok = free || at_upper_[j];
                const bool ok = to_lower ? ((up_ok && a < 0) || (down_ok && a > 0))
                                         : ((up_ok && a > 0) || (down_ok && a < 0));
                if (!ok || std::max(feasible_d(j), 0.0) / std::abs(a) > bound) continue;
                if (std::abs(a) > best_a) {
                    best_a = std::abs(a);
                    enter = j;
                }
            }
            ++iterations_;
            ftran(enter);

            // primal step: the leaving variable lands on its violated bound
            const double target = to_lower ? lo_[leave] : hi_[leave];
            const double step = (x_[leave] - target) / alpha_[p];
            for (std::size_t q = 0; q < R_; ++q) x_[head_[q]] -= step * alpha_[q];
            x_[enter] += step;
            x_[leave] = target;
            // dual step
            // a slightly wrong-signed d_enter is treated as zero
            const double dstep = feasible_d(enter) > 0.0 ? d_[enter] / arow[enter] : 0.0;
            for (std::size_t j : touched)
                if (pos_[j] == kNonbasic) d_[j] -= dstep * arow[j];
            d_[enter] = 0.0;
            d_[leave] = -dstep;

            pivot(p, enter, !to_lower);
        }
        // Drift can leave a few reduced costs slightly wrong; finish with primal.
        load_phase_costs(false);
        compute_duals();
        for (std::size_t j = 0; j < N_ + R_; ++j) {
            if (pos_[j] != kNonbasic || lo_[j] == hi_[j]) continue;
            if ((!at_upper_[j] && d_[j] < -10 * opt_.dual_tol && x_[j] < hi_[j]) ||
                (at_upper_[j] && d_[j] > 10 * opt_.dual_tol && x_[j] > lo_[j]))
                return primal_loop();
        }
        return SimplexStatus::Optimal;
    }

public:
    void set_bounds(std::size_t j, double lo, double hi) {
        if (lo > hi) throw InputError("simplex: empty bound interval");
        lo_[j] = lo;
        hi_[j] = hi;
    }
    double lower(std::size_t j) const noexcept { return lo_[j]; }
    double upper(std::size_t j) const noexcept { return hi_[j]; }

    Basis basis() const { return {head_, at_upper_}; }

    void set_basis(const Basis& b) {
        if (b.head.size() != R_ || b.at_upper.size() != N_ + R_)
            throw InputError("simplex: basis has wrong shape");
        if (b.head == head_) {
            at_upper_ = b.at_upper;
            return;
        }
        head_ = b.head;
        at_upper_ = b.at_upper;
        std::fill(pos_.begin(), pos_.end(), kNonbasic);
        for (std::size_t p = 0; p < R_; ++p) pos_[head_[p]] = p;
        refactor();
    }

    /// Structural values of the current basic solution.
    std::vector<double> values() {
        place_nonbasics();
        compute_primal();
        return {x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(N_)};
    }

    double objective() {
        place_nonbasics();
        compute_primal();
        double v = 0.0;
        for (std::size_t j = 0; j < N_; ++j) v += cost_[j] * x_[j];
        return v;
    }

    /// Row duals y with d = c - A'y for the phase-2 costs.
    std::vector<double> duals() {
        load_phase_costs(false);
        compute_duals();
        return y_;
    }

    bool is_basic(std::size_t j) const noexcept { return pos_[j] != kNonbasic; }

private:
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    static constexpr std::size_t kNonbasic = static_cast<std::size_t>(-1);

    struct Step {
        std::size_t pos = kNone;
        double theta = 0.0;
        bool leave_upper = false;
    };

    double nonbasic_value(std::size_t j) const noexcept {
        if (at_upper_[j] && std::isfinite(hi_[j])) return hi_[j];
        if (std::isfinite(lo_[j])) return lo_[j];
        if (std::isfinite(hi_[j])) return hi_[j];
        return 0.0;
    }

    void place_nonbasics() {
        for (std::size_t j = 0; j < N_ + R_; ++j) {
            if (pos_[j] != kNonbasic) continue;
            if (at_upper_[j] && !std::isfinite(hi_[j])) at_upper_[j] = 0;
            if (!at_upper_[j] && !std::isfinite(lo_[j]) && std::isfinite(hi_[j])) at_upper_[j] = 1;
            x_[j] = nonbasic_value(j);
        }
    }

    // x_B = -B^{-1} N x_N
    void compute_primal() {
        std::fill(rhs_.begin(), rhs_.end(), 0.0);
        for (std::size_t j = 0; j < N_; ++j) {
            if (pos_[j] != kNonbasic) continue;
            const double v = x_[j] = nonbasic_value(j);
            if (v == 0.0) continue;
            for (std::size_t q = a_.start[j]; q < a_.start[j + 1]; ++q) rhs_[a_.row[q]] -= a_.value[q] * v;
        }
        for (std::size_t r = 0; r < R_; ++r) {
            const std::size_t j = N_ + r;
            if (pos_[j] != kNonbasic) continue;
            rhs_[r] += x_[j] = nonbasic_value(j);
        }
        for (std::size_t p = 0; p < R_; ++p) {
            const double* b = &binv_[p * R_];
            double s = 0.0;
            for (std::size_t r = 0; r < R_; ++r) s += b[r] * rhs_[r];
            x_[head_[p]] = s;
        }
    }

    /// Fill cb_ with phase costs of basic variables; returns total infeasibility
    /// in phase 1 (0 when every basic is within tolerance).
    double load_phase_costs(bool phase_one) {
        double total = 0.0;
        phase_one_ = phase_one;
        for (std::size_t p = 0; p < R_; ++p) {
            const std::size_t v = head_[p];
            if (!phase_one) {
                cb_[p] = cost_[v];
                continue;
            }
            if (x_[v] < lo_[v] - opt_.primal_tol) {
                cb_[p] = -1.0;
                total += lo_[v] - x_[v];
            } else if (x_[v] > hi_[v] + opt_.primal_tol) {
                cb_[p] = 1.0;
                total += x_[v] - hi_[v];
            } else {
                cb_[p] = 0.0;
            }
        }
        return total;
    }

    // y' = cb' B^{-1};  d_j = c_j - y' a_j
    void compute_duals() {
        std::fill(y_.begin(), y_.end(), 0.0);
        for (std::size_t p = 0; p < R_; ++p) {
            if (cb_[p] == 0.0) continue;
            const double* b = &binv_[p * R_];
            for (std::size_t r = 0; r < R_; ++r) y_[r] += cb_[p] * b[r];
        }
        for (std::size_t j = 0; j < N_; ++j) {
            if (pos_[j] != kNonbasic) {
                d_[j] = 0.0;
                continue;
            }
            double s = phase_one_ ? 0.0 : cost_[j];
            for (std::size_t q = a_.start[j]; q < a_.start[j + 1]; ++q) s -= y_[a_.row[q]] * a_.value[q];
            d_[j] = s;
        }
        for (std::size_t r = 0; r < R_; ++r) {
            const std::size_t j = N_ + r;
            d_[j] = pos_[j] != kNonbasic ? 0.0 : (phase_one_ ? 0.0 : cost_[j]) + y_[r];
        }
    }

    std::pair<std::size_t, int> price() const {
        std::size_t best = kNone;
        int dir = 0;
        double best_score = 0.0;
        for (std::size_t j = 0; j < N_ + R_; ++j) {
            if (pos_[j] != kNonbasic || lo_[j] == hi_[j]) continue;
            const double dj = d_[j];
            const bool can_up = x_[j] < hi_[j];
            const bool can_down = x_[j] > lo_[j];
            int dj_dir = 0;
            if (can_up && dj < -opt_.dual_tol) dj_dir = 1;
            else if (can_down && dj > opt_.dual_tol) dj_dir = -1;
            if (dj_dir == 0) continue;
            if (bland_) return {j, dj_dir};
            if (std::abs(dj) > best_score) {
                best_score = std::abs(dj);
                best = j;
                dir = dj_dir;
            }
        }
        return {best, dir};
    }

    // alpha = B^{-1} a_j
    void ftran(std::size_t j) {
        if (j < N_) {
            std::fill(alpha_.begin(), alpha_.end(), 0.0);
            for (std::size_t q = a_.start[j]; q < a_.start[j + 1]; ++q) {
                const std::size_t r = a_.row[q];
                const double v = a_.value[q];
                for (std::size_t p = 0; p < R_; ++p) alpha_[p] += binv_[p * R_ + r] * v;
            }
        } else {
            const std::size_t r = j - N_;
            for (std::size_t p = 0; p < R_; ++p) alpha_[p] = -binv_[p * R_ + r];
        }
    }

    /// Reduced cost measured in the direction the nonbasic variable may move;
    /// nonnegative when dual feasible.
    double feasible_d(std::size_t j) const noexcept {
        const bool free = !std::isfinite(lo_[j]) && !std::isfinite(hi_[j]);
        if (free) return -std::abs(d_[j]);
        return at_upper_[j] ? -d_[j] : d_[j];
    }

    /// arow[j] = (row of B^{-1}) . a_j for every column touched by the row's
    /// nonzeros; `touched` lists those columns. Entries outside it are zero.
    void compute_pivot_row(const double* brow, std::vector<double>& arow,
                           std::vector<std::size_t>& touched) {
        for (std::size_t j : touched) arow[j] = 0.0;
        touched.clear();
        for (std::size_t r = 0; r < R_; ++r) {
            const double b = brow[r];
            if (b == 0.0) continue;
            for (std::size_t q = row_start_[r]; q < row_start_[r + 1]; ++q) {
                const std::size_t j = row_col_[q];
                if (arow[j] == 0.0) touched.push_back(j);
                arow[j] += b * row_val_[q];
                if (arow[j] == 0.0) arow[j] = 1e-300;  // keep it marked as touched
            }
            const std::size_t lj = N_ + r;
            if (arow[lj] == 0.0) touched.push_back(lj);
            arow[lj] -= b;
            if (arow[lj] == 0.0) arow[lj] = 1e-300;
        }
    }

    double row_entry(const double* brow, std::size_t j) const noexcept {
        if (j >= N_) return -brow[j - N_];
        double s = 0.0;
        for (std::size_t q = a_.start[j]; q < a_.start[j + 1]; ++q) s += brow[a_.row[q]] * a_.value[q];
        return s;
    }

    // Basic x_p moves at rate delta_p = -dir * alpha_p per unit step.
    Step ratio_phase_two(int dir) const {
        const double tol = opt_.primal_tol;
        double bound = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < R_; ++p) {
            const double delta = -dir * alpha_[p];
            if (std::abs(alpha_[p]) <= opt_.pivot_tol) continue;
            const std::size_t v = head_[p];
            if (delta < 0 && std::isfinite(lo_[v])) bound = std::min(bound, (x_[v] - lo_[v] + tol) / -delta);
            if (delta > 0 && std::isfinite(hi_[v])) bound = std::min(bound, (hi_[v] - x_[v] + tol) / delta);
        }
        Step s;
        if (!std::isfinite(bound)) return s;
        double best_a = 0.0;
        std::size_t best_var = kNone;
        for (std::size_t p = 0; p < R_; ++p) {
            const double delta = -dir * alpha_[p];
            if (std::abs(alpha_[p]) <= opt_.pivot_tol) continue;
            const std::size_t v = head_[p];
            double ratio;
            bool up;
            if (delta < 0 && std::isfinite(lo_[v])) {
                ratio = (x_[v] - lo_[v]) / -delta;
                up = false;
            } else if (delta > 0 && std::isfinite(hi_[v])) {
                ratio = (hi_[v] - x_[v]) / delta;
                up = true;
            } else {
                continue;
            }
            if (ratio > bound) continue;
            ratio = std::max(ratio, 0.0);
            const bool better = bland_ ? (s.pos == kNone || ratio < s.theta ||
                                          (ratio == s.theta && v < best_var))
                                       : std::abs(alpha_[p]) > best_a;
            if (better) {
                best_a = std::abs(alpha_[p]);
                best_var = v;
                s = {p, ratio, up};
            }
        }
        return s;
    }

    // First breakpoint of the piecewise-linear infeasibility along the ray.
    Step ratio_phase_one(int dir) const {
        const double tol = opt_.primal_tol;
        Step s;
        double best = std::numeric_limits<double>::infinity();
        double best_a = 0.0;
        for (std::size_t p = 0; p < R_; ++p) {
            if (std::abs(alpha_[p]) <= opt_.pivot_tol) continue;
            const double delta = -dir * alpha_[p];
            const std::size_t v = head_[p];
            const bool below = x_[v] < lo_[v] - tol;
            const bool above = x_[v] > hi_[v] + tol;
            double ratio;
            bool up;
            if (below) {
                if (delta <= 0) continue;
                ratio = (lo_[v] - x_[v]) / delta;
                up = false;
            } else if (above) {
                if (delta >= 0) continue;
                ratio = (x_[v] - hi_[v]) / -delta;
                up = true;
            } else if (delta < 0 && std::isfinite(lo_[v])) {
                ratio = std::max(0.0, (x_[v] - lo_[v]) / -delta);
                up = false;
            } else if (delta > 0 && std::isfinite(hi_[v])) {
                ratio = std::max(0.0, (hi_[v] - x_[v]) / delta);
                up = true;
            } else {
                continue;
            }
            const bool better = ratio < best - 1e-12 ||
                                (ratio <= best + 1e-12 && std::abs(alpha_[p]) > best_a);
            if (better) {
                best = std::min(best, ratio);
                best_a = std::abs(alpha_[p]);
                s = {p, ratio, up};
            }
        }
        return s;
    }

    void pivot(std::size_t p, std::size_t enter, bool leave_upper) {
        const std::size_t leave = head_[p];
        const double piv = alpha_[p];
        if (std::abs(piv) < 1e-13) throw NumericalError("simplex: vanishing pivot");
        double* prow = &binv_[p * R_];
        nz_.clear();
        for (std::size_t r = 0; r < R_; ++r)
            if (prow[r] != 0.0) {
                prow[r] /= piv;
                nz_.push_back(r);
            }
        row_norm_[p] = 0.0;
        for (std::size_t r : nz_) row_norm_[p] += prow[r] * prow[r];
        for (std::size_t q = 0; q < R_; ++q) {
            if (q == p || alpha_[q] == 0.0) continue;
            const double f = alpha_[q];
            double* qrow = &binv_[q * R_];
            for (std::size_t r : nz_) qrow[r] -= f * prow[r];
            double norm = 0.0;
            for (std::size_t r = 0; r < R_; ++r) norm += qrow[r] * qrow[r];
            row_norm_[q] = norm;
        }
        head_[p] = enter;
        pos_[enter] = p;
        pos_[leave] = kNonbasic;
        at_upper_[leave] = leave_upper;
        ++since_refactor_;
    }

    /// Recompute B^{-1} from scratch by Gauss-Jordan with partial pivoting.
    void refactor() {
        std::vector<double> b(R_ * R_, 0.0);
        for (std::size_t p = 0; p < R_; ++p) {
            const std::size_t j = head_[p];
            if (j < N_) {
                for (std::size_t q = a_.start[j]; q < a_.start[j + 1]; ++q) b[a_.row[q] * R_ + p] = a_.value[q];
            } else {
                b[(j - N_) * R_ + p] = -1.0;
            }
        }
        std::fill(binv_.begin(), binv_.end(), 0.0);
        for (std::size_t r = 0; r < R_; ++r) binv_[r * R_ + r] = 1.0;
        // reduce [B | I] -> [I | B^{-1}] with rows of b indexed by constraint row
        std::vector<std::size_t> nzi;
        for (std::size_t c = 0; c < R_; ++c) {
            std::size_t piv = c;
            double best = std::abs(b[c * R_ + c]);
            for (std::size_t r = c + 1; r < R_; ++r)
                if (std::abs(b[r * R_ + c]) > best) {
                    best = std::abs(b[r * R_ + c]);
                    piv = r;
                }
            if (best < 1e-12) throw NumericalError("simplex: singular basis on refactorisation");
            if (piv != c) {
                std::swap_ranges(b.begin() + static_cast<std::ptrdiff_t>(c * R_),
                                 b.begin() + static_cast<std::ptrdiff_t>((c + 1) * R_),
                                 b.begin() + static_cast<std::ptrdiff_t>(piv * R_));
                std::swap_ranges(binv_.begin() + static_cast<std::ptrdiff_t>(c * R_),
                                 binv_.begin() + static_cast<std::ptrdiff_t>((c + 1) * R_),
                                 binv_.begin() + static_cast<std::ptrdiff_t>(piv * R_));
            }
            const double inv = 1.0 / b[c * R_ + c];
            nz_.clear();
            nzi.clear();
            for (std::size_t k = 0; k < R_; ++k) {
                if (b[c * R_ + k] != 0.0) {
                    b[c * R_ + k] *= inv;
                    nz_.push_back(k);
                }
                if (binv_[c * R_ + k] != 0.0) {
                    binv_[c * R_ + k] *= inv;
                    nzi.push_back(k);
                }
            }
            for (std::size_t r = 0; r < R_; ++r) {
                if (r == c) continue;
                const double f = b[r * R_ + c];
                if (f == 0.0) continue;
                for (std::size_t k : nz_) b[r * R_ + k] -= f * b[c * R_ + k];
                for (std::size_t k : nzi) binv_[r * R_ + k] -= f * binv_[c * R_ + k];
            }
        }
        // After elimination row c of binv_ belongs to basis column c, matching
        // the position-major layout used everywhere else.
        for (std::size_t q = 0; q < R_; ++q) {
            double norm = 0.0;
            for (std::size_t r = 0; r < R_; ++r) norm += binv_[q * R_ + r] * binv_[q * R_ + r];
            row_norm_[q] = norm;
        }
        since_refactor_ = 0;
    }

    SparseColumns a_;
    std::vector<std::size_t> row_start_, row_col_;
    std::vector<double> row_val_;
    std::vector<double> row_norm_;  // squared norms of the rows of B^{-1}
    std::vector<std::size_t> nz_;
    SimplexOptions opt_;
    std::size_t R_ = 0, N_ = 0;
    std::vector<double> cost_, lo_, hi_;
    std::vector<std::size_t> head_, pos_;
    std::vector<char> at_upper_;
    std::vector<double> x_, binv_, y_, d_, alpha_, rhs_, cb_;
    long iterations_ = 0;
    int since_refactor_ = 0;
    bool bland_ = false;
    bool phase_one_ = false;
};

} // namespace fairalloc::lp
