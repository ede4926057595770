// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "fd_check.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace fairalloc;
using namespace fairalloc::testing;
namespace fs = std::filesystem;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

int failures = 0;

void report(const char* id, const char* name, bool pass, const std::string& detail) {
    std::printf("%s %s %s: %s\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

std::string fmt(const char* f, double a) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

void run(const char* id, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = clock_type::now();
    try {
        auto [pass, detail] = body();
        report(id, name, pass, detail + fmt(" [%.1fs]", seconds_since(t0)));
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

SimRecData simrec(std::size_t m, std::size_t n, std::uint64_t seed, ItemOrder order = ItemOrder::Shared) {
    SimRecConfig c;
    c.m = m;
    c.n = n;
    c.seed = seed;
    c.item_order = order;
    return gen_simrec(c);
}

Instance instance_of(const SimRecData& d) { return Instance{d.rho, d.groups, std::nullopt}; }

FairnessParams params(Objective obj, int k, double gamma, double alpha = 0.0) {
    FairnessParams p;
    p.objective = obj;
    p.k = k;
    p.gamma = gamma;
    p.alpha = alpha;
    return p;
}

// Oracle equivalence on tiny instances over every objective and gamma.
std::pair<bool, std::string> p1() {
    const auto t0 = clock_type::now();
    int checked = 0, mismatched = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        rng::Stream s(rng::substream(seed, std::uint64_t{0x5031}));
        const std::size_t m = 1 + s.below(3), n = 1 + s.below(4);
        const int k = 1 + static_cast<int>(s.below(std::min<std::size_t>(2, n)));
        const auto inst = random_instance(seed, m, n, 1 + s.below(m));
        for (double gamma : {0.0, 0.5, 1.0})
            for (auto obj : {Objective::Mean, Objective::MaxMin, Objective::CVaR}) {
                const auto p = params(obj, k, gamma, 0.5);
                const double want = brute_force_solve(inst, p).best_objective;
                const double got = solve_exact(inst, p).objective_value;
                worst = std::max(worst, std::abs(want - got));
                mismatched += std::abs(want - got) > 1e-9;
                ++checked;
            }
    }
    const double secs = seconds_since(t0);
    return {mismatched == 0 && secs < 120.0,
            std::to_string(checked) + " solves, max |exact - brute| = " + fmt("%.2e", worst) + fmt(", %.1fs", secs)};
}

long brute_max_min_exposure(int m, int n, int k) {
    const auto subsets = fairalloc::detail::k_subsets(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
    long best = -1;
    std::vector<long> col(static_cast<std::size_t>(n));
    std::function<void(int)> rec = [&](int i) {
        if (i == m) {
            best = std::max(best, *std::min_element(col.begin(), col.end()));
            return;
        }
        for (const auto& sub : subsets) {
            for (auto j : sub) ++col[j];
            rec(i + 1);
            for (auto j : sub) --col[j];
        }
    };
    rec(0);
    return best;
}

std::pair<bool, std::string> p2() {
    int cases = 0, bad = 0;
    for (int m = 1; m <= 5; ++m)
        for (int n = 1; n <= 4; ++n)
            for (int k = 1; k <= std::min(3, n); ++k) {
                ++cases;
                bad += producer_fairness_baseline(m, n, k) != brute_max_min_exposure(m, n, k);
            }
    return {bad == 0, std::to_string(cases) + " (m,n,k) cases, " + std::to_string(bad) + " mismatches"};
}

std::pair<bool, std::string> p3() {
    double worst_frac = 0.0, worst_gap = 0.0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        rng::Stream s(rng::substream(seed, std::uint64_t{0x5033}));
        const std::size_t m = 10 + s.below(31), n = 5 + s.below(36);
        const int k = 1 + static_cast<int>(s.below(std::min<std::size_t>(5, n)));
        const double gamma = 0.25 * static_cast<double>(s.below(5));
        const auto inst = random_instance(seed, m, n);
        const auto p = params(Objective::Mean, k, gamma);
        const auto f = solve_lp(build_program(inst, p, Integrality::Relaxed));
        const auto e = solve_exact(inst, p);
        worst_frac = std::max(worst_frac, max_fractionality(f.weights));
        worst_gap = std::max(worst_gap, std::abs(f.objective - e.objective_value));
    }
    return {worst_frac <= 1e-6 && worst_gap <= 1e-8,
            "max fractional deviation " + fmt("%.2e", worst_frac) + ", max |lp - exact| " + fmt("%.2e", worst_gap)};
}

double mean_utility_exact(const Instance& inst, const FairnessParams& p) { return solve_exact(inst, p).mean_utility(); }

std::pair<bool, std::string> p4() {
    const auto inst = instance_of(simrec(200, 10, 1, ItemOrder::PerConsumer));
    const double u0 = mean_utility_exact(inst, params(Objective::Mean, 1, 0.0));
    const double u1 = mean_utility_exact(inst, params(Objective::Mean, 1, 1.0));
    const double rel = (u0 - u1) / u0;
    const auto shared = instance_of(simrec(200, 10, 1, ItemOrder::Shared));
    const double s0 = mean_utility_exact(shared, params(Objective::Mean, 1, 0.0));
    const double s1 = mean_utility_exact(shared, params(Objective::Mean, 1, 1.0));
    std::printf("   info: shared item order gives gamma=0 %.4f, gamma=1 %.4f, drop %.2f%%\n", s0, s1,
                100.0 * (s0 - s1) / s0);
    return {std::abs(rel) <= 0.02, fmt("per-consumer item order: gamma=0 %.4f", u0) + fmt(", gamma=1 %.4f", u1) +
                                       fmt(", relative drop %.2f%%", 100.0 * rel)};
}

std::pair<bool, std::string> p5() {
    const auto inst = instance_of(simrec(200, 100, 1));
    std::vector<double> u;
    std::string detail = "utility over gamma {0,.25,.5,.75,1}:";
    for (double g : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        u.push_back(mean_utility_exact(inst, params(Objective::Mean, 10, g)));
        detail += fmt(" %.4f", u.back());
    }
    bool monotone = true;
    for (std::size_t i = 1; i < u.size(); ++i) monotone = monotone && u[i] <= u[i - 1] + 1e-6;
    const double drop = (u.front() - u.back()) / u.front();
    return {monotone && drop >= 0.05, detail + fmt(", drop %.2f%%", 100.0 * drop)};
}

std::pair<bool, std::string> p6() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto inst = random_instance(seed, 12, 6, 3);  // round robin: three groups of four
        const double cvar = solve_exact(inst, params(Objective::CVaR, 2, 0.5, 0.0)).objective_value;
        const double mean = solve_exact(inst, params(Objective::Mean, 2, 0.5)).objective_value;
        worst = std::max(worst, std::abs(cvar - (1.0 - mean)));
    }
    return {worst <= 1e-8, "max |CVaR(alpha=0) - mean loss| = " + fmt("%.2e", worst) + " over 20 instances"};
}

std::pair<bool, std::string> p7() {
    int wins = 0;
    BnBLimits lim;
    lim.time_cap_seconds = 20.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto inst = instance_of(simrec(300, 100, seed));
        const auto mean = solve_exact(inst, params(Objective::Mean, 5, 0.5), lim);
        const auto cvar = solve_exact(inst, params(Objective::CVaR, 5, 0.5, 0.95), lim);
        wins += cvar.group_variance <= mean.group_variance;
    }
    return {wins >= 16, std::to_string(wins) + "/20 seeds with CVaR variance <= Mean variance"};
}

std::pair<bool, std::string> p8() {
    double hard_under = 0, hard_over = 0, prob_under = 0, prob_over = 0;
    bool topk_clean = true, finite = true;
    int count = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto inst = instance_of(simrec(60, 40, seed));
        const auto p = params(Objective::CVaR, 5, 0.5, 0.95);
        std::vector<Matrix> fractional{solve_lp(build_program(inst, p, Integrality::Relaxed)).weights};
        GradConfig c;
        c.iterations = 1000;
        c.seed = seed;
        fractional.push_back(solve_auglag(inst, p, c).solution.weights);
        fractional.push_back(solve_scgrad(inst, p, c).solution.weights);
        for (const auto& w : fractional) {
            const auto t = assemble_result(inst, p, round_topk(w, 5), {}).violations;
            topk_clean = topk_clean && t.under_alloc_pct == 0.0 && t.over_alloc_pct == 0.0;
            const auto h = assemble_result(inst, p, round_hard(w), {}).violations;
            hard_under += h.under_alloc_pct;
            hard_over += h.over_alloc_pct;
            for (const auto& a : round_prob(w, seed)) {
                const auto v = assemble_result(inst, p, a, {}).violations;
                prob_under += v.under_alloc_pct / kDefaultRoundingSamples;
                prob_over += v.over_alloc_pct / kDefaultRoundingSamples;
            }
            ++count;
        }
    }
    for (double x : {hard_under, hard_over, prob_under, prob_over}) finite = finite && std::isfinite(x);
    return {topk_clean && finite,
            std::to_string(count) + " fractional solutions; topk 0/0; hard under/over " +
                fmt("%.2f%%", hard_under / count) + fmt("/%.2f%%", hard_over / count) + "; prob under/over " +
                fmt("%.2f%%", prob_under / count) + fmt("/%.2f%%", prob_over / count)};
}

std::pair<bool, std::string> p9() {
    const auto t0 = clock_type::now();
    double worst_aug = 0.0, worst_sc = 0.0, sum_base = 0, sum_aug = 0, sum_sc = 0;
    BnBLimits lim;
    lim.time_cap_seconds = 30.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto inst = instance_of(simrec(100, 100, seed));
        const auto p = params(Objective::CVaR, 10, 0.5, 0.95);
        const double base = solve_exact(inst, p, lim).mean_utility();
        GradConfig c;
        c.seed = seed;
        const double aug = assemble_result(inst, p, round_topk(solve_auglag(inst, p, c).solution.weights, 10), {})
                               .mean_utility();
        const double sc = assemble_result(inst, p, round_topk(solve_scgrad(inst, p, c).solution.weights, 10), {})
                              .mean_utility();
        worst_aug = std::max(worst_aug, std::abs(aug - base));
        worst_sc = std::max(worst_sc, std::abs(sc - base));
        sum_base += base;
        sum_aug += aug;
        sum_sc += sc;
    }
    const double secs = seconds_since(t0);
    const bool aug_ok = worst_aug <= 0.03, sc_ok = worst_sc <= 0.05;
    std::printf("   info: mean utility baseline %.4f, AugLag+TopK %.4f, SCGrad+TopK %.4f\n", sum_base / 10,
                sum_aug / 10, sum_sc / 10);
    return {aug_ok && sc_ok && secs < 600.0,
            fmt("AugLag max |diff| %.4f", worst_aug) + (aug_ok ? " (ok)" : " (over 0.03)") +
                fmt(", SCGrad max |diff| %.4f", worst_sc) + (sc_ok ? " (ok)" : " (over 0.05)") +
                fmt(", %.0fs", secs)};
}

std::pair<bool, std::string> p10() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) worst = std::max(worst, check_loss_gradients(seed).worst());
    return {worst <= 1e-4, "max relative error " + fmt("%.2e", worst) + " over util, tau, card, prod, bin terms"};
}

std::pair<bool, std::string> p11() {
    bool conserved = true;
    double str0 = 0.0, str1 = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto inst = instance_of(simrec(300, 100, seed));
        for (double g : {0.0, 1.0}) {
            const auto r = solve_exact(inst, params(Objective::Mean, 5, g));
            const auto log = simulate_purchases(inst.rho, r.allocation, 5, nullptr, seed, ConsumerOrder::Shuffled);
            conserved = conserved && log.purchases <= std::min<std::size_t>(300 * 5, 100);
            (g == 0.0 ? str0 : str1) += sell_through_rate(log, 100) / 20.0;
        }
    }
    return {conserved && str1 >= str0,
            std::string(conserved ? "conservation holds" : "conservation violated") +
                fmt("; mean STR gamma=0 %.4f", str0) + fmt(", gamma=1 %.4f", str1)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::pair<bool, std::string> p12() {
    const fs::path root = fs::temp_directory_path() / "fairalloc_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "config.json";
    std::ofstream(cfg) << R"({
  "dataset": {"simrec": {"m": 60, "n": 30, "groups": 4}, "values": "inverse_popularity", "values_k": 3},
  "solver": "lp+prob",
  "exact": {"node_cap": 200, "time_cap_seconds": 1000},
  "grad": {"iterations": 200},
  "grid": {"objective": ["mean", "cvar"], "gamma": [0, 0.5, 1], "alpha": [0.9], "theta": [0, 0.3], "k": [3]},
  "seeds": [1, 2],
  "workers": 2,
  "bench": {"sizes": [10, 20], "solvers": ["exact", "lp+topk", "auglag+topk", "scgrad+topk"], "repeats": 1, "k": 3}
})";
    const std::string cli = FAIRALLOC_CLI;
    std::vector<std::string> identical, differing;
    for (const std::string cmd : {"gen", "solve", "sweep", "simulate", "bench"}) {
        const auto a = root / (cmd + "_a"), b = root / (cmd + "_b");
        const std::string first = cli + " " + cmd + " --config " + cfg.string() + " --out " + a.string() + " 2>/dev/null";
        const std::string second = cli + " " + cmd + " --config " + (a / "manifest.json").string() + " --out " +
                                   b.string() + " --workers 1 2>/dev/null";
        const int r1 = std::system(first.c_str()), r2 = std::system(second.c_str());
        if (r1 != r2 || !fs::exists(a / "manifest.json")) {
            differing.push_back(cmd + " (exit status)");
            continue;
        }
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(a)) {
            const auto name = e.path().filename().string();
            // solve reports through result.json, which carries no timing fields
            const bool report = e.path().extension() == ".csv" || name == "result.json";
            if (!report || name.find("_timing") != std::string::npos) continue;
            ++files;
            if (slurp(e.path()) == slurp(b / name)) identical.push_back(cmd + "/" + name);
            else differing.push_back(cmd + "/" + name);
        }
        if (files == 0) differing.push_back(cmd + " (no output)");
    }
    std::string detail = std::to_string(identical.size()) + " outputs byte-identical on rerun";
    for (const auto& d : differing) detail += "; differs: " + d;
    return {differing.empty() && !identical.empty(), detail};
}

} // namespace

int main() {
    run("P1", "oracle equivalence", p1);
    run("P2", "producer baseline", p2);
    run("P3", "LP integrality", p3);
    run("P4", "free fairness at k=1", p4);
    run("P5", "fairness cost at k>1", p5);
    run("P6", "CVaR degeneracy", p6);
    run("P7", "group-variance compression", p7);
    run("P8", "rounding feasibility", p8);
    run("P9", "gradient solver quality", p9);
    run("P10", "gradient correctness", p10);
    run("P11", "market-sim conservation and direction", p11);
    run("P12", "determinism", p12);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
