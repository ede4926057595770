#pragma once

// Experiment configuration, solver dispatch and the gen/solve/sweep/simulate/
// bench drivers behind the command-line tool. Every CSV carries a
// "# config_hash=... seeds=..." line; wall-clock columns live in *_timing.csv
// sidecars so the primary CSVs are byte-identical across reruns.

#include "fairalloc/datagen.hpp"
#include "fairalloc/evaluate.hpp"
#include "fairalloc/exact.hpp"
#include "fairalloc/grad.hpp"
#include "fairalloc/lp.hpp"
#include "fairalloc/marketsim.hpp"
#include "fairalloc/program.hpp"
#include "fairalloc/svg.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fairalloc::experiment {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// "exact", "lp+topk", "auglag+prob", ... Rounding defaults to none.
struct SolverSpec {
    std::string name = "lp";
    Rounding rounding = Rounding::TopK;

    static SolverSpec parse(const std::string& s) {
        SolverSpec spec;
        const auto plus = s.find('+');
        spec.name = s.substr(0, plus);
        spec.rounding = plus == std::string::npos ? Rounding::None : rounding_from_string(s.substr(plus + 1));
        if (spec.name != "exact" && spec.name != "lp" && spec.name != "auglag" && spec.name != "scgrad")
            throw InputError("unknown solver '" + spec.name + "' (expected exact|lp|auglag|scgrad)");
        if (spec.name == "exact" && spec.rounding != Rounding::None)
            throw InputError("the exact solver returns binary allocations; drop the rounding suffix");
        return spec;
    }

    std::string str() const {
        return rounding == Rounding::None ? name : name + "+" + to_string(rounding);
    }
};

struct DatasetSpec {
    std::optional<SimRecConfig> simrec;  // generated per seed when set
    fs::path relevance, groups, values;  // file inputs otherwise
    std::string values_mode = "none";    // none | inverse_popularity | file
    int values_k = 10;
    std::string format = "csv";          // gen output: csv | raw
};

struct Grid {
    std::vector<Objective> objective{Objective::Mean};
    std::vector<double> gamma{0.0};
    std::vector<double> alpha{0.95};
    std::vector<double> theta{0.0};
    std::vector<int> k{10};
};

struct BenchSpec {
    std::vector<std::size_t> sizes{50, 100, 200};
    std::vector<SolverSpec> solvers;
    int repeats = 3;
    double gamma = 0.5;
    double alpha = 0.95;
    int k = 10;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    SolverSpec solver;
    BnBLimits exact;
    GradConfig grad;
    int rounding_samples = kDefaultRoundingSamples;
    Grid grid;
    std::vector<std::uint64_t> seeds{1};
    fs::path output_dir = "out";
    int workers = 1;
    ConsumerOrder consumer_order = ConsumerOrder::Shuffled;
    BenchSpec bench;
    json source;  // effective configuration as parsed

    /// FNV-1a of the canonical JSON dump, excluding output_dir and workers.
    std::string hash() const {
        json h = source;
        h.erase("output_dir");
        h.erase("workers");
        const std::string s = h.dump();
        std::uint64_t x = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            x ^= c;
            x *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
        return buf;
    }

    std::string seeds_str() const {
        std::string s;
        for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? ";" : "") + std::to_string(seeds[i]);
        return s;
    }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw InputError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw InputError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InputError(std::string("config key '") + key + "': " + e.what());
    }
}

template <typename T>
std::vector<T> list_or(const json& j, const char* key, std::vector<T> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    try {
        if (v.is_array()) return v.get<std::vector<T>>();
        return {v.get<T>()};
    } catch (const json::exception& e) {
        throw InputError(std::string("config key '") + key + "': " + e.what());
    }
}

inline SimRecConfig parse_simrec(const json& j) {
    check_keys(j, "dataset.simrec", {"m", "n", "groups", "zipf_exponent", "noise_sigma", "clip_low",
                                     "clip_high", "beta", "item_order", "seed"});
    SimRecConfig c;
    c.m = get_or<std::size_t>(j, "m", c.m);
    c.n = get_or<std::size_t>(j, "n", c.n);
    c.groups = get_or<std::size_t>(j, "groups", c.groups);
    c.zipf_exponent = get_or<double>(j, "zipf_exponent", c.zipf_exponent);
    c.noise_sigma = get_or<double>(j, "noise_sigma", c.noise_sigma);
    c.clip_low = get_or<double>(j, "clip_low", c.clip_low);
    c.clip_high = get_or<double>(j, "clip_high", c.clip_high);
    c.beta = get_or<std::vector<double>>(j, "beta", c.beta);
    const auto order = get_or<std::string>(j, "item_order", "shared");
    if (order == "shared") c.item_order = ItemOrder::Shared;
    else if (order == "per_consumer") c.item_order = ItemOrder::PerConsumer;
    else throw InputError("dataset.simrec.item_order must be shared|per_consumer");
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.validate();
    return c;
}

inline GradConfig parse_grad(const json& j) {
    check_keys(j, "grad", {"learning_rate", "iterations", "eta0", "anneal_rate", "eta_min", "lambda",
                           "dual_period", "dual_step", "card_weight", "prod_weight", "bin_weight",
                           "tolerance", "init_jitter", "init_top", "optimizer"});
    GradConfig g;
    g.learning_rate = get_or(j, "learning_rate", g.learning_rate);
    g.iterations = get_or(j, "iterations", g.iterations);
    g.eta0 = get_or(j, "eta0", g.eta0);
    g.anneal_rate = get_or(j, "anneal_rate", g.anneal_rate);
    g.eta_min = get_or(j, "eta_min", g.eta_min);
    g.lambda = get_or(j, "lambda", g.lambda);
    g.dual_period = get_or(j, "dual_period", g.dual_period);
    g.dual_step = get_or(j, "dual_step", 0.1 * g.lambda);
    g.card_weight = get_or(j, "card_weight", g.card_weight);
    g.prod_weight = get_or(j, "prod_weight", g.prod_weight);
    g.bin_weight = get_or(j, "bin_weight", g.bin_weight);
    g.tolerance = get_or(j, "tolerance", g.tolerance);
    g.init_jitter = get_or(j, "init_jitter", g.init_jitter);
    g.init_top = get_or(j, "init_top", g.init_top);
    const auto opt = get_or<std::string>(j, "optimizer", "adam");
    if (opt == "adam") g.optimizer = Optimizer::Adam;
    else if (opt == "plain") g.optimizer = Optimizer::Plain;
    else throw InputError("grad.optimizer must be adam|plain");
    g.validate();
    return g;
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    using namespace detail;
    check_keys(j, "config", {"dataset", "solver", "exact", "grad", "rounding_samples", "grid", "seeds",
                             "output_dir", "workers", "consumer_order", "bench", "config_hash", "command", "files"});
    ExperimentConfig c;
    c.source = j;
    for (const char* key : {"config_hash", "command", "files"}) c.source.erase(key);

    const json ds = j.value("dataset", json::object());
    check_keys(ds, "dataset", {"simrec", "relevance", "groups", "values", "values_k", "format"});
    if (ds.contains("relevance")) {
        c.dataset.relevance = ds.at("relevance").get<std::string>();
        if (ds.contains("simrec")) throw InputError("dataset: give either simrec or relevance, not both");
    } else {
        c.dataset.simrec = parse_simrec(ds.value("simrec", json::object()));
    }
    if (ds.contains("groups")) c.dataset.groups = ds.at("groups").get<std::string>();
    if (ds.contains("values")) {
        const auto v = ds.at("values").get<std::string>();
        if (v == "none" || v == "inverse_popularity") c.dataset.values_mode = v;
        else {
            c.dataset.values_mode = "file";
            c.dataset.values = v;
        }
    }
    c.dataset.values_k = get_or(ds, "values_k", c.dataset.values_k);
    c.dataset.format = get_or<std::string>(ds, "format", "csv");
    if (c.dataset.format != "csv" && c.dataset.format != "raw")
        throw InputError("dataset.format must be csv|raw");
    for (const auto& p : {c.dataset.relevance, c.dataset.groups, c.dataset.values})
        if (!p.empty() && !fs::exists(p)) throw InputError("dataset file not found: " + p.string());

    c.solver = SolverSpec::parse(get_or<std::string>(j, "solver", "lp+topk"));

    const json ex = j.value("exact", json::object());
    check_keys(ex, "exact", {"node_cap", "time_cap_seconds", "gap_tolerance"});
    c.exact.node_cap = get_or(ex, "node_cap", c.exact.node_cap);
    c.exact.time_cap_seconds = get_or(ex, "time_cap_seconds", c.exact.time_cap_seconds);
    c.exact.gap_tolerance = get_or(ex, "gap_tolerance", c.exact.gap_tolerance);
    if (c.exact.node_cap < 1 || !(c.exact.time_cap_seconds > 0.0) || !(c.exact.gap_tolerance >= 0.0))
        throw InputError("exact: caps must be positive and gap_tolerance >= 0");

    c.grad = parse_grad(j.value("grad", json::object()));
    c.rounding_samples = get_or(j, "rounding_samples", c.rounding_samples);
    if (c.rounding_samples < 1) throw InputError("rounding_samples must be >= 1");

    const json g = j.value("grid", json::object());
    check_keys(g, "grid", {"objective", "gamma", "alpha", "theta", "k"});
    c.grid.objective.clear();
    for (const auto& s : list_or<std::string>(g, "objective", {"mean"})) c.grid.objective.push_back(objective_from_string(s));
    c.grid.gamma = list_or(g, "gamma", c.grid.gamma);
    c.grid.alpha = list_or(g, "alpha", c.grid.alpha);
    c.grid.theta = list_or(g, "theta", c.grid.theta);
    c.grid.k = list_or(g, "k", c.grid.k);
    if (c.grid.objective.empty() || c.grid.gamma.empty() || c.grid.alpha.empty() || c.grid.theta.empty() ||
        c.grid.k.empty())
        throw InputError("grid: every axis needs at least one value");

    c.seeds = list_or(j, "seeds", c.seeds);
    if (c.seeds.empty()) throw InputError("seeds: need at least one seed");
    c.output_dir = get_or<std::string>(j, "output_dir", "out");
    c.workers = get_or(j, "workers", 1);
    if (c.workers < 1) throw InputError("workers must be >= 1");
    c.consumer_order = consumer_order_from_string(get_or<std::string>(j, "consumer_order", "shuffled"));

    const json b = j.value("bench", json::object());
    check_keys(b, "bench", {"sizes", "solvers", "repeats", "gamma", "alpha", "k"});
    c.bench.sizes = list_or(b, "sizes", c.bench.sizes);
    for (const auto& s : list_or<std::string>(b, "solvers", {"exact", "lp+topk", "auglag+topk", "scgrad+topk"}))
        c.bench.solvers.push_back(SolverSpec::parse(s));
    c.bench.repeats = get_or(b, "repeats", c.bench.repeats);
    c.bench.gamma = get_or(b, "gamma", c.bench.gamma);
    c.bench.alpha = get_or(b, "alpha", c.bench.alpha);
    c.bench.k = get_or(b, "k", c.bench.k);
    if (c.bench.sizes.empty() || c.bench.solvers.empty() || c.bench.repeats < 1)
        throw InputError("bench: sizes and solvers must be nonempty, repeats >= 1");
    return c;
}

inline json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
}

/// Apply "a.b.c=value"; the value is parsed as JSON when possible, else kept as a string.
inline void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("override must look like key.path=value");
    const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw InputError("override path has an empty component: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

// ---------------------------------------------------------------------------
// Instances and solver dispatch
// ---------------------------------------------------------------------------

/// The instance for replicate seed s: SimRec datasets are regenerated with seed s.
inline Instance make_instance(const ExperimentConfig& c, std::uint64_t seed) {
    Instance inst;
    if (c.dataset.simrec) {
        auto cfg = *c.dataset.simrec;
        cfg.seed = seed;
        auto d = gen_simrec(cfg);
        inst.rho = std::move(d.rho);
        inst.groups = std::move(d.groups);
    } else {
        inst.rho = load_relevance(c.dataset.relevance);
        if (!c.dataset.groups.empty()) inst.groups = load_groups(c.dataset.groups, inst.consumers());
    }
    if (c.dataset.values_mode == "inverse_popularity")
        inst.values = gen_values_inverse_popularity(inst.rho, c.dataset.values_k);
    else if (c.dataset.values_mode == "file")
        inst.values = load_values(c.dataset.values, inst.producers());
    inst.validate();
    return inst;
}

/// Mean and standard error of per-sample metrics under probabilistic rounding.
struct SampleSpread {
    int samples = 0;
    double mean_utility = 0.0, mean_utility_se = 0.0;
    double objective = 0.0, objective_se = 0.0;
    double under = 0.0, under_se = 0.0;
    double over = 0.0, over_se = 0.0;
    double producer = 0.0, producer_se = 0.0;
};

struct SolvedPoint {
    SolveResult result;
    std::optional<SampleSpread> spread;
    std::optional<GradTrace> trace;
    double seconds = 0.0;
};

inline std::pair<double, double> mean_se(const std::vector<double>& v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    if (v.size() < 2) return {mu, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return {mu, std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()))};
}

inline SolvedPoint finish_fractional(const Instance& inst, const FairnessParams& params, const Matrix& weights,
                                     Rounding rounding, std::uint64_t seed, int samples, SolverStats stats) {
    SolvedPoint out;
    stats.rounding = to_string(rounding);
    switch (rounding) {
    case Rounding::None: out.result = assemble_result(inst, params, Allocation(weights), std::move(stats)); break;
    case Rounding::Hard: out.result = assemble_result(inst, params, round_hard(weights), std::move(stats)); break;
    case Rounding::TopK:
        out.result = assemble_result(inst, params, round_topk(weights, params.k), std::move(stats));
        break;
    case Rounding::Prob: {
        auto draws = round_prob(weights, seed, samples);
        std::vector<double> u, o, under, over, prod;
        std::optional<SolveResult> first;
        for (auto& a : draws) {
            auto r = assemble_result(inst, params, std::move(a), stats);
            u.push_back(r.mean_utility());
            o.push_back(r.objective_value);
            under.push_back(r.violations.under_alloc_pct);
            over.push_back(r.violations.over_alloc_pct);
            prod.push_back(r.violations.producer_violation_pct);
            if (!first) first = std::move(r);
        }
        SampleSpread s;
        s.samples = samples;
        std::tie(s.mean_utility, s.mean_utility_se) = mean_se(u);
        std::tie(s.objective, s.objective_se) = mean_se(o);
        std::tie(s.under, s.under_se) = mean_se(under);
        std::tie(s.over, s.over_se) = mean_se(over);
        std::tie(s.producer, s.producer_se) = mean_se(prod);
        out.result = std::move(*first);
        out.spread = s;
        break;
    }
    }
    return out;
}

/// Run one solver on one instance. `seed` drives rounding and gradient initialisation.
inline SolvedPoint run_solver(const Instance& inst, const FairnessParams& params, const SolverSpec& spec,
                              const ExperimentConfig& c, std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    SolvedPoint out;
    if (params.theta > 0.0 && !inst.values) throw InputError("theta > 0 needs producer values");
    if (spec.name == "exact") {
        out.result = solve_exact(inst, params, c.exact);
    } else if (spec.name == "lp") {
        const auto program = build_program(inst, params, Integrality::Relaxed);
        const auto frac = solve_lp(program);
        SolverStats stats;
        stats.solver = "lp";
        stats.iterations = frac.iterations;
        stats.lp_solves = 1;
        out = finish_fractional(inst, params, frac.weights, spec.rounding, seed, c.rounding_samples, stats);
    } else {
        GradConfig g = c.grad;
        g.seed = seed;
        auto o = spec.name == "auglag" ? solve_auglag(inst, params, g) : solve_scgrad(inst, params, g);
        SolverStats stats;
        stats.solver = spec.name;
        stats.iterations = o.solution.iterations;
        out = finish_fractional(inst, params, o.solution.weights, spec.rounding, seed, c.rounding_samples, stats);
        out.trace = std::move(o.trace);
    }
    out.seconds = std::chrono::duration<double>(clock::now() - start).count();
    out.result.stats.wall_seconds = out.seconds;
    return out;
}

/// Short status tag for a failed point.
inline std::string error_tag(const std::exception& e) {
    if (auto* inf = dynamic_cast<const InfeasibleError*>(&e)) return "infeasible:" + std::string(to_string(inf->family()));
    if (dynamic_cast<const NoSolutionError*>(&e)) return "timeout";
    if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
    if (dynamic_cast<const SizeError*>(&e)) return "size";
    if (dynamic_cast<const InputError*>(&e)) return "input";
    return "error";
}

// ---------------------------------------------------------------------------
// Grid expansion and the worker pool
// ---------------------------------------------------------------------------

struct GridPoint {
    std::size_t index = 0;  // position in the seed-independent grid
    Objective objective = Objective::Mean;
    double gamma = 0.0, alpha = 0.0, theta = 0.0;
    int k = 1;

    FairnessParams params() const {
        FairnessParams p;
        p.objective = objective;
        p.gamma = gamma;
        p.alpha = alpha;
        p.theta = theta;
        p.k = k;
        return p;
    }
};

/// Cartesian product in the order objective, k, alpha, theta, gamma. alpha
/// only varies for CVaR; other objectives take alpha = 0 once.
inline std::vector<GridPoint> expand(const Grid& g) {
    std::vector<GridPoint> pts;
    for (auto obj : g.objective)
        for (int k : g.k) {
            const std::vector<double> alphas = obj == Objective::CVaR ? g.alpha : std::vector<double>{0.0};
            for (double a : alphas)
                for (double t : g.theta)
                    for (double gm : g.gamma) {
                        GridPoint p;
                        p.index = pts.size();
                        p.objective = obj;
                        p.k = k;
                        p.alpha = a;
                        p.theta = t;
                        p.gamma = gm;
                        pts.push_back(p);
                    }
        }
    return pts;
}

/// Per-point seed, independent of worker count and scheduling.
inline std::uint64_t point_seed(std::uint64_t seed, std::size_t grid_index) {
    return rng::substream(seed, static_cast<std::uint64_t>(grid_index));
}

/// Run jobs 0..count-1 on `workers` threads; job i writes only slot i.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    return io::format_double(v);
}

inline std::ofstream open_csv(const fs::path& path, const ExperimentConfig& c, const std::string& header) {
    auto out = io::open_out(path);
    out << "# config_hash=" << c.hash() << " seeds=" << c.seeds_str() << "\n" << header << "\n";
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    auto out = io::open_out(path);
    out << text;
}

/// manifest.json is the effective configuration; it loads back as a config,
/// so rerunning a command on it reproduces the outputs.
inline void write_manifest(const ExperimentConfig& c, const std::string& command, json files = json::object()) {
    json m = c.source;
    m["config_hash"] = c.hash();
    m["command"] = command;
    if (!files.empty()) m["files"] = files;
    fs::create_directories(c.output_dir);
    write_text(c.output_dir / "manifest.json", m.dump(2) + "\n");
}

inline json result_json(const SolveResult& r, const std::optional<SampleSpread>& spread) {
    json j;
    j["objective_value"] = r.objective_value;
    j["mean_utility"] = r.mean_utility();
    j["group_utilities"] = r.group_utilities;
    j["group_variance"] = r.group_variance;
    j["consumer_utilities"] = r.consumer_utilities;
    j["violations"] = {{"under_alloc_pct", r.violations.under_alloc_pct},
                       {"over_alloc_pct", r.violations.over_alloc_pct},
                       {"producer_violation_pct", r.violations.producer_violation_pct},
                       {"gmv_violated", r.violations.gmv_violated}};
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    j["stats"] = {{"solver", r.stats.solver},       {"rounding", r.stats.rounding},
                  {"iterations", r.stats.iterations}, {"nodes", r.stats.nodes},
                  {"lp_solves", r.stats.lp_solves},   {"best_bound", num(r.stats.best_bound)},
                  {"incumbent", num(r.stats.incumbent)}, {"gap", num(r.stats.gap)},
                  {"caps_hit", r.stats.caps_hit}};
    if (r.allocation.binary()) {
        json lists = json::array();
        for (std::size_t i = 0; i < r.allocation.consumers(); ++i) {
            json row = json::array();
            for (std::size_t j2 = 0; j2 < r.allocation.producers(); ++j2)
                if (r.allocation(i, j2) > 0.5) row.push_back(j2);
            lists.push_back(row);
        }
        j["allocation"] = lists;
    } else {
        json rows = json::array();
        for (std::size_t i = 0; i < r.allocation.consumers(); ++i)
            rows.push_back(std::vector<double>(r.allocation.row(i).begin(), r.allocation.row(i).end()));
        j["allocation_weights"] = rows;
    }
    if (spread) {
        j["prob_rounding"] = {{"samples", spread->samples},
                              {"mean_utility", spread->mean_utility},
                              {"mean_utility_se", spread->mean_utility_se},
                              {"objective", spread->objective},
                              {"objective_se", spread->objective_se},
                              {"under_alloc_pct", spread->under},
                              {"under_alloc_pct_se", spread->under_se},
                              {"over_alloc_pct", spread->over},
                              {"over_alloc_pct_se", spread->over_se},
                              {"producer_violation_pct", spread->producer},
                              {"producer_violation_pct_se", spread->producer_se}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Exit codes of the command-line tool.
enum ExitCode { kOk = 0, kUsage = 2, kInfeasible = 3, kNumerical = 4, kPartial = 5 };

/// Relevance, groups and (optionally) values for the first seed, plus a manifest.
inline int cmd_gen(const ExperimentConfig& c) {
    if (!c.dataset.simrec) throw InputError("gen needs a dataset.simrec block");
    auto cfg = *c.dataset.simrec;
    cfg.seed = c.seeds.front();
    cfg.validate();
    const auto d = gen_simrec(cfg);
    fs::create_directories(c.output_dir);
    const fs::path rel = c.output_dir / (c.dataset.format == "raw" ? "relevance.f32" : "relevance.csv");
    save_relevance(d.rho, rel);
    save_groups(d.groups, c.output_dir / "groups.csv");
    // values come from a file only when solving; gen always derives them
    save_values(gen_values_inverse_popularity(d.rho, std::min<int>(c.dataset.values_k, static_cast<int>(cfg.n))),
                c.output_dir / "values.csv");
    json files = {{"relevance", rel.filename().string()}, {"groups", "groups.csv"}, {"values", "values.csv"},
                  {"seed", cfg.seed}, {"m", cfg.m}, {"n", cfg.n}, {"groups_count", cfg.groups}};
    write_manifest(c, "gen", files);
    return kOk;
}

/// One solve at the first grid point and first seed; writes result.json (and
/// trace.csv for gradient solvers). Failures produce an error JSON.
inline int cmd_solve(const ExperimentConfig& c, std::ostream& log = std::cerr) {
    fs::create_directories(c.output_dir);
    write_manifest(c, "solve");
    const auto point = expand(c.grid).front();
    const std::uint64_t seed = c.seeds.front();
    json out = {{"config_hash", c.hash()}, {"seed", seed}, {"solver", c.solver.str()},
                {"objective", to_string(point.objective)}, {"gamma", point.gamma}, {"alpha", point.alpha},
                {"theta", point.theta}, {"k", point.k}};
    int code = kOk;
    try {
        const auto inst = make_instance(c, seed);
        auto solved = run_solver(inst, point.params(), c.solver, c, point_seed(seed, 0));
        out["status"] = "ok";
        out["result"] = result_json(solved.result, solved.spread);
        if (solved.trace) {
            auto f = io::open_out(c.output_dir / "trace.csv");
            solved.trace->write_csv(f);
        }
        auto t = open_csv(c.output_dir / "solve_timing.csv", c, "wall_seconds");
        t << fmt(solved.seconds) << "\n";
    } catch (const InfeasibleError& e) {
        out["status"] = "infeasible";
        out["family"] = std::string(to_string(e.family()));
        out["message"] = e.what();
        code = kInfeasible;
    } catch (const NoSolutionError& e) {
        out["status"] = "no_solution";
        out["best_bound"] = e.best_bound();
        out["message"] = e.what();
        code = kNumerical;
    } catch (const GradientDivergence& e) {
        out["status"] = "numerical";
        out["message"] = e.what();
        auto f = io::open_out(c.output_dir / "trace.csv");
        e.trace().write_csv(f);
        code = kNumerical;
    } catch (const NumericalError& e) {
        out["status"] = "numerical";
        out["message"] = e.what();
        code = kNumerical;
    }
    write_text(c.output_dir / "result.json", out.dump(2) + "\n");
    if (code != kOk) log << out.dump() << "\n";
    return code;
}

struct SweepRow {
    std::uint64_t seed = 0;
    GridPoint point;
    std::string status = "ok";
    std::string message;
    SolvedPoint solved;
    double gmv = std::numeric_limits<double>::quiet_NaN();
    long floor = 0;
};

inline std::vector<SweepRow> run_grid(const ExperimentConfig& c) {
    const auto points = expand(c.grid);
    std::vector<SweepRow> rows(points.size() * c.seeds.size());
    std::vector<std::optional<Instance>> instances(c.seeds.size());
    std::vector<std::string> instance_errors(c.seeds.size());
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
        try {
            instances[s] = make_instance(c, c.seeds[s]);
        } catch (const std::exception& e) {
            instance_errors[s] = e.what();
        }
    }
    parallel_for(rows.size(), c.workers, [&](std::size_t idx) {
        const std::size_t s = idx / points.size();
        SweepRow& row = rows[idx];
        row.seed = c.seeds[s];
        row.point = points[idx % points.size()];
        if (!instances[s]) {
            row.status = "input";
            row.message = instance_errors[s];
            return;
        }
        const auto& inst = *instances[s];
        try {
            const auto params = row.point.params();
            params.validate(inst.producers());
            row.floor = producer_floor(params, inst.consumers(), inst.producers());
            row.solved = run_solver(inst, params, c.solver, c, point_seed(row.seed, row.point.index));
            if (inst.values) row.gmv = gmv_of_allocation(row.solved.result.allocation, *inst.values);
        } catch (const std::exception& e) {
            row.status = error_tag(e);
            row.message = e.what();
        }
    });
    return rows;
}

inline std::string series_label(const GridPoint& p, bool with_alpha, bool with_theta) {
    std::string s = to_string(p.objective) + " k=" + std::to_string(p.k);
    if (with_alpha && p.objective == Objective::CVaR) s += " a=" + svg::tick_label(p.alpha);
    if (with_theta) s += " theta=" + svg::tick_label(p.theta);
    return s;
}

/// Solve every (seed, grid point); sweep.csv, sweep_timing.csv and SVG line charts.
inline int cmd_sweep(const ExperimentConfig& c, std::ostream& log = std::cerr) {
    fs::create_directories(c.output_dir);
    write_manifest(c, "sweep");
    const auto rows = run_grid(c);

    auto csv = open_csv(c.output_dir / "sweep.csv", c,
                        "objective,gamma,alpha,theta,k,seed,solver,status,objective_value,mean_utility,"
                        "mean_utility_se,group_variance,under_alloc_pct,over_alloc_pct,producer_violation_pct,"
                        "gmv_violated,gmv,producer_floor,nodes,gap,caps_hit,iterations");
    auto timing = open_csv(c.output_dir / "sweep_timing.csv", c, "objective,gamma,alpha,theta,k,seed,solver,status,wall_seconds");
    bool failed = false;
    for (const auto& r : rows) {
        const auto& p = r.point;
        const std::string key = to_string(p.objective) + "," + fmt(p.gamma) + "," + fmt(p.alpha) + "," +
                                fmt(p.theta) + "," + std::to_string(p.k) + "," + std::to_string(r.seed) + "," +
                                c.solver.str() + "," + r.status;
        timing << key << "," << fmt(r.status == "ok" ? r.solved.seconds : std::nan("")) << "\n";
        if (r.status != "ok") {
            failed = true;
            csv << key << ",,,,,,,,,,,,,,\n";
            log << "point failed (" << r.status << "): " << r.message << "\n";
            continue;
        }
        const auto& res = r.solved.result;
        const auto& sp = r.solved.spread;
        const double nan = std::nan("");
        csv << key << "," << fmt(sp ? sp->objective : res.objective_value) << ","
            << fmt(sp ? sp->mean_utility : res.mean_utility()) << "," << fmt(sp ? sp->mean_utility_se : nan) << ","
            << fmt(res.group_variance) << "," << fmt(sp ? sp->under : res.violations.under_alloc_pct) << ","
            << fmt(sp ? sp->over : res.violations.over_alloc_pct) << ","
            << fmt(sp ? sp->producer : res.violations.producer_violation_pct) << ","
            << (res.violations.gmv_violated ? 1 : 0) << "," << fmt(r.gmv) << "," << r.floor << ","
            << res.stats.nodes << "," << fmt(res.stats.gap) << "," << (res.stats.caps_hit ? 1 : 0) << ","
            << res.stats.iterations << "\n";
    }

    // utility vs gamma, one series per (objective, k, alpha, theta), mean over seeds
    const bool multi_alpha = c.grid.alpha.size() > 1, multi_theta = c.grid.theta.size() > 1;
    std::map<std::string, std::map<double, std::vector<double>>> by_gamma;
    std::map<std::string, std::map<double, std::vector<double>>> by_theta;
    std::vector<std::string> gamma_order, theta_order;
    for (const auto& r : rows) {
        if (r.status != "ok") continue;
        const auto& res = r.solved.result;
        const double u = r.solved.spread ? r.solved.spread->mean_utility : res.mean_utility();
        const auto label = series_label(r.point, multi_alpha, multi_theta);
        if (!by_gamma.count(label)) gamma_order.push_back(label);
        by_gamma[label][r.point.gamma].push_back(u);
        if (multi_theta && !std::isnan(r.gmv)) {
            GridPoint q = r.point;
            std::string tl = to_string(q.objective) + " k=" + std::to_string(q.k) + " g=" + svg::tick_label(q.gamma);
            if (!by_theta.count(tl)) theta_order.push_back(tl);
            by_theta[tl][q.theta].push_back(r.gmv);
        }
    }
    auto to_series = [](const std::vector<std::string>& order,
                        const std::map<std::string, std::map<double, std::vector<double>>>& data) {
        std::vector<svg::Series> out;
        for (const auto& name : order) {
            svg::Series s{name, {}};
            for (const auto& [x, ys] : data.at(name)) s.points.emplace_back(x, mean_se(ys).first);
            out.push_back(std::move(s));
        }
        return out;
    };
    write_text(c.output_dir / "utility_vs_gamma.svg",
               svg::line_chart("Mean consumer utility vs producer fairness", "gamma", "mean utility",
                               to_series(gamma_order, by_gamma)));
    if (multi_theta && !theta_order.empty())
        write_text(c.output_dir / "gmv_vs_theta.svg",
                   svg::line_chart("Allocation GMV vs business-value threshold", "theta", "GMV",
                                   to_series(theta_order, by_theta)));
    return failed ? kPartial : kOk;
}

/// Solve every (seed, grid point), then simulate purchases on the binary
/// allocation. simulate.csv has one row per seed, simulate_summary.csv the
/// mean and standard error per grid point.
inline int cmd_simulate(const ExperimentConfig& c, std::ostream& log = std::cerr) {
    fs::create_directories(c.output_dir);
    write_manifest(c, "simulate");
    const auto rows = run_grid(c);
    const auto points = expand(c.grid);

    struct SimOut {
        std::string status;
        double str = 0.0, gmv = 0.0;
        std::size_t purchases = 0;
    };
    std::vector<SimOut> sims(rows.size());
    std::vector<std::optional<Instance>> instances(c.seeds.size());
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
        try {
            instances[s] = make_instance(c, c.seeds[s]);
        } catch (const std::exception&) {
        }
    }
    parallel_for(rows.size(), c.workers, [&](std::size_t idx) {
        const auto& r = rows[idx];
        auto& out = sims[idx];
        out.status = r.status;
        if (r.status != "ok") return;
        const auto& inst = *instances[idx / points.size()];
        const auto& alloc = r.solved.result.allocation;
        if (!alloc.binary()) {
            out.status = "input";
            return;
        }
        const auto log_ = simulate_purchases(inst.rho, alloc, r.point.k, inst.values ? &*inst.values : nullptr,
                                             rng::substream(r.seed, r.point.index, std::uint64_t{1}),
                                             c.consumer_order);
        out.str = sell_through_rate(log_, inst.producers());
        out.gmv = inst.values ? realized_gmv(log_, *inst.values) : static_cast<double>(log_.purchases);
        out.purchases = log_.purchases;
    });

    auto csv = open_csv(c.output_dir / "simulate.csv", c,
                        "objective,gamma,alpha,theta,k,seed,solver,status,str,realized_gmv,purchases");
    bool failed = false;
    std::map<std::size_t, std::vector<std::size_t>> per_point;
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
        const auto& r = rows[idx];
        const auto& p = r.point;
        const auto& sm = sims[idx];
        csv << to_string(p.objective) << "," << fmt(p.gamma) << "," << fmt(p.alpha) << "," << fmt(p.theta) << ","
            << p.k << "," << r.seed << "," << c.solver.str() << "," << sm.status << ",";
        if (sm.status == "ok") {
            csv << fmt(sm.str) << "," << fmt(sm.gmv) << "," << sm.purchases << "\n";
            per_point[p.index].push_back(idx);
        } else {
            csv << ",,\n";
            failed = true;
            log << "point failed (" << sm.status << "): " << (r.message.empty() ? "allocation is not binary" : r.message)
                << "\n";
        }
    }

    auto sum = open_csv(c.output_dir / "simulate_summary.csv", c,
                        "objective,gamma,alpha,theta,k,solver,runs,str_mean,str_se,realized_gmv_mean,"
                        "realized_gmv_se,purchases_mean");
    std::map<std::string, std::map<double, std::vector<double>>> str_series;
    std::vector<std::string> order;
    for (const auto& p : points) {
        std::vector<double> s, g, n;
        for (std::size_t idx : per_point[p.index]) {
            s.push_back(sims[idx].str);
            g.push_back(sims[idx].gmv);
            n.push_back(static_cast<double>(sims[idx].purchases));
        }
        const auto [sm, sse] = mean_se(s);
        const auto [gm, gse] = mean_se(g);
        sum << to_string(p.objective) << "," << fmt(p.gamma) << "," << fmt(p.alpha) << "," << fmt(p.theta) << ","
            << p.k << "," << c.solver.str() << "," << s.size() << "," << fmt(sm) << "," << fmt(sse) << ","
            << fmt(gm) << "," << fmt(gse) << "," << fmt(mean_se(n).first) << "\n";
        const auto label = series_label(p, c.grid.alpha.size() > 1, c.grid.theta.size() > 1);
        if (!str_series.count(label)) order.push_back(label);
        for (double v : s) str_series[label][p.gamma].push_back(v);
    }
    std::vector<svg::Series> series;
    for (const auto& name : order) {
        svg::Series s{name, {}};
        for (const auto& [x, ys] : str_series[name]) s.points.emplace_back(x, mean_se(ys).first);
        series.push_back(std::move(s));
    }
    write_text(c.output_dir / "str_vs_gamma.svg",
               svg::line_chart("Sell-through rate vs producer fairness", "gamma", "STR", series));
    return failed ? kPartial : kOk;
}

/// Wall time per (size, solver) on square SimRec instances with CVaR, median
/// over repeats. bench.csv holds the deterministic columns, bench_timing.csv
/// the times. Non-monotone lp+topk medians only warn.
inline int cmd_bench(const ExperimentConfig& c, std::ostream& log = std::cerr) {
    fs::create_directories(c.output_dir);
    write_manifest(c, "bench");
    auto csv = open_csv(c.output_dir / "bench.csv", c,
                        "size,solver,status,objective_value,mean_utility,nodes,gap,caps_hit");
    auto timing = open_csv(c.output_dir / "bench_timing.csv", c,
                           "size,solver,status,repeats,median_seconds,min_seconds,max_seconds");
    std::vector<std::pair<std::size_t, double>> lp_medians;
    bool failed = false;
    for (std::size_t size : c.bench.sizes) {
        SimRecConfig sc = c.dataset.simrec.value_or(SimRecConfig{});
        sc.m = sc.n = size;
        if (sc.groups > size) {
            sc.groups = size;
            sc.beta.clear();
        }
        sc.seed = c.seeds.front();
        const auto d = gen_simrec(sc);
        const Instance inst{d.rho, d.groups, std::nullopt};
        FairnessParams params;
        params.objective = Objective::CVaR;
        params.gamma = c.bench.gamma;
        params.alpha = c.bench.alpha;
        params.k = std::min<int>(c.bench.k, static_cast<int>(size));
        for (const auto& solver : c.bench.solvers) {
            std::vector<double> times;
            std::string status = "ok";
            std::optional<SolvedPoint> last;
            for (int rep = 0; rep < c.bench.repeats && status == "ok"; ++rep) {
                try {
                    last = run_solver(inst, params, solver, c, point_seed(c.seeds.front(), size));
                    times.push_back(last->seconds);
                } catch (const std::exception& e) {
                    status = error_tag(e);
                    failed = true;
                    log << "bench " << size << " " << solver.str() << ": " << e.what() << "\n";
                }
            }
            csv << size << "," << solver.str() << "," << status << ",";
            if (status == "ok") {
                const auto& r = last->result;
                csv << fmt(r.objective_value) << "," << fmt(r.mean_utility()) << "," << r.stats.nodes << ","
                    << fmt(r.stats.gap) << "," << (r.stats.caps_hit ? 1 : 0) << "\n";
            } else {
                csv << ",,,,\n";
            }
            std::sort(times.begin(), times.end());
            const double med = times.empty() ? std::nan("") : times[times.size() / 2];
            timing << size << "," << solver.str() << "," << status << "," << times.size() << "," << fmt(med) << ","
                   << fmt(times.empty() ? std::nan("") : times.front()) << ","
                   << fmt(times.empty() ? std::nan("") : times.back()) << "\n";
            if (solver.name == "lp" && solver.rounding == Rounding::TopK && !times.empty())
                lp_medians.emplace_back(size, med);
        }
    }
    for (std::size_t i = 1; i < lp_medians.size(); ++i)
        if (lp_medians[i].second < lp_medians[i - 1].second)
            log << "warning: lp+topk median time decreased from size " << lp_medians[i - 1].first << " to "
                << lp_medians[i].first << "\n";
    return failed ? kPartial : kOk;
}

} // namespace fairalloc::experiment
