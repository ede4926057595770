// fairalloc: generate SimRec data, solve one allocation, sweep fairness grids,
// simulate purchases and benchmark solvers. See README.md for the config schema.

#include "fairalloc/fairalloc.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace fairalloc;
using namespace fairalloc::experiment;

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::vector<std::uint64_t> seeds;
    std::string solver;
    int workers = 0;
    std::string lp_file;
};

ExperimentConfig load(const Options& o) {
    json j = o.config.empty() ? json::object() : load_json(o.config);
    for (const auto& s : o.overrides) apply_override(j, s);
    if (!o.out.empty()) j["output_dir"] = o.out;
    if (!o.seeds.empty()) j["seeds"] = o.seeds;
    if (!o.solver.empty()) j["solver"] = o.solver;
    if (o.workers > 0) j["workers"] = o.workers;
    return parse_config(j);
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("-c,--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "override a config key, e.g. grid.gamma=[0,0.5,1]");
    sub->add_option("-o,--out", o.out, "output directory");
    sub->add_option("--seed", o.seeds, "replicate seeds (repeatable)");
    sub->add_option("--solver", o.solver, "exact | lp+{none,hard,prob,topk} | auglag+... | scgrad+...");
    sub->add_option("-j,--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
}

int run_solve(const ExperimentConfig& c, const Options& o) {
    if (!o.lp_file.empty()) {
        const auto point = expand(c.grid).front();
        const auto inst = make_instance(c, c.seeds.front());
        const auto integrality = c.solver.name == "exact" ? Integrality::Binary : Integrality::Relaxed;
        std::ofstream f(o.lp_file);
        if (!f) throw InputError("cannot write " + o.lp_file);
        write_lp_format(build_program(inst, point.params(), integrality), f);
    }
    return cmd_solve(c);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fair two-sided allocation: solvers, sweeps and purchase simulation"};
    app.require_subcommand(1);
    Options o;
    auto* gen = app.add_subcommand("gen", "write a SimRec relevance matrix, groups and values");
    auto* solve = app.add_subcommand("solve", "solve the first grid point for the first seed");
    auto* sweep = app.add_subcommand("sweep", "solve every grid point and seed; CSV and SVG reports");
    auto* simulate = app.add_subcommand("simulate", "solve and simulate purchases; STR and realized GMV");
    auto* bench = app.add_subcommand("bench", "time solvers on square SimRec instances");
    for (auto* sub : {gen, solve, sweep, simulate, bench}) add_common(sub, o);
    solve->add_option("--lp-file", o.lp_file, "also write the program in LP format");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        const auto c = load(o);
        if (*gen) return cmd_gen(c);
        if (*solve) return run_solve(c, o);
        if (*sweep) return cmd_sweep(c);
        if (*simulate) return cmd_simulate(c);
        if (*bench) return cmd_bench(c);
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const NoSolutionError& e) {
        std::cerr << "no solution within caps: " << e.what() << "\n";
        return kNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
