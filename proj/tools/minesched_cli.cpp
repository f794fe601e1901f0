// Command-line entry point: generate / solve / compare / selfcheck.
// Exit codes: 0 success, 2 configuration error, 3 infeasible or runtime fault.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minesched/bench.hpp"
#include "minesched/common.hpp"

namespace {

using namespace minesched;

bench::ExperimentConfig load_config_file(const std::string& path) {
    if (!file_exists(path))
        throw std::invalid_argument("config file not found: " + path);
    return bench::load_config_json(read_file(path));
}

int run_generate(const std::string& config_path, const std::string& preset, uint64_t seed,
                 bool seed_set, const std::string& out, bool force) {
    bench::ExperimentConfig cfg;
    if (!config_path.empty()) {
        cfg = load_config_file(config_path);
    } else if (preset == "gold") {
        cfg = bench::gold_preset();
    } else if (preset == "copper" || preset == "desk") {
        cfg = bench::copper_preset();
    } else {
        throw std::invalid_argument("generate: unknown preset '" + preset + "'");
    }
    if (seed_set) {
        cfg.instance.supply.seed = seed;
        cfg.price.seed = seed + 1;
    }
    const bench::GenerateResult res = bench::cmd_generate(cfg, out, force);
    std::cout << "instance " << res.instance_hash << " " << res.instance_path << "\n"
              << "prices   " << res.prices_hash << " " << res.prices_path << "\n"
              << "config   " << res.config_path << "\n";
    return 0;
}

int run_solve(const std::string& config_path, const std::string& policy, bool policy_set,
              uint64_t seed, bool seed_set, double budget, bool budget_set, int64_t max_iters,
              bool max_iters_set, const std::string& out) {
    bench::ExperimentConfig cfg = load_config_file(config_path);
    if (policy_set) cfg.policy = policy;
    if (seed_set) cfg.solve_seed = seed;
    if (budget_set) cfg.budget_seconds = budget;
    if (max_iters_set) {
        cfg.schedule.max_iters = max_iters;
        if (!budget_set) cfg.budget_seconds = 0.0;  // iteration budget binds alone
    }
    const std::string artifact_dir = std::filesystem::path(config_path).parent_path().string();
    const bench::RunReport rep =
        bench::cmd_solve(cfg, artifact_dir.empty() ? "." : artifact_dir, out);
    std::cout << "policy " << rep.policy << " seed " << rep.seed << ": best " << rep.best_objective
              << " after " << rep.iters << " iters in " << rep.wall_seconds << " s\n";
    return 0;
}

int run_compare(const std::vector<std::string>& report_paths, const std::string& out) {
    std::vector<bench::RunReport> reports;
    for (const auto& p : report_paths) reports.push_back(bench::load_report_json(read_file(p)));
    const bench::CompareResult res = bench::cmd_compare(reports);
    std::cout << bench::compare_text(res);
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        const std::string path = out + "/compare.csv";
        write_file(path, bench::compare_csv(res));
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int run_selfcheck(uint64_t seed) {
    const bench::SelfCheckResult res = bench::cmd_selfcheck(seed);
    std::cout << res.text;
    return res.ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"minesched: simultaneous stochastic mine-schedule optimization"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "write instance and price-path artifacts");
    std::string g_config, g_preset = "copper", g_out = "out";
    uint64_t g_seed = 0;
    bool g_force = false;
    gen->add_option("--config", g_config, "experiment config JSON (takes precedence over --preset)");
    gen->add_option("--preset", g_preset, "built-in config: copper | gold | desk")
        ->check(CLI::IsMember({"copper", "gold", "desk"}));
    gen->add_option("--seed", g_seed, "override instance/price seeds");
    gen->add_option("--out", g_out, "output directory");
    gen->add_flag("--force", g_force, "overwrite existing artifacts");

    auto* solve = app.add_subcommand("solve", "run the configured policy on generated artifacts");
    std::string s_config, s_policy, s_out;
    uint64_t s_seed = 0;
    double s_budget = 0.0;
    int64_t s_max_iters = -1;
    solve->add_option("--config", s_config, "config echo written by generate")->required();
    solve->add_option("--policy", s_policy, "baseline | nn-nb | cnn-nb | gnn-nb");
    solve->add_option("--seed", s_seed, "solver seed");
    solve->add_option("--budget-seconds", s_budget, "wall-clock budget");
    solve->add_option("--max-iters", s_max_iters,
                      "iteration budget (without --budget-seconds it binds alone)");
    solve->add_option("--out", s_out, "report directory (default: artifact directory)");

    auto* cmp = app.add_subcommand("compare", "tabulate suboptimality thresholds across reports");
    std::vector<std::string> c_reports;
    std::string c_out;
    cmp->add_option("reports", c_reports, "report_*.json files")->required()->expected(-1);
    cmp->add_option("--out", c_out, "directory for compare.csv");

    auto* self = app.add_subcommand("selfcheck", "run the gradient and oracle suites");
    uint64_t sc_seed = 1;
    self->add_option("--seed", sc_seed, "suite seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return run_generate(g_config, g_preset, g_seed, gen->count("--seed") > 0, g_out,
                                g_force);
        if (solve->parsed())
            return run_solve(s_config, s_policy, solve->count("--policy") > 0, s_seed,
                             solve->count("--seed") > 0, s_budget,
                             solve->count("--budget-seconds") > 0, s_max_iters,
                             solve->count("--max-iters") > 0, s_out);
        if (cmp->parsed()) return run_compare(c_reports, c_out);
        if (self->parsed()) return run_selfcheck(sc_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
