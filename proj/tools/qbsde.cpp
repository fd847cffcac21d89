#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qbsde/report.hpp"
#include "qbsde/scenario.hpp"

namespace {

// Exit codes: 0 success / all requested checks pass, 2 configuration
// problems (message names the field), 3 solver or numerical failures
// (diagnostics on disk where available).
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<long> paths;
    std::optional<long> steps;
    std::optional<int> threads;
    std::optional<std::string> out;
    std::optional<std::string> dump_ensemble;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--seed", flags.seed, "override ensemble seed");
    cmd->add_option("--paths", flags.paths, "override path count");
    cmd->add_option("--steps", flags.steps, "override time-step count");
    cmd->add_option("--threads", flags.threads, "cap worker threads (0 = hardware)");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--dump-ensemble", flags.dump_ensemble,
                    "write the Brownian ensemble to a binary file");
}

qbsde::RunSettings load_settings(const std::string& config_path, const CommonFlags& flags) {
    auto settings = qbsde::load_run_settings(config_path);
    if (flags.seed) settings.seed = *flags.seed;
    if (flags.paths) {
        if (*flags.paths < 1) throw qbsde::ConfigError("--paths", "must be positive");
        settings.paths = *flags.paths;
    }
    if (flags.steps) {
        if (*flags.steps < 1) throw qbsde::ConfigError("--steps", "must be positive");
        settings.steps = *flags.steps;
    }
    if (flags.threads) settings.threads = *flags.threads;
    if (flags.out) settings.output_dir = *flags.out;
    return settings;
}

int run_solve(const std::string& config_path, const CommonFlags& flags, bool gate_on_checks) {
    auto settings = load_settings(config_path, flags);
    auto run = qbsde::run_scenario(settings);
    auto bundle = qbsde::make_bundle(run);
    qbsde::write_results(bundle, settings.output_dir);
    if (flags.dump_ensemble) {
        const std::filesystem::path target(*flags.dump_ensemble);
        if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
        qbsde::dump_ensemble(run.ensemble, *flags.dump_ensemble);
    }
    qbsde::write_markdown(bundle, settings.output_dir);
    qbsde::write_diagnostics(run, settings.output_dir);
    std::printf("%s: Y0 = %s +- %s  [%s]\n", run.scenario.c_str(),
                qbsde::format_double(bundle.y0).c_str(),
                qbsde::format_double(bundle.y0_std_error).c_str(), run.method.c_str());
    for (const auto& c : run.checks)
        std::printf("  check %-18s %s\n", c.name.c_str(), c.passed ? "pass" : "FAIL");
    if (gate_on_checks || !run.checks.empty())
        return bundle.all_passed() ? kExitOk : kExitSolver;
    return kExitOk;
}

int run_study_cmd(const std::string& config_path, const CommonFlags& flags) {
    auto settings = load_settings(config_path, flags);
    auto res = qbsde::run_study(settings);
    qbsde::write_study(res, settings.config_hash(), settings.output_dir);
    std::printf("study %s: monotone_in_n=%s antitone_in_k=%s gap_to_direct=%s\n",
                settings.scenario.c_str(), res.monotone_in_n ? "yes" : "no",
                res.antitone_in_k ? "yes" : "no",
                qbsde::format_double(res.gap_to_direct).c_str());
    return res.monotone_in_n && res.antitone_in_k ? kExitOk : kExitSolver;
}

int run_pde_cmd(const std::string& config_path, const CommonFlags& flags) {
    auto settings = load_settings(config_path, flags);
    auto res = qbsde::run_pde_crosscheck(settings);
    qbsde::write_pde(res.solution, res.probes, settings.config_hash(), settings.output_dir);
    for (const auto& p : res.probes)
        std::printf("probe (t=%g, x=%g): u_fd=%s y0=%s +- %s |err|=%s\n", p.t0, p.x0,
                    qbsde::format_double(p.u_fd).c_str(), qbsde::format_double(p.y0).c_str(),
                    qbsde::format_double(p.y0_std_error).c_str(),
                    qbsde::format_double(p.abs_error).c_str());
    std::printf("fd-vs-oracle: %s, bsde-vs-fd: %s\n",
                res.fd_matches_oracle ? "pass" : "FAIL",
                res.bsde_matches_fd ? "pass" : "FAIL");
    return res.fd_matches_oracle && res.bsde_matches_fd ? kExitOk : kExitSolver;
}

int list_scenarios() {
    std::printf("scenarios:\n");
    for (const auto& s : qbsde::scenario_registry())
        std::printf("  %-18s %s\n", s.name.c_str(), s.description.c_str());
    std::printf("pde scenarios:\n");
    for (const auto& s : qbsde::pde_scenario_registry())
        std::printf("  %-18s %s\n", s.name.c_str(), s.description.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quadratic BSDE scenario runner"};
    app.require_subcommand(1);

    std::string config_path;
    CommonFlags flags;

    auto* solve = app.add_subcommand("solve", "run a scenario and write results");
    solve->add_option("config", config_path, "config file (JSON)")->required();
    add_common_flags(solve, flags);

    auto* check = app.add_subcommand("check", "run a scenario and gate on its checks");
    check->add_option("config", config_path, "config file (JSON)")->required();
    add_common_flags(check, flags);

    auto* study = app.add_subcommand("study", "parameter studies");
    auto* study_reg =
        study->add_subcommand("regularization", "Lipschitz-envelope convergence study");
    study_reg->add_option("config", config_path, "config file (JSON)")->required();
    add_common_flags(study_reg, flags);

    auto* crosscheck = app.add_subcommand("crosscheck", "cross-validation runs");
    auto* crosscheck_pde =
        crosscheck->add_subcommand("pde", "finite-difference vs Markovian-equation probes");
    crosscheck_pde->add_option("config", config_path, "config file (JSON)")->required();
    add_common_flags(crosscheck_pde, flags);

    auto* list = app.add_subcommand("list", "listings");
    auto* list_sc = list->add_subcommand("scenarios", "print the scenario registry");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return run_solve(config_path, flags, false);
        if (check->parsed()) return run_solve(config_path, flags, true);
        if (study->parsed() && study_reg->parsed()) return run_study_cmd(config_path, flags);
        if (crosscheck->parsed() && crosscheck_pde->parsed())
            return run_pde_cmd(config_path, flags);
        if (list->parsed() && list_sc->parsed()) return list_scenarios();
        std::fprintf(stderr, "no subcommand\n");
        return kExitConfig;
    } catch (const qbsde::ConfigError& ex) {
        std::fprintf(stderr, "configuration error: %s\n", ex.what());
        return kExitConfig;
    } catch (const qbsde::Error& ex) {
        std::fprintf(stderr, "solver error: %s\n", ex.what());
        return kExitSolver;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return kExitSolver;
    }
}
