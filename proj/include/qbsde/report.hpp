#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbsde/estimates.hpp"
#include "qbsde/regularize.hpp"
#include "qbsde/scenario.hpp"

namespace qbsde {

inline const char* code_version() { return "qbsde 0.1.0"; }

/// Fixed 17-significant-digit decimal rendering; round-trips doubles exactly
/// and keeps CSV/markdown output byte-stable across runs.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Scenario outputs plus provenance. Every emitted file carries the config
/// hash so results can be traced to their exact settings.
struct ResultsBundle {
    std::string scenario;
    std::string method;
    std::string config_hash;
    std::uint64_t seed = 0;
    double y0 = 0.0;
    double y0_std_error = 0.0;
    double norm_sup_p2 = 0.0;
    double norm_z_p2 = 0.0;
    std::vector<CheckResult> checks;
    std::vector<double> t_nodes, mean_y, band_lo, band_hi;
    nlohmann::json extra;  // study tables, probe tables, diagnostics summaries

    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

inline ResultsBundle make_bundle(const ScenarioRun& run) {
    ResultsBundle b;
    b.scenario = run.scenario;
    b.method = run.method;
    b.config_hash = run.settings.config_hash();
    b.seed = run.settings.seed;
    b.y0 = run.solution.y0();
    b.y0_std_error = run.solution.y0_std_error;
    auto norms = empirical_lp_norms(run.solution, 2.0);
    b.norm_sup_p2 = norms.lhs_sup_norm;
    b.norm_z_p2 = norms.lhs_z_norm;
    b.checks = run.checks;

    const long N = run.solution.grid.steps;
    const long M = run.solution.num_paths;
    for (long i = 0; i <= N; ++i) {
        double mean = 0.0;
        for (long m = 0; m < M; ++m) mean += run.solution.y_at(i, m);
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (long m = 0; m < M; ++m) {
            const double d = run.solution.y_at(i, m) - mean;
            var += d * d;
        }
        var /= static_cast<double>(M > 1 ? M - 1 : 1);
        const double half_band = 3.0 * std::sqrt(var / static_cast<double>(M));
        b.t_nodes.push_back(run.solution.grid.node(i));
        b.mean_y.push_back(mean);
        b.band_lo.push_back(mean - half_band);
        b.band_hi.push_back(mean + half_band);
    }
    if (!run.picard_distances.empty()) b.extra["picard_distances"] = run.picard_distances;
    if (!run.estimate_reports.empty()) b.extra["estimate_reports"] = run.estimate_reports;
    return b;
}

inline nlohmann::json to_json(const ResultsBundle& b) {
    nlohmann::json j;
    j["scenario"] = b.scenario;
    j["method"] = b.method;
    j["config_hash"] = b.config_hash;
    j["seed"] = b.seed;
    j["code_version"] = code_version();
    j["y0"] = b.y0;
    j["y0_std_error"] = b.y0_std_error;
    j["norms"] = {{"sup_p2", b.norm_sup_p2}, {"z_quadratic_p2", b.norm_z_p2}};
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : b.checks) {
        checks.push_back({{"name", c.name},
                          {"passed", c.passed},
                          {"value", c.value},
                          {"expected", c.expected},
                          {"tolerance", c.tolerance},
                          {"detail", c.detail}});
    }
    j["checks"] = checks;
    if (!b.extra.is_null()) j["extra"] = b.extra;
    return j;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("io-error: cannot write '" + path.string() + "'");
    os << content;
    if (!os) throw Error("io-error: short write to '" + path.string() + "'");
}

}  // namespace detail

/// results.json + plot-ready series CSV; deterministic byte-for-byte given
/// identical inputs.
inline void write_results(const ResultsBundle& b, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    detail::write_file(dir / "results.json", to_json(b).dump(2) + "\n");

    std::string csv = "t,mean_Y,lo,hi\n";
    for (std::size_t i = 0; i < b.t_nodes.size(); ++i) {
        csv += format_double(b.t_nodes[i]) + "," + format_double(b.mean_y[i]) + "," +
               format_double(b.band_lo[i]) + "," + format_double(b.band_hi[i]) + "\n";
    }
    csv += "# config_hash " + b.config_hash + "\n";
    detail::write_file(dir / "series.csv", csv);
}

inline void write_markdown(const ResultsBundle& b, const std::string& out_dir) {
    std::string md = "# " + b.scenario + "\n\n";
    md += "- method: " + b.method + "\n";
    md += "- config hash: " + b.config_hash + "\n";
    md += "- Y0: " + format_double(b.y0) + " +- " + format_double(b.y0_std_error) + "\n\n";
    md += "| check | passed | value | expected | tolerance |\n";
    md += "|---|---|---|---|---|\n";
    for (const auto& c : b.checks) {
        md += "| " + c.name + " | " + (c.passed ? "yes" : "no") + " | " +
              format_double(c.value) + " | " + format_double(c.expected) + " | " +
              format_double(c.tolerance) + " |\n";
    }
    detail::write_file(std::filesystem::path(out_dir) / "report.md", md);
}

inline void write_diagnostics(const ScenarioRun& run, const std::string& out_dir) {
    nlohmann::json j;
    j["scenario"] = run.scenario;
    j["config_hash"] = run.settings.config_hash();
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& d : run.solution.diagnostics) {
        steps.push_back({{"step", d.step},
                         {"fixed_point_iterations", d.fixed_point_iterations},
                         {"fixed_point_residual", d.fixed_point_residual},
                         {"damped", d.damped},
                         {"z_clamp_radius", d.z_clamp_radius},
                         {"regression_rms_y", d.regression_rms_y},
                         {"condition_y", d.condition_y},
                         {"regression_rms_z", d.regression_rms_z},
                         {"condition_z", d.condition_z}});
    }
    j["steps"] = steps;
    std::filesystem::create_directories(out_dir);
    detail::write_file(std::filesystem::path(out_dir) / "diagnostics.json",
                       j.dump(2) + "\n");
}

/// Study results: CSV matrix (rows n, columns k) plus a JSON verdict.
inline void write_study(const ConvergenceStudyResult& res, const std::string& config_hash,
                        const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::string csv = "n\\k";
    for (int k : res.k_list) csv += "," + std::to_string(k);
    csv += "\n";
    for (std::size_t i = 0; i < res.n_list.size(); ++i) {
        csv += std::to_string(res.n_list[i]);
        for (std::size_t j = 0; j < res.k_list.size(); ++j)
            csv += "," + format_double(res.at(i, j));
        csv += "\n";
    }
    csv += "# config_hash " + config_hash + "\n";
    detail::write_file(std::filesystem::path(out_dir) / "study_matrix.csv", csv);

    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["code_version"] = code_version();
    j["n_list"] = res.n_list;
    j["k_list"] = res.k_list;
    j["y0"] = res.y0;
    j["y0_stderr"] = res.y0_stderr;
    j["monotone_in_n"] = res.monotone_in_n;
    j["antitone_in_k"] = res.antitone_in_k;
    j["tolerance"] = res.tolerance;
    j["direct_y0"] = res.direct_y0;
    j["gap_to_direct"] = res.gap_to_direct;
    detail::write_file(std::filesystem::path(out_dir) / "study_verdict.json",
                       j.dump(2) + "\n");
}

/// PDE solution dump (t, x, u) plus the Feynman-Kac probe table.
inline void write_pde(const PdeSolution& sol, const std::vector<FeynmanKacProbe>& probes,
                      const std::string& config_hash, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::string csv = "t,x,u\n";
    for (std::size_t i = 0; i < sol.t_nodes.size(); ++i)
        for (std::size_t jx = 0; jx < sol.x_nodes.size(); ++jx)
            csv += format_double(sol.t_nodes[i]) + "," + format_double(sol.x_nodes[jx]) + "," +
                   format_double(sol.at(i, jx)) + "\n";
    csv += "# config_hash " + config_hash + "\n";
    detail::write_file(std::filesystem::path(out_dir) / "pde_solution.csv", csv);

    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["code_version"] = code_version();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : probes) {
        rows.push_back({{"t0", p.t0},
                        {"x0", p.x0},
                        {"u_fd", p.u_fd},
                        {"y0", p.y0},
                        {"y0_std_error", p.y0_std_error},
                        {"abs_error", p.abs_error}});
    }
    j["probes"] = rows;
    detail::write_file(std::filesystem::path(out_dir) / "pde_probes.json", j.dump(2) + "\n");
}

}  // namespace qbsde
