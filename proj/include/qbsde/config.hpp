#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbsde/errors.hpp"
#include "qbsde/lsmc.hpp"
#include "qbsde/regularize.hpp"

namespace qbsde {

/// Configuration error carrying the offending field path (CLI exit code 2).
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& msg)
        : Error("config field '" + field + "': " + msg), field_path(field) {}
    std::string field_path;
};

/// Parsed scenario run settings. Every field has a stated default except the
/// seed, which must be given explicitly: reproducible runs never fall back
/// to entropy.
struct RunSettings {
    std::string scenario;
    double horizon = 1.0;
    long steps = 50;
    long paths = 100000;
    int dim = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;

    BasisSpec basis{4};
    bool basis_given = false;
    double ridge = 0.0;
    bool clamp_continuation = true;
    double z_clamp_quantile = 0.999;
    double picard_tol = 1e-10;
    int picard_max = 50;
    int picard_iter_max = 20;
    double picard_global_tol = 1e-4;

    std::vector<std::string> checks;
    bool checks_given = false;

    // study regularization
    std::vector<int> n_list = {2, 4, 8, 16};
    std::vector<int> k_list = {2, 4, 8, 16};
    int grid_per_axis = 257;
    TruncBox trunc;

    // pde crosscheck
    long nx = 400;
    long nt = 200;
    bool implicit_driver = false;
    std::vector<std::pair<double, double>> probes;

    int threads = 0;
    std::string output_dir = "out";

    /// Inline purely quadratic definition (scenario "pq-custom"): a sum of
    /// primitive coefficient pieces plus a terminal functional spec.
    nlohmann::json coefficient;  // array of piece objects
    nlohmann::json terminal;     // {"type": ...}

    BackwardSolverConfig backward_config() const {
        BackwardSolverConfig cfg;
        cfg.basis = basis;
        cfg.ridge = ridge;
        cfg.clamp_continuation = clamp_continuation;
        cfg.z_clamp_quantile = z_clamp_quantile;
        cfg.picard_tol = picard_tol;
        cfg.picard_max = picard_max;
        return cfg;
    }
    PicardConfig picard_config() const {
        PicardConfig cfg;
        cfg.basis = basis;
        cfg.ridge = ridge;
        cfg.iter_max = picard_iter_max;
        cfg.tol = picard_global_tol;
        return cfg;
    }

    /// Canonical JSON of the effective settings; hashed into every output.
    nlohmann::json canonical() const {
        nlohmann::json j;
        j["scenario"] = scenario;
        j["grid"] = {{"horizon", horizon}, {"steps", steps}};
        j["ensemble"] = {{"paths", paths}, {"dim", dim}, {"seed", seed}};
        j["solver"] = {{"basis_degree", basis.degree},
                       {"exp_scales", basis.exp_scales},
                       {"ridge", ridge},
                       {"clamp", clamp_continuation},
                       {"z_clamp_quantile", z_clamp_quantile},
                       {"picard_tol", picard_tol},
                       {"picard_max", picard_max},
                       {"picard_iter_max", picard_iter_max},
                       {"picard_global_tol", picard_global_tol}};
        j["checks"] = checks;
        j["study"] = {{"n_list", n_list},
                      {"k_list", k_list},
                      {"grid_per_axis", grid_per_axis},
                      {"trunc", {{"y_lo", trunc.y_lo},
                                 {"y_hi", trunc.y_hi},
                                 {"z_lo", trunc.z_lo},
                                 {"z_hi", trunc.z_hi}}}};
        nlohmann::json probe_list = nlohmann::json::array();
        for (const auto& [t, x] : probes) probe_list.push_back({t, x});
        j["pde"] = {{"nx", nx},
                    {"nt", nt},
                    {"implicit_driver", implicit_driver},
                    {"probes", probe_list}};
        // threads and output_dir are execution details, not provenance.
        j["coefficient"] = coefficient;
        j["terminal"] = terminal;
        return j;
    }

    std::string config_hash() const {
        const std::string dump = canonical().dump();
        std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a 64
        for (unsigned char c : dump) {
            h ^= c;
            h *= 0x100000001B3ull;
        }
        std::ostringstream os;
        os << std::hex << h;
        return os.str();
    }
};

/// Parse and validate a config document. Unknown scenarios, nonpositive
/// numerics and a missing seed are reported with their field path.
inline RunSettings parse_run_settings(const nlohmann::json& j) {
    RunSettings s;
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    if (!j.contains("scenario") || !j["scenario"].is_string())
        throw ConfigError("scenario", "required string naming a registered scenario");
    s.scenario = j["scenario"].get<std::string>();

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (g.contains("horizon")) s.horizon = g["horizon"].get<double>();
        if (g.contains("steps")) s.steps = g["steps"].get<long>();
        if (!(s.horizon > 0.0)) throw ConfigError("grid.horizon", "must be positive");
        if (s.steps < 1) throw ConfigError("grid.steps", "must be at least 1");
    }
    if (j.contains("ensemble")) {
        const auto& e = j["ensemble"];
        if (e.contains("paths")) s.paths = e["paths"].get<long>();
        if (e.contains("dim")) s.dim = e["dim"].get<int>();
        if (e.contains("seed")) {
            s.seed = e["seed"].get<std::uint64_t>();
            s.seed_given = true;
        }
        if (s.paths < 1) throw ConfigError("ensemble.paths", "must be positive");
        if (s.dim < 1) throw ConfigError("ensemble.dim", "must be positive");
    }
    if (!s.seed_given)
        throw ConfigError("ensemble.seed", "required; runs never use an entropy default");

    if (j.contains("solver")) {
        const auto& v = j["solver"];
        if (v.contains("basis_degree")) {
            s.basis.degree = v["basis_degree"].get<int>();
            s.basis_given = true;
            if (s.basis.degree < 0) throw ConfigError("solver.basis_degree", "must be >= 0");
        }
        if (v.contains("exp_scales")) {
            s.basis.exp_scales = v["exp_scales"].get<std::vector<double>>();
            s.basis_given = true;
        }
        if (v.contains("ridge")) s.ridge = v["ridge"].get<double>();
        if (s.ridge < 0.0) throw ConfigError("solver.ridge", "must be >= 0");
        if (v.contains("clamp")) s.clamp_continuation = v["clamp"].get<bool>();
        if (v.contains("z_clamp_quantile"))
            s.z_clamp_quantile = v["z_clamp_quantile"].get<double>();
        if (s.z_clamp_quantile <= 0.0 || s.z_clamp_quantile > 1.0)
            throw ConfigError("solver.z_clamp_quantile", "must lie in (0, 1]");
        if (v.contains("picard_tol")) s.picard_tol = v["picard_tol"].get<double>();
        if (v.contains("picard_max")) s.picard_max = v["picard_max"].get<int>();
        if (v.contains("picard_iter_max")) s.picard_iter_max = v["picard_iter_max"].get<int>();
        if (v.contains("picard_global_tol"))
            s.picard_global_tol = v["picard_global_tol"].get<double>();
        if (s.picard_max < 1 || s.picard_iter_max < 1)
            throw ConfigError("solver.picard_max", "iteration caps must be positive");
    }
    if (j.contains("checks")) {
        s.checks = j["checks"].get<std::vector<std::string>>();
        s.checks_given = true;
    }
    if (j.contains("study")) {
        const auto& v = j["study"];
        if (v.contains("n_list")) s.n_list = v["n_list"].get<std::vector<int>>();
        if (v.contains("k_list")) s.k_list = v["k_list"].get<std::vector<int>>();
        if (v.contains("grid_per_axis")) s.grid_per_axis = v["grid_per_axis"].get<int>();
        if (s.n_list.empty() || s.k_list.empty())
            throw ConfigError("study.n_list", "lists must be nonempty");
        for (int n : s.n_list)
            if (n < 1) throw ConfigError("study.n_list", "entries must be >= 1");
        for (int k : s.k_list)
            if (k < 1) throw ConfigError("study.k_list", "entries must be >= 1");
        if (v.contains("trunc")) {
            const auto& t = v["trunc"];
            if (t.contains("y_lo")) s.trunc.y_lo = t["y_lo"].get<double>();
            if (t.contains("y_hi")) s.trunc.y_hi = t["y_hi"].get<double>();
            if (t.contains("z_lo")) s.trunc.z_lo = t["z_lo"].get<double>();
            if (t.contains("z_hi")) s.trunc.z_hi = t["z_hi"].get<double>();
            if (!(s.trunc.y_lo < s.trunc.y_hi) || !(s.trunc.z_lo < s.trunc.z_hi))
                throw ConfigError("study.trunc", "box must be nonempty");
        }
    }
    if (j.contains("pde")) {
        const auto& v = j["pde"];
        if (v.contains("nx")) s.nx = v["nx"].get<long>();
        if (v.contains("nt")) s.nt = v["nt"].get<long>();
        if (s.nx < 16 || s.nt < 8) throw ConfigError("pde.nx", "need nx >= 16 and nt >= 8");
        if (v.contains("implicit_driver")) s.implicit_driver = v["implicit_driver"].get<bool>();
        if (v.contains("probes")) {
            for (const auto& p : v["probes"]) {
                if (!p.is_array() || p.size() != 2)
                    throw ConfigError("pde.probes", "each probe is a [t, x] pair");
                s.probes.emplace_back(p[0].get<double>(), p[1].get<double>());
            }
        }
    }
    if (j.contains("threads")) {
        s.threads = j["threads"].get<int>();
        if (s.threads < 0) throw ConfigError("threads", "must be >= 0");
    }
    if (j.contains("output_dir")) s.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("coefficient")) {
        if (!j["coefficient"].is_array())
            throw ConfigError("coefficient", "must be an array of piece objects");
        s.coefficient = j["coefficient"];
    }
    if (j.contains("terminal")) {
        if (!j["terminal"].is_object() || !j["terminal"].contains("type"))
            throw ConfigError("terminal", "must be an object with a 'type' field");
        s.terminal = j["terminal"];
    }
    return s;
}

inline RunSettings load_run_settings(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("<file>", "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& ex) {
        throw ConfigError("<file>", std::string("JSON parse failure: ") + ex.what());
    }
    return parse_run_settings(j);
}

}  // namespace qbsde
