#pragma once

// Configuration ingestion and the experiment drivers behind the CLI. Every
// run is described by one JSON document with a `kind` discriminator; unknown
// keys are rejected. All outputs are deterministic for a fixed (config, seed)
// apart from an explicit timestamp field that is excluded from cache keys.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gkprep/analytic.hpp"
#include "gkprep/cache.hpp"
#include "gkprep/cost.hpp"
#include "gkprep/keyrate.hpp"
#include "gkprep/math.hpp"
#include "gkprep/mc.hpp"
#include "gkprep/rescaling.hpp"

namespace gkprep::io {

using nlohmann::json;

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitBudgetExceeded = 3;
inline constexpr int kExitPrecisionExhausted = 4;

class config_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    int precision_digits = 60;
    std::uint64_t budget = 10'000'000;
};

namespace detail {

inline void require_keys(const json& j, const std::vector<std::string>& allowed) {
    if (!j.is_object()) throw config_error("config must be a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const auto& k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw config_error("unknown config key: " + item.key());
    }
}

inline const std::vector<std::string>& common_keys() {
    static const std::vector<std::string> keys{"kind",    "seed",   "out",
                                               "threads", "precision", "budget"};
    return keys;
}

inline std::vector<std::string> with_common(std::vector<std::string> extra) {
    auto keys = common_keys();
    keys.insert(keys.end(), extra.begin(), extra.end());
    return keys;
}

inline std::vector<double> number_list(const json& j, const std::string& what) {
    std::vector<double> out;
    if (j.is_number()) {
        out.push_back(j.get<double>());
    } else if (j.is_array()) {
        for (const auto& v : j) {
            if (!v.is_number()) throw config_error(what + ": expected numbers");
            out.push_back(v.get<double>());
        }
    } else {
        throw config_error(what + ": expected a number or an array of numbers");
    }
    return out;
}

inline Squeezing squeezing_from(const json& j) {
    const bool has_sigma = j.contains("sigma_gkp");
    const bool has_db = j.contains("squeezing_db");
    if (has_sigma == has_db)
        throw config_error("specify exactly one of sigma_gkp / squeezing_db");
    try {
        if (has_sigma) {
            const double sigma = j.at("sigma_gkp").get<double>();
            // sigma 0 expresses ideal (infinitely squeezed) ancillas
            if (sigma == 0.0)
                return Squeezing{0.0, std::numeric_limits<double>::infinity()};
            return Squeezing::from_sigma(sigma);
        }
        return Squeezing::from_db(j.at("squeezing_db").get<double>());
    } catch (const std::domain_error& e) {
        throw config_error(e.what());
    }
}

inline FiberParams fiber_from(const json& j) {
    FiberParams fiber{j.at("eta0").get<double>(), j.value("l0_km", 22.0)};
    try {
        fiber.validate();
    } catch (const std::domain_error& e) {
        throw config_error(e.what());
    }
    return fiber;
}

inline std::vector<Squeezing> squeezing_list_from(const json& j) {
    const bool has_sigma = j.contains("sigma_gkp");
    const bool has_db = j.contains("squeezing_db");
    if (has_sigma == has_db)
        throw config_error("specify exactly one of sigma_gkp / squeezing_db");
    std::vector<Squeezing> out;
    if (has_sigma)
        for (double s : number_list(j.at("sigma_gkp"), "sigma_gkp"))
            out.push_back(Squeezing::from_sigma(s));
    else
        for (double db : number_list(j.at("squeezing_db"), "squeezing_db"))
            out.push_back(Squeezing::from_db(db));
    return out;
}

inline std::string format_csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

inline CommonOptions common_options(const json& cfg, const CommonOptions& defaults) {
    CommonOptions opt = defaults;
    if (cfg.contains("seed")) opt.seed = cfg.at("seed").get<std::uint64_t>();
    if (cfg.contains("out")) opt.out_dir = cfg.at("out").get<std::string>();
    if (cfg.contains("threads")) opt.threads = cfg.at("threads").get<int>();
    if (cfg.contains("precision")) opt.precision_digits = cfg.at("precision").get<int>();
    if (cfg.contains("budget")) opt.budget = cfg.at("budget").get<std::uint64_t>();
    if (opt.threads < 1) throw config_error("threads must be >= 1");
    if (opt.precision_digits < 1 || opt.precision_digits > 240)
        throw config_error("precision must lie in [1, 240] digits");
    if (opt.budget < 10) throw config_error("budget must be at least 10 trials");
    return opt;
}

// ---- MC-backed key evaluation with on-disk memoization -------------------

struct ChainKeySource {
    mc::PhysParams phys;
    std::optional<codes::CodeName> code;
    double b = 0.1;
    int links = 100;
    std::uint64_t seed = 1;
    std::uint64_t budget = 10'000'000;
    int threads = 1;
    int precision_digits = 60;
    cache::EstimateCache* cache = nullptr;

    json cache_key(int n_multi, int n_all) const {
        json key;
        key["engine_version"] = kEngineVersion;
        key["eta0"] = phys.fiber.eta0;
        key["l0_km"] = phys.fiber.l0_km;
        key["sigma_gkp"] = phys.squeezing.sigma_gkp;
        key["code"] = code ? codes::to_string(*code) : "gkp-only";
        key["n_multi"] = n_multi;
        key["n_all"] = n_all;
        key["b"] = b;
        key["links"] = links;
        key["seed"] = seed;
        return key;
    }

    mc::SimEstimate estimate_for(int n_multi, int n_all) const {
        const json key = cache_key(n_multi, n_all);
        if (cache) {
            if (auto hit = cache->get(key)) {
                mc::SimEstimate est;
                est.p_err_x = hit->at("p_err_x").get<double>();
                est.p_err_z = hit->at("p_err_z").get<double>();
                est.stderr_x = hit->at("stderr_x").get<double>();
                est.stderr_z = hit->at("stderr_z").get<double>();
                est.per_link_p_x = hit->at("per_link_p_x").get<double>();
                est.per_link_p_z = hit->at("per_link_p_z").get<double>();
                est.trials = hit->at("trials").get<std::uint64_t>();
                est.converged = hit->at("converged").get<bool>();
                return est;
            }
        }
        mc::ChainConfig chain{phys, code, n_multi, n_all, links, precision_digits, true};
        const auto model = mc::ChainModel::build(chain);
        mc::EstimateOptions opt;
        opt.rel_error = b;
        opt.budget = budget;
        opt.threads = threads;
        mc::SimEstimate est;
        if (model.is_noiseless()) {
            opt.budget = 10;
            est = mc::estimate_chain(model, seed, opt);
            est.converged = true;
        } else {
            est = mc::estimate_chain(model, seed, opt);
        }
        if (cache) {
            json value;
            value["p_err_x"] = est.p_err_x;
            value["p_err_z"] = est.p_err_z;
            value["stderr_x"] = est.stderr_x;
            value["stderr_z"] = est.stderr_z;
            value["per_link_p_x"] = est.per_link_p_x;
            value["per_link_p_z"] = est.per_link_p_z;
            value["trials"] = est.trials;
            value["converged"] = est.converged;
            cache->put(key, value);
        }
        return est;
    }

    // Key per optical mode at a distance, from the memoized chain estimate.
    double key_at(int n_multi, int n_all, double total_km, double p_scale = 1.0) const {
        const auto est = estimate_for(n_multi, n_all);
        const double density = code ? n_multi : n_all;
        const double qx = mc::chain_flip_over_distance(p_scale * est.p_err_x, density,
                                                       total_km, links);
        const double qz = mc::chain_flip_over_distance(p_scale * est.p_err_z, density,
                                                       total_km, links);
        const int n = code ? codes::build_code(*code).n : 1;
        return keyrate::key_from_flip_probs(qx, qz, n);
    }

    cost::KeyFn key_fn(double p_scale = 1.0) const {
        return [this, p_scale](int nm, int na, double total_km) {
            return key_at(nm, na, total_km, p_scale);
        };
    }
};

// ---- drivers --------------------------------------------------------------

// Achievable-distance table of the analytical GKP-chain model.
inline int run_analytic(const json& cfg, const CommonOptions& defaults) {
    detail::require_keys(cfg, detail::with_common({"eta0", "sigma_gkp", "squeezing_db",
                                                   "threshold", "l0_km"}));
    const CommonOptions opt = common_options(cfg, defaults);
    const double threshold = cfg.value("threshold", 0.01);

    std::vector<double> eta0s =
        cfg.contains("eta0") ? detail::number_list(cfg.at("eta0"), "eta0")
                             : std::vector<double>{};
    std::vector<Squeezing> squeezes;
    if (cfg.contains("sigma_gkp") || cfg.contains("squeezing_db"))
        squeezes = detail::squeezing_list_from(cfg);

    std::ostringstream csv;
    csv << "eta0,sigma_gkp,optimal_spacing_km,achievable_distance_km\n";
    const double l0_km = cfg.value("l0_km", 22.0);
    for (double eta0 : eta0s) {
        for (const Squeezing& s : squeezes) {
            FiberParams fiber{eta0, l0_km};
            const double dist = analytic::achievable_distance(fiber, s, threshold);
            const double spacing =
                dist > 0.0 ? analytic::optimize_spacing(fiber, s, dist).first
                           : analytic::kMinSpacingKm;
            csv << detail::format_csv_double(eta0) << ','
                << detail::format_csv_double(s.sigma_gkp) << ','
                << detail::format_csv_double(spacing) << ','
                << detail::format_csv_double(dist) << '\n';
        }
    }
    detail::write_text(std::filesystem::path(opt.out_dir) / "analytic.csv", csv.str());
    return kExitOk;
}

// Chain Monte-Carlo estimate, persisted as JSON.
inline int run_simulate(const json& cfg, const CommonOptions& defaults) {
    detail::require_keys(cfg, detail::with_common({"eta0", "sigma_gkp", "squeezing_db",
                                                   "code", "n_multi", "n_all", "links",
                                                   "b", "use_analog", "trial_log",
                                                   "l0_km"}));
    const CommonOptions opt = common_options(cfg, defaults);

    mc::ChainConfig chain;
    chain.phys.fiber = detail::fiber_from(cfg);
    chain.phys.squeezing = detail::squeezing_from(cfg);
    const std::string code_str = cfg.value("code", std::string("gkp-only"));
    if (code_str != "gkp-only") chain.code = codes::code_from_string(code_str);
    chain.n_multi = cfg.value("n_multi", 1);
    chain.n_all = cfg.value("n_all", chain.n_multi);
    chain.links = cfg.value("links", 100);
    chain.precision_digits = opt.precision_digits;
    chain.use_analog = cfg.value("use_analog", true);
    const double b = cfg.value("b", 0.1);
    const bool want_log = cfg.value("trial_log", false);

    try {
        chain.validate();
    } catch (const std::domain_error& e) {
        throw config_error(e.what());
    }

    const auto model = mc::ChainModel::build(chain);
    mc::EstimateOptions eopt;
    eopt.rel_error = b;
    eopt.budget = opt.budget;
    eopt.threads = opt.threads;
    std::vector<std::uint8_t> log;
    if (want_log) eopt.trial_log = &log;

    mc::SimEstimate est;
    if (model.is_noiseless()) {
        eopt.budget = 10;
        est = mc::estimate_chain(model, opt.seed, eopt);
        est.converged = true;
    } else {
        est = mc::estimate_chain(model, opt.seed, eopt);
    }

    json out;
    out["kind"] = "simulate";
    out["engine_version"] = kEngineVersion;
    out["config"] = {{"eta0", chain.phys.fiber.eta0},
                     {"sigma_gkp", chain.phys.squeezing.sigma_gkp},
                     {"squeezing_db", chain.phys.squeezing.db},
                     {"code", code_str},
                     {"n_multi", chain.n_multi},
                     {"n_all", chain.n_all},
                     {"links", chain.links},
                     {"b", b},
                     {"use_analog", chain.use_analog},
                     {"seed", opt.seed}};
    out["estimate"] = {{"p_err_x", est.p_err_x},
                       {"p_err_z", est.p_err_z},
                       {"stderr_x", est.stderr_x},
                       {"stderr_z", est.stderr_z},
                       {"per_link_p_x", est.per_link_p_x},
                       {"per_link_p_z", est.per_link_p_z},
                       {"trials", est.trials},
                       {"converged", est.converged}};
    out["timestamp"] = detail::timestamp_utc();

    const auto out_path = std::filesystem::path(opt.out_dir) / "estimate.json";
    detail::write_text(out_path, out.dump(2) + "\n");
    if (want_log)
        mc::write_trial_log((std::filesystem::path(opt.out_dir) / "trials.bin").string(), log);
    return est.converged ? kExitOk : kExitBudgetExceeded;
}

// Logical error probability versus loss for the four single-link schemes.
inline int run_single_link(const json& cfg, const CommonOptions& defaults) {
    detail::require_keys(cfg, detail::with_common({"gamma_min", "gamma_max", "points",
                                                   "schemes", "b"}));
    const CommonOptions opt = common_options(cfg, defaults);
    const double gmin = cfg.value("gamma_min", 0.08);
    const double gmax = cfg.value("gamma_max", 0.2);
    const int points = cfg.value("points", 100);
    const double b = cfg.value("b", 0.1);
    if (points < 1) throw config_error("points must be >= 1");
    if (!(gmin > 0.0) || !(gmax < 1.0) || !(gmin <= gmax))
        throw config_error("gamma range must satisfy 0 < gamma_min <= gamma_max < 1");

    std::vector<mc::LinkScheme> schemes;
    if (cfg.contains("schemes")) {
        for (const auto& s : cfg.at("schemes"))
            schemes.push_back(mc::link_scheme_from_string(s.get<std::string>()));
    } else {
        schemes = {mc::LinkScheme::gkp_only, mc::LinkScheme::c4_analog,
                   mc::LinkScheme::steane7_analog, mc::LinkScheme::steane7_no_analog};
    }

    std::vector<double> gammas;
    for (int i = 0; i < points; ++i)
        gammas.push_back(points == 1 ? gmin : gmin + (gmax - gmin) * i / (points - 1));

    mc::EstimateOptions eopt;
    eopt.rel_error = b;
    eopt.budget = opt.budget;
    eopt.threads = opt.threads;
    eopt.links = 1;

    std::ostringstream csv;
    csv << "gamma,scheme,p_err,stderr\n";
    for (const auto scheme : schemes) {
        const auto rows = mc::single_link_experiment(gammas, scheme, opt.seed, eopt);
        for (const auto& r : rows)
            csv << detail::format_csv_double(r.gamma) << ',' << mc::to_string(scheme)
                << ',' << detail::format_csv_double(r.p_err) << ','
                << detail::format_csv_double(r.std_err) << '\n';
    }
    detail::write_text(std::filesystem::path(opt.out_dir) / "single_link.csv", csv.str());
    return kExitOk;
}

// Per-distance cost-optimal layouts for the hybrid and type-A-only variants.
inline int run_cost(const json& cfg, const CommonOptions& defaults) {
    detail::require_keys(cfg, detail::with_common({"eta0", "sigma_gkp", "squeezing_db",
                                                   "code", "distance_min", "distance_max",
                                                   "distance_step", "objective", "b",
                                                   "links", "l0_km", "max_density"}));
    const CommonOptions opt = common_options(cfg, defaults);

    ChainKeySource src;
    src.phys.fiber = detail::fiber_from(cfg);
    src.phys.squeezing = detail::squeezing_from(cfg);
    const auto code = codes::code_from_string(cfg.at("code").get<std::string>());
    src.code = code;
    src.b = cfg.value("b", 0.1);
    src.links = cfg.value("links", 100);
    src.seed = opt.seed;
    src.budget = opt.budget;
    src.threads = opt.threads;
    src.precision_digits = opt.precision_digits;
    cache::EstimateCache estimate_cache(std::filesystem::path(opt.out_dir) / "cache");
    src.cache = &estimate_cache;

    const double dmin = cfg.value("distance_min", 500.0);
    const double dmax = cfg.value("distance_max", 10000.0);
    const double dstep = cfg.value("distance_step", 500.0);
    if (!(dmin > 0.0) || !(dmax >= dmin) || !(dstep > 0.0))
        throw config_error("invalid distance grid");
    const int max_density = cfg.value("max_density", cost::kMaxStationDensity);
    if (max_density < 1 || max_density > cost::kMaxStationDensity)
        throw config_error("max_density must lie in [1, 40]");
    const std::string objective_str = cfg.value("objective", std::string("min-cost"));
    cost::Objective objective;
    if (objective_str == "min-cost")
        objective = cost::Objective::min_cost;
    else if (objective_str == "max-key")
        objective = cost::Objective::max_key;
    else
        throw config_error("objective must be min-cost or max-key");

    const auto key_fn = src.key_fn();
    std::ostringstream csv;
    csv << "constraint," << cost::csv_header() << '\n';
    json reports = json::array();
    for (double d = dmin; d <= dmax + 1e-9; d += dstep) {
        for (const auto constraint : {cost::Constraint::hybrid, cost::Constraint::type_a_only}) {
            const auto report = cost::optimize(src.phys.fiber, src.phys.squeezing, code, d,
                                               objective, constraint, key_fn, max_density);
            const char* label = constraint == cost::Constraint::hybrid ? "hybrid" : "type-a-only";
            if (report) {
                csv << label << ',' << cost::csv_row(*report) << '\n';
                json entry = cost::to_json(*report);
                entry["constraint"] = label;
                reports.push_back(entry);
            } else {
                csv << label << ',' << detail::format_csv_double(d) << ','
                    << codes::to_string(code) << ",0,0,0,inf,inf\n";
                reports.push_back({{"constraint", label},
                                   {"distance_km", d},
                                   {"code", codes::to_string(code)},
                                   {"feasible", false}});
            }
        }
    }
    detail::write_text(std::filesystem::path(opt.out_dir) / "cost.csv", csv.str());
    detail::write_text(std::filesystem::path(opt.out_dir) / "cost.json",
                       reports.dump(2) + "\n");
    return kExitOk;
}

inline int run_config(const json& cfg, const CommonOptions& defaults);

// A sweep executes a list of sub-runs in order.
inline int run_sweep(const json& cfg, const CommonOptions& defaults) {
    detail::require_keys(cfg, detail::with_common({"runs"}));
    const CommonOptions opt = common_options(cfg, defaults);
    if (!cfg.contains("runs") || !cfg.at("runs").is_array())
        throw config_error("sweep requires a runs array");
    int worst = kExitOk;
    int index = 0;
    for (const auto& sub : cfg.at("runs")) {
        CommonOptions sub_defaults = opt;
        sub_defaults.out_dir =
            (std::filesystem::path(opt.out_dir) / ("run-" + std::to_string(index))).string();
        const int rc = run_config(sub, sub_defaults);
        worst = std::max(worst, rc);
        ++index;
    }
    return worst;
}

inline int run_config(const json& cfg, const CommonOptions& defaults) {
    if (!cfg.is_object() || !cfg.contains("kind"))
        throw config_error("config requires a kind field");
    const std::string kind = cfg.at("kind").get<std::string>();
    if (kind == "analytic") return run_analytic(cfg, defaults);
    if (kind == "simulate") return run_simulate(cfg, defaults);
    if (kind == "single-link") return run_single_link(cfg, defaults);
    if (kind == "cost") return run_cost(cfg, defaults);
    if (kind == "sweep") return run_sweep(cfg, defaults);
    throw config_error("unknown config kind: " + kind);
}

inline json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    try {
        json cfg;
        in >> cfg;
        return cfg;
    } catch (const json::exception& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
}

}  // namespace gkprep::io
