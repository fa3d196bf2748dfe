#pragma once

// Repeater-placement configurations, the storage-step cost function, latency
// and throughput estimates, and the per-distance layout optimizer.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gkprep/codes.hpp"
#include "gkprep/keyrate.hpp"
#include "gkprep/math.hpp"
#include "gkprep/schedule.hpp"

namespace gkprep::cost {

inline constexpr int kMaxStationDensity = 40;  // 250 m minimum spacing
inline constexpr double kDefaultFiberSpeedKmPerS = 2.0e5;

struct RepeaterConfig {
    FiberParams fiber;
    Squeezing squeezing;
    std::optional<codes::CodeName> code;  // nullopt: GKP-only chain
    int n_multi = 1;
    int n_all = 1;
    double total_km = 0.0;

    void validate() const {
        fiber.validate();
        if (n_multi < 1 || n_all < n_multi || n_all > kMaxStationDensity)
            throw std::domain_error("RepeaterConfig: require 1 <= n_multi <= n_all <= 40");
        if (n_all % n_multi != 0)
            throw std::domain_error("RepeaterConfig: n_all must be a multiple of n_multi");
        if (!(total_km > 0.0))
            throw std::domain_error("RepeaterConfig: total distance must be positive");
    }
};

struct CostReport {
    RepeaterConfig config;
    double key_per_mode = 0.0;
    double cost = 0.0;
    double normalized_cost = 0.0;
    double latency_steps = 0.0;  // in units of tau0, excluding the fibre term
    double throughput_estimate = 0.0;
};

// (t_B, t_A) storage-step costs for the outer code, from the station
// schedules.
inline std::pair<int, int> station_costs(codes::CodeName code) {
    return schedule::station_costs(code);
}

// C = [ (L/10) (t_B (N_all - N_multi) + t_A N_multi) + t_A ] / r'. The
// trailing t_A pays for the encoding station; a nonpositive key yields the
// infinite-cost sentinel.
inline double cost(const RepeaterConfig& config, double key_per_mode) {
    config.validate();
    if (!config.code)
        throw std::domain_error("cost: the cost model applies to concatenated schemes");
    if (!(key_per_mode > 0.0)) return std::numeric_limits<double>::infinity();
    const auto [t_b, t_a] = station_costs(*config.code);
    const double per_10km =
        static_cast<double>(t_b) * (config.n_all - config.n_multi) +
        static_cast<double>(t_a) * config.n_multi;
    return (config.total_km / 10.0 * per_10km + t_a) / key_per_mode;
}

inline double normalized_cost(const RepeaterConfig& config, double key_per_mode) {
    return cost(config, key_per_mode) / config.total_km;
}

// All (n_multi, n_all) pairs with n_all a multiple of n_multi and at most
// max_density stations per 10 km.
inline std::vector<std::pair<int, int>> enumerate_configs(int max_density = kMaxStationDensity) {
    std::vector<std::pair<int, int>> out;
    for (int nm = 1; nm <= max_density; ++nm)
        for (int na = nm; na <= max_density; na += nm) out.emplace_back(nm, na);
    return out;
}

// Data-mode storage duration per station type in units of tau0.
inline double tau_multi_steps(codes::CodeName code) {
    return schedule::data_mode_steps(code, schedule::StationType::type_a);
}

inline double tau_gkp_steps() {
    return schedule::data_mode_steps(std::nullopt, schedule::StationType::type_b);
}

// Transmission time of the first encoded qubit:
//   t_l = L/c + (N + 1) tau_A + (m N + n - 1) tau_B
// for the concatenated schemes and t_l = L/c + (m_GKP + 1) tau_B for the GKP
// chain. Returned in seconds for the given tau0.
inline double latency(const RepeaterConfig& config, double tau0_seconds = 1.0,
                      double fiber_speed_km_per_s = kDefaultFiberSpeedKmPerS) {
    config.validate();
    const double fibre = config.total_km / fiber_speed_km_per_s;
    if (!config.code) {
        const double m_gkp = static_cast<double>(config.n_all) * config.total_km / 10.0;
        return fibre + (m_gkp + 1.0) * tau_gkp_steps() * tau0_seconds;
    }
    const double n_type_a = static_cast<double>(config.n_multi) * config.total_km / 10.0;
    const double m = static_cast<double>(config.n_all) / config.n_multi - 1.0;
    const int n_code = codes::build_code(*config.code).n;
    const double steps = (n_type_a + 1.0) * tau_multi_steps(*config.code) +
                         (m * n_type_a + (n_code - 1.0)) * tau_gkp_steps();
    return fibre + steps * tau0_seconds;
}

// Secret key per unit time, limited by the data-mode storage duration of the
// slowest station type.
inline double throughput(double key_rate, std::optional<codes::CodeName> code,
                         double tau0_seconds = 1.0) {
    if (!(key_rate >= 0.0)) throw std::domain_error("throughput: key rate must be nonnegative");
    const double tau = code ? tau_multi_steps(*code) : tau_gkp_steps();
    return key_rate / (tau * tau0_seconds);
}

enum class Objective { max_key, min_cost };
enum class Constraint { hybrid, type_a_only };

// Key per optical mode of a candidate layout at the given total distance.
using KeyFn = std::function<double(int n_multi, int n_all, double total_km)>;

// Scan the enumerated layouts; ties prefer fewer type-A stations, then fewer
// stations in total. Layouts without positive key are infeasible.
inline std::optional<CostReport> optimize(const FiberParams& fiber, const Squeezing& squeezing,
                                          codes::CodeName code, double total_km,
                                          Objective objective, Constraint constraint,
                                          const KeyFn& key_fn,
                                          int max_density = kMaxStationDensity) {
    std::optional<CostReport> best;
    for (const auto& [nm, na] : enumerate_configs(max_density)) {
        if (constraint == Constraint::type_a_only && nm != na) continue;
        const double key = key_fn(nm, na, total_km);
        if (!(key > 0.0)) continue;
        RepeaterConfig cfg{fiber, squeezing, code, nm, na, total_km};
        CostReport report;
        report.config = cfg;
        report.key_per_mode = key;
        report.cost = cost(cfg, key);
        report.normalized_cost = report.cost / total_km;
        report.latency_steps = latency(cfg, 1.0, std::numeric_limits<double>::infinity());
        report.throughput_estimate = throughput(key, code);

        auto better = [&](const CostReport& a, const CostReport& b) {
            const double va = objective == Objective::max_key ? -a.key_per_mode : a.cost;
            const double vb = objective == Objective::max_key ? -b.key_per_mode : b.cost;
            if (va != vb) return va < vb;
            if (a.config.n_multi != b.config.n_multi)
                return a.config.n_multi < b.config.n_multi;
            return a.config.n_all < b.config.n_all;
        };
        if (!best || better(report, *best)) best = report;
    }
    return best;
}

inline nlohmann::json to_json(const CostReport& r) {
    return {{"distance_km", r.config.total_km},
            {"code", r.config.code ? codes::to_string(*r.config.code) : "gkp-only"},
            {"n_multi", r.config.n_multi},
            {"n_all", r.config.n_all},
            {"key_per_mode", r.key_per_mode},
            {"cost", r.cost},
            {"normalized_cost", r.normalized_cost},
            {"latency_steps", r.latency_steps},
            {"throughput_estimate", r.throughput_estimate}};
}

inline std::string csv_header() {
    return "distance_km,code,n_multi,n_all,key_per_mode,cost,normalized_cost";
}

inline std::string csv_row(const CostReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.10g,%s,%d,%d,%.10g,%.10g,%.10g",
                  r.config.total_km,
                  r.config.code ? codes::to_string(*r.config.code).c_str() : "gkp-only",
                  r.config.n_multi, r.config.n_all, r.key_per_mode, r.cost,
                  r.normalized_cost);
    return buf;
}

}  // namespace gkprep::cost
