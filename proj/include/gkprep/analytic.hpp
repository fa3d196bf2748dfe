#pragma once

// Closed-form model of the single-level GKP repeater chain: effective channel
// variance with the ancilla noise folded into the channel, per-link flip
// probability, end-to-end QBER, spacing optimization and the achievable
// distance search.

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gkprep/keyrate.hpp"
#include "gkprep/math.hpp"
#include "gkprep/rescaling.hpp"

namespace gkprep::analytic {

inline constexpr double kMinSpacingKm = 0.25;
inline constexpr double kMaxSpacingKm = 1.5;
inline constexpr double kMaxSearchKm = 10000.0;

struct GkpChainConfig {
    FiberParams fiber;
    Squeezing squeezing;
    double spacing_km = kMinSpacingKm;
    double total_km = 0.0;

    void validate() const {
        fiber.validate();
        if (!(spacing_km >= kMinSpacingKm) || !(spacing_km <= kMaxSpacingKm))
            throw std::domain_error("GkpChainConfig: spacing must lie in [0.25, 1.5] km");
        if (!(total_km >= 0.0))
            throw std::domain_error("GkpChainConfig: total distance must be nonnegative");
    }
};

// Effective per-link displacement variance seen by an ideal corrector:
// sigma_eff^2 = (3 sg^2 + st^2 + sqrt((sg^2 + st^2)(5 sg^2 + st^2))) / 2.
inline double sigma_eff_sq(const GkpChainConfig& cfg) {
    cfg.validate();
    const double g2 = cfg.squeezing.sigma_gkp * cfg.squeezing.sigma_gkp;
    const double t2 = 1.0 - transmissivity(cfg.fiber, cfg.spacing_km);
    return 0.5 * (3.0 * g2 + t2 + std::sqrt((g2 + t2) * (5.0 * g2 + t2)));
}

// Linearized residual variances of the exact correction map and of its
// channel-absorbed approximation with alpha = sqrt(c_opt). The two expressions
// are evaluated independently; they agree identically.
inline std::pair<double, double> error_into_channel_check(double sigma_data,
                                                          double sigma_gkp) {
    if (!(sigma_data > 0.0) || !(sigma_gkp > 0.0))
        throw std::domain_error("error_into_channel_check: sigmas must be positive");
    const double c = rescaling::single_round_c(sigma_data, sigma_gkp);
    const double d2 = sigma_data * sigma_data, g2 = sigma_gkp * sigma_gkp;
    const double exact = (1.0 - c) * (1.0 - c) * d2 + c * c * g2;
    const double alpha = std::sqrt(c);
    const double approx = alpha * alpha * g2;
    return {exact, approx};
}

// QBER triple of the chain; the number of links total/spacing enters as a real
// exponent.
inline keyrate::QberTriple chain_qber(const GkpChainConfig& cfg) {
    cfg.validate();
    if (cfg.total_km == 0.0) return {0.0, 0.0, 0.0};
    const double p_link = flip_prob(std::sqrt(sigma_eff_sq(cfg)));
    const double n_links = cfg.total_km / cfg.spacing_km;
    const double q = odd_error_aggregate(p_link, n_links);
    return {q, 2.0 * q * (1.0 - q), q};
}

inline double key_per_mode_at(const FiberParams& fiber, const Squeezing& squeezing,
                              double spacing_km, double total_km) {
    const GkpChainConfig cfg{fiber, squeezing, spacing_km, total_km};
    const keyrate::QberTriple e = chain_qber(cfg);
    return keyrate::key_from_qber(e.e_x, e.e_y, e.e_z, 1);
}

// Maximize key per mode over the repeater spacing: 26-point uniform grid on
// [0.25, 1.5] km plus one local refinement pass, ties resolved toward the
// smaller spacing.
inline std::pair<double, double> optimize_spacing(const FiberParams& fiber,
                                                  const Squeezing& squeezing,
                                                  double total_km) {
    constexpr int kGrid = 26;
    auto scan = [&](double lo, double hi) {
        double best_s = lo, best_k = -1.0;
        for (int i = 0; i < kGrid; ++i) {
            const double s = lo + (hi - lo) * i / (kGrid - 1);
            const double k = key_per_mode_at(fiber, squeezing, s, total_km);
            if (k > best_k) {
                best_k = k;
                best_s = s;
            }
        }
        return std::make_pair(best_s, best_k);
    };

    auto [s0, k0] = scan(kMinSpacingKm, kMaxSpacingKm);
    const double step = (kMaxSpacingKm - kMinSpacingKm) / (kGrid - 1);
    const double lo = std::max(kMinSpacingKm, s0 - step);
    const double hi = std::min(kMaxSpacingKm, s0 + step);
    auto [s1, k1] = scan(lo, hi);
    return k1 > k0 ? std::make_pair(s1, k1) : std::make_pair(s0, k0);
}

// Largest distance with key per mode above the threshold, resolved to about
// 10 km by ten bisection steps over [0, 10000] km. Monotonicity of the key in
// distance is asserted along the search path.
inline double achievable_distance(const FiberParams& fiber, const Squeezing& squeezing,
                                  double threshold = 0.01) {
    auto key_at = [&](double d) {
        return d == 0.0 ? 1.0 : optimize_spacing(fiber, squeezing, d).second;
    };

    std::vector<std::pair<double, double>> path;
    auto eval = [&](double d) {
        const double k = key_at(d);
        for (const auto& [pd, pk] : path) {
            const bool ordered = (pd <= d) ? (pk + 1e-12 >= k) : (k + 1e-12 >= pk);
            if (!ordered)
                throw std::logic_error("achievable_distance: key not monotone in distance");
        }
        path.emplace_back(d, k);
        return k;
    };

    if (!(eval(0.0) > threshold)) return 0.0;
    if (eval(kMaxSearchKm) > threshold) return kMaxSearchKm;

    double lo = 0.0, hi = kMaxSearchKm;
    for (int i = 0; i < 10; ++i) {
        const double mid = (lo + hi) / 2.0;
        if (eval(mid) > threshold)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace gkprep::analytic
