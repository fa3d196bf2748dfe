#pragma once

// Scalar building blocks for GKP shift-error arithmetic: modular reduction,
// squeezing conversions, fibre transmissivity, logical flip probabilities and
// the analog error likelihood of a measured GKP syndrome.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gkprep {

inline constexpr double kPi = std::numbers::pi;
inline const double kSqrtPi = std::sqrt(kPi);

// Finite squeezing of a GKP mode. sigma_gkp is the standard deviation of the
// peak displacement in quadrature units, db the equivalent squeezing in
// decibels: db = -10 log10(2 sigma_gkp^2). Both fields are kept consistent.
struct Squeezing {
    double sigma_gkp = 0.0;
    double db = 0.0;

    static Squeezing from_sigma(double sigma) {
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw std::domain_error("Squeezing: sigma_gkp must be positive and finite");
        return {sigma, -10.0 * std::log10(2.0 * sigma * sigma)};
    }

    static Squeezing from_db(double db) {
        if (!std::isfinite(db))
            throw std::domain_error("Squeezing: dB value must be finite");
        return {std::sqrt(0.5 * std::pow(10.0, -db / 10.0)), db};
    }

    // Envelope width of the approximate GKP state with the same peak variance,
    // sigma^2 = (1 - e^{-delta^2}) / (1 + e^{-delta^2}).
    double delta() const {
        const double s2 = sigma_gkp * sigma_gkp;
        if (!(s2 < 1.0))
            throw std::domain_error("Squeezing: no envelope width for sigma_gkp >= 1");
        return std::sqrt(std::log((1.0 + s2) / (1.0 - s2)));
    }
};

// Lossy-channel parameters. eta0 is the photon in/out-coupling efficiency,
// l0_km the attenuation length (22 km at telecom frequency).
struct FiberParams {
    double eta0 = 1.0;
    double l0_km = 22.0;

    void validate() const {
        if (!(eta0 > 0.0) || !(eta0 <= 1.0))
            throw std::domain_error("FiberParams: eta0 must be in (0, 1]");
        if (!(l0_km > 0.0))
            throw std::domain_error("FiberParams: attenuation length must be positive");
    }
};

// A real displacement in quadrature units.
struct Shift {
    double value = 0.0;
};

// Reduce x to the interval [-s/2, s/2), congruent to x modulo s.
inline double centered_mod(double x, double s) {
    if (!(s > 0.0))
        throw std::domain_error("centered_mod: modulus must be positive");
    double r = x - s * std::floor(x / s + 0.5);
    if (r >= s / 2.0) r -= s;
    if (r < -s / 2.0) r += s;
    return r;
}

// Total transmissivity eta = eta0 * exp(-L / L0) of a fibre segment.
inline double transmissivity(const FiberParams& fiber, double length_km) {
    fiber.validate();
    if (!(length_km >= 0.0))
        throw std::domain_error("transmissivity: length must be nonnegative");
    return fiber.eta0 * std::exp(-length_km / fiber.l0_km);
}

// Gain of the pre-amplification that turns the loss channel into a
// displacement channel.
inline double amplification_gain(double eta) {
    if (!(eta > 0.0) || !(eta <= 1.0))
        throw std::domain_error("amplification_gain: eta must be in (0, 1]");
    return 1.0 / eta;
}

// Standard deviation of the displacement channel equivalent to a pure loss
// channel of transmissivity eta after quantum-limited pre-amplification.
inline double loss_to_sigma(double eta) {
    if (!(eta > 0.0) || !(eta <= 1.0))
        throw std::domain_error("loss_to_sigma: eta must be in (0, 1]");
    return std::sqrt(1.0 - eta);
}

// Probability that a Gaussian shift of standard deviation sigma exceeds the
// sqrt(pi)/2 decision boundary in one quadrature: erfc(sqrt(pi / (8 sigma^2))).
inline double flip_prob(double sigma) {
    if (!(sigma >= 0.0))
        throw std::domain_error("flip_prob: sigma must be nonnegative");
    if (sigma == 0.0) return 0.0;
    return std::erfc(std::sqrt(kPi / (8.0 * sigma * sigma)));
}

// Likelihood that the feedback displacement after measuring syndrome x0 caused
// a logical flip, for shifts drawn with standard deviation sigma:
//   p = sum_{odd m} exp(-(x0 - m sqrt(pi))^2 / 2 sigma^2) / sum_{all m} (...).
// The sums run over |m| <= 8 and are extended until the relative change of
// both drops below 1e-15.
inline double error_likelihood(double sigma, double x0) {
    if (!(sigma > 0.0))
        throw std::domain_error("error_likelihood: sigma must be positive");
    if (!(x0 >= -kSqrtPi / 2.0) || !(x0 < kSqrtPi / 2.0))
        throw std::domain_error("error_likelihood: x0 outside [-sqrt(pi)/2, sqrt(pi)/2)");

    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    double odd = 0.0, even = 0.0;
    for (int m = 0;; ++m) {
        double added = 0.0;
        for (int sign = 0; sign < (m == 0 ? 1 : 2); ++sign) {
            const int mm = (sign == 0) ? m : -m;
            const double d = x0 - mm * kSqrtPi;
            const double arg = d * d * inv_two_var;
            if (arg > 746.0) continue;  // exp underflows to zero
            const double term = std::exp(-arg);
            added += term;
            ((mm % 2 + 2) % 2 == 1 ? odd : even) += term;
        }
        if (m >= 8) {
            const double total = odd + even;
            if (total > 0.0 && added < 1e-15 * total) break;
            if (m > 64) break;  // exhausted double range long before this
        }
    }
    const double total = odd + even;
    return total > 0.0 ? odd / total : 0.5;
}

// Probability of an odd number of independent flips, each of probability p,
// over n repetitions: (1 - (1 - 2p)^n) / 2. Real n is allowed for the
// continuous chain-length exponent.
inline double odd_error_aggregate(double p, double n) {
    if (!(p >= 0.0) || !(p <= 1.0))
        throw std::domain_error("odd_error_aggregate: p must be in [0, 1]");
    if (!(n > 0.0))
        throw std::domain_error("odd_error_aggregate: n must be positive");
    const double base = 1.0 - 2.0 * p;
    if (base < 0.0 && n != std::floor(n))
        throw std::domain_error("odd_error_aggregate: non-integer n requires p <= 1/2");
    return (1.0 - std::pow(base, n)) / 2.0;
}

}  // namespace gkprep
