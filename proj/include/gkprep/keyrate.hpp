#pragma once

// Six-state secret-key rates with two-way advantage distillation, key per
// optical mode, and the repeaterless PLOB capacity.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gkprep/math.hpp"

namespace gkprep::keyrate {

// Logical Pauli channel coefficients.
struct PauliChannel {
    double q_x = 0.0, q_z = 0.0, q_y = 0.0;

    void validate() const {
        if (!(q_x >= 0.0) || !(q_z >= 0.0) || !(q_y >= 0.0) || q_x + q_z + q_y > 1.0 + 1e-12)
            throw std::domain_error("PauliChannel: probabilities must be nonnegative, sum <= 1");
    }
};

struct QberTriple {
    double e_x = 0.0, e_y = 0.0, e_z = 0.0;
};

struct BellDiagonal {
    double p00 = 1.0, p01 = 0.0, p10 = 0.0, p11 = 0.0;

    void validate() const {
        if (!(p00 >= 0.0) || !(p01 >= 0.0) || !(p10 >= 0.0) || !(p11 >= 0.0))
            throw std::domain_error("BellDiagonal: coefficients must be nonnegative");
        if (std::abs(p00 + p01 + p10 + p11 - 1.0) > 1e-12)
            throw std::domain_error("BellDiagonal: coefficients must sum to 1");
    }
};

// A flip in basis i disturbs the other two bases only.
inline QberTriple qber(const PauliChannel& ch) {
    ch.validate();
    return {ch.q_z + ch.q_y, ch.q_x + ch.q_z, ch.q_x + ch.q_y};
}

// Bell-diagonal coefficients for key generation in the Y basis.
inline BellDiagonal bell_coeffs_y_basis(double e_x, double e_y, double e_z) {
    BellDiagonal b;
    b.p00 = 1.0 - (e_x + e_z + e_y) / 2.0;
    b.p01 = (e_x + e_z - e_y) / 2.0;
    b.p10 = (-e_x + e_y + e_z) / 2.0;
    b.p11 = (e_x - e_z + e_y) / 2.0;
    for (double* p : {&b.p00, &b.p01, &b.p10, &b.p11}) {
        if (*p < 0.0) {
            if (*p < -1e-12)
                throw std::domain_error("bell_coeffs_y_basis: infeasible QBER triple");
            *p = 0.0;
        }
    }
    return b;
}

inline double binary_entropy(double p) {
    double h = 0.0;
    if (p > 0.0) h -= p * std::log2(p);
    if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
    return h;
}

inline double shannon_entropy4(double a, double b, double c, double d) {
    double h = 0.0;
    for (double p : {a, b, c, d})
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

// Asymptotic six-state key rate with the two-way advantage-distillation
// post-processing, clamped to [0, 1].
inline double ad_key_rate(const BellDiagonal& bell) {
    bell.validate();
    const double p00 = bell.p00, p01 = bell.p01, p10 = bell.p10, p11 = bell.p11;
    const double s0 = p00 + p01, s1 = p10 + p11;
    const double px0 = s0 * s0 + s1 * s1;
    const double px1 = 2.0 * s0 * s1;

    double branch1 = 1.0 - shannon_entropy4(p00, p01, p10, p11);
    if (px1 > 0.0) {
        const double arg = (p00 * p10 + p01 * p11) / (s0 * s1);
        branch1 += px1 / 2.0 * binary_entropy(arg);
    }

    double branch2 = 0.0;
    if (px0 > 0.0) {
        const double q00 = (p00 * p00 + p01 * p01) / px0;
        const double q10 = 2.0 * p00 * p01 / px0;
        const double q01 = (p10 * p10 + p11 * p11) / px0;
        const double q11 = 2.0 * p10 * p11 / px0;
        branch2 = px0 / 2.0 * (1.0 - shannon_entropy4(q00, q10, q01, q11));
    }

    return std::clamp(std::max(branch1, branch2), 0.0, 1.0);
}

// Key per optical mode: n GKP modes carry one logical qubit.
inline double key_per_mode(double r, int n) {
    if (n != 1 && n != 4 && n != 7)
        throw std::domain_error("key_per_mode: n must be 1, 4 or 7");
    return std::max(r, 0.0) / n;
}

// Repeaterless secret-key capacity of the pure loss channel,
// K(L) = -log2(1 - e^{-L/L0}).
inline double plob(double length_km, double l0_km = 22.0) {
    if (!(length_km >= 0.0))
        throw std::domain_error("plob: length must be nonnegative");
    if (length_km == 0.0) return std::numeric_limits<double>::infinity();
    return -std::log2(1.0 - std::exp(-length_km / l0_km));
}

// Key per mode from a QBER triple.
inline double key_from_qber(double e_x, double e_y, double e_z, int n) {
    return key_per_mode(ad_key_rate(bell_coeffs_y_basis(e_x, e_y, e_z)), n);
}

// Key per mode from end-to-end X/Z flip probabilities. Independent quadrature
// flips compose as q_x = Qx(1-Qz), q_z = Qz(1-Qx), q_y = Qx Qz.
inline double key_from_flip_probs(double q_big_x, double q_big_z, int n) {
    PauliChannel ch{q_big_x * (1.0 - q_big_z), q_big_z * (1.0 - q_big_x), q_big_x * q_big_z};
    const QberTriple e = qber(ch);
    return key_from_qber(e.e_x, e.e_y, e.e_z, n);
}

}  // namespace gkprep::keyrate
