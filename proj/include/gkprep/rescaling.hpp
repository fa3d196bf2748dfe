#pragma once

// Variance-minimizing rescaling coefficients for chains of GKP syndrome
// measurements. The postponed-correction problem is a quadratic minimization
// Var = a + b.x + x.A.x whose covariance matrix mixes scales spanning many
// orders of magnitude, so assembly and inversion run in multiprecision
// arithmetic (60 decimal digits by default) before narrowing to double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <json.hpp>

namespace gkprep::rescaling {

// Environment noise (variances) injected between consecutive syndrome
// extractions, plus the residual variance entering the chain.
struct NoiseChainSpec {
    double sigma_gkp = 0.0;
    std::vector<double> noise_variances;
    double initial_variance = 0.0;

    void validate() const {
        if (!(sigma_gkp > 0.0))
            throw std::domain_error("NoiseChainSpec: sigma_gkp must be positive");
        if (noise_variances.empty())
            throw std::domain_error("NoiseChainSpec: at least one noise segment required");
        if (!(initial_variance >= 0.0))
            throw std::domain_error("NoiseChainSpec: initial variance must be nonnegative");
        for (double v : noise_variances)
            if (!(v >= 0.0))
                throw std::domain_error("NoiseChainSpec: noise variances must be nonnegative");
    }
};

struct CoefficientSet {
    std::vector<double> postponed;
    std::vector<double> realtime;
    double min_variance = 0.0;
    bool extrapolated = false;
};

// Raised when the covariance matrix stops being resolvably positive definite
// at the configured precision. Carries the longest chain prefix that still
// factorized.
class precision_exhausted_error : public std::runtime_error {
  public:
    explicit precision_exhausted_error(std::size_t solvable_prefix)
        : std::runtime_error("rescaling: precision exhausted, solvable prefix length " +
                             std::to_string(solvable_prefix)),
          solvable_prefix_(solvable_prefix) {}
    std::size_t solvable_prefix() const { return solvable_prefix_; }

  private:
    std::size_t solvable_prefix_;
};

// Optimal rescaling factor for a single correction: c = sd^2 / (sd^2 + sg^2).
inline double single_round_c(double sigma_data, double sigma_gkp) {
    if (!(sigma_data >= 0.0) || !(sigma_gkp >= 0.0))
        throw std::domain_error("single_round_c: sigmas must be nonnegative");
    const double d2 = sigma_data * sigma_data, g2 = sigma_gkp * sigma_gkp;
    if (g2 == 0.0) return d2 > 0.0 ? 1.0 : 0.0;
    return d2 / (d2 + g2);
}

// Fixed point of single_round_c under translational invariance, where the data
// variance before each round is c*sg^2 + sn^2. Evaluated in the rationalized
// form 2 sn / (sn + sqrt(sn^2 + 4 sg^2)), which stays accurate for sg << sn.
inline double steady_state_c(double sigma_noise, double sigma_gkp) {
    if (!(sigma_noise >= 0.0) || !(sigma_gkp >= 0.0))
        throw std::domain_error("steady_state_c: sigmas must be nonnegative");
    if (sigma_noise == 0.0) return 0.0;
    return 2.0 * sigma_noise /
           (sigma_noise + std::sqrt(sigma_noise * sigma_noise +
                                    4.0 * sigma_gkp * sigma_gkp));
}

namespace detail {

template <class Real>
struct QuadraticProblem {
    Real a{};
    std::vector<Real> b;
    std::vector<std::vector<Real>> A;
    std::vector<Real> x0;
    Real min_variance{};
};

// In-place Cholesky factorization; the lower triangle of A becomes L. A
// non-positive pivot at row i means the leading i x i block was the largest
// factorable prefix.
template <class Real>
void cholesky(std::vector<std::vector<Real>>& A) {
    const std::size_t n = A.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            Real sum = A[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= A[i][k] * A[j][k];
            if (i == j) {
                if (!(sum > 0)) throw precision_exhausted_error(i);
                A[i][i] = sqrt(sum);
            } else {
                A[i][j] = sum / A[j][j];
            }
        }
    }
}

template <class Real>
std::vector<Real> cholesky_solve(const std::vector<std::vector<Real>>& L,
                                 std::vector<Real> rhs) {
    const std::size_t n = L.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) rhs[i] -= L[i][k] * rhs[k];
        rhs[i] /= L[i][i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t k = ii + 1; k < n; ++k) rhs[ii] -= L[k][ii] * rhs[k];
        rhs[ii] /= L[ii][ii];
    }
    return rhs;
}

// Assemble and minimize Var(xi_data - sum_i c_i xi_anc_i). With V_i the data
// variance accumulated up to extraction i:
//   A_ij = V_min(i,j) + delta_ij sg^2,  b_i = -2 V_i,  a = V_n,
//   x0 = A^{-1} V,  min = V_n - V.x0.
template <class Real>
QuadraticProblem<Real> solve_postponed_impl(const NoiseChainSpec& spec) {
    spec.validate();
    const std::size_t n = spec.noise_variances.size();
    const Real g2 = Real(spec.sigma_gkp) * Real(spec.sigma_gkp);

    std::vector<Real> V(n);
    Real acc = Real(spec.initial_variance);
    for (std::size_t i = 0; i < n; ++i) {
        acc += Real(spec.noise_variances[i]);
        V[i] = acc;
    }

    QuadraticProblem<Real> qp;
    qp.a = V[n - 1];
    qp.b.resize(n);
    qp.A.assign(n, std::vector<Real>(n));
    for (std::size_t i = 0; i < n; ++i) {
        qp.b[i] = Real(-2) * V[i];
        for (std::size_t j = 0; j < n; ++j) qp.A[i][j] = V[std::min(i, j)];
        qp.A[i][i] += g2;
    }

    auto L = qp.A;
    cholesky(L);
    qp.x0 = cholesky_solve(L, V);
    Real quad{};
    for (std::size_t i = 0; i < n; ++i) quad += V[i] * qp.x0[i];
    qp.min_variance = qp.a - quad;
    if (qp.min_variance < 0) qp.min_variance = Real(0);
    return qp;
}

// c_k = ct_k / (1 - sum_{i>k} ct_i).
template <class Real>
std::vector<Real> postponed_to_realtime_impl(const std::vector<Real>& ct) {
    const std::size_t n = ct.size();
    std::vector<Real> c(n);
    Real suffix{};
    for (std::size_t k = n; k-- > 0;) {
        const Real den = Real(1) - suffix;
        if (den == 0)
            throw std::domain_error("postponed_to_realtime: singular conversion");
        c[k] = ct[k] / den;
        suffix += ct[k];
    }
    return c;
}

// Inverse map via the recurrence xi_anc_k = xit_anc_k - sum_{i<k} c_i xi_anc_i:
// expand each real-time ancilla noise in the postponed basis and collect the
// coefficients of sum_k c_k xi_anc_k.
template <class Real>
std::vector<Real> realtime_to_postponed_impl(const std::vector<Real>& c) {
    const std::size_t n = c.size();
    std::vector<std::vector<Real>> basis(n, std::vector<Real>(n, Real(0)));
    std::vector<Real> ct(n, Real(0));
    for (std::size_t k = 0; k < n; ++k) {
        basis[k][k] = Real(1);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j <= i; ++j) basis[k][j] -= c[i] * basis[i][j];
        for (std::size_t j = 0; j <= k; ++j) ct[j] += c[k] * basis[k][j];
    }
    return ct;
}

template <class F>
auto with_precision(int digits, F&& f) {
    namespace mp = boost::multiprecision;
    using real60 = mp::number<mp::cpp_dec_float<60>>;
    using real120 = mp::number<mp::cpp_dec_float<120>>;
    using real240 = mp::number<mp::cpp_dec_float<240>>;
    if (digits <= 0)
        throw std::invalid_argument("rescaling: precision digits must be positive");
    if (digits <= 60) return f(real60{});
    if (digits <= 120) return f(real120{});
    if (digits <= 240) return f(real240{});
    throw std::invalid_argument("rescaling: precision above 240 digits is not supported");
}

}  // namespace detail

// Postponed coefficients and the minimized variance.
inline CoefficientSet solve_postponed(const NoiseChainSpec& spec, int digits = 60) {
    return detail::with_precision(digits, [&](auto probe) {
        using Real = decltype(probe);
        auto qp = detail::solve_postponed_impl<Real>(spec);
        CoefficientSet out;
        out.postponed.reserve(qp.x0.size());
        for (const auto& v : qp.x0) out.postponed.push_back(static_cast<double>(v));
        out.min_variance = static_cast<double>(qp.min_variance);
        return out;
    });
}

// Postponed and real-time coefficients together. The conversion happens at
// full precision; narrowing the postponed values first would destroy the
// real-time ones.
inline CoefficientSet solve_chain(const NoiseChainSpec& spec, int digits = 60) {
    return detail::with_precision(digits, [&](auto probe) {
        using Real = decltype(probe);
        auto qp = detail::solve_postponed_impl<Real>(spec);
        auto rt = detail::postponed_to_realtime_impl(qp.x0);
        CoefficientSet out;
        for (const auto& v : qp.x0) out.postponed.push_back(static_cast<double>(v));
        for (const auto& v : rt) out.realtime.push_back(static_cast<double>(v));
        out.min_variance = static_cast<double>(qp.min_variance);
        return out;
    });
}

inline std::vector<double> postponed_to_realtime(const std::vector<double>& postponed) {
    return detail::postponed_to_realtime_impl(postponed);
}

inline std::vector<double> realtime_to_postponed(const std::vector<double>& realtime) {
    return detail::realtime_to_postponed_impl(realtime);
}

// Coefficients for one period of a periodic correction chain. The variance
// entering the period is iterated to its fixed point, then the chain is solved
// once at full precision.
struct PeriodicSolution {
    CoefficientSet coefficients;
    std::vector<double> entry_variances;  // data variance entering each correction
    double exit_variance = 0.0;           // residual after the last correction
    int iterations = 0;
};

inline PeriodicSolution solve_periodic(const std::vector<double>& period_noise,
                                       double sigma_gkp, int digits = 60,
                                       double tol = 1e-12, int max_iter = 200) {
    if (period_noise.empty())
        throw std::domain_error("solve_periodic: empty period");
    const double g2 = sigma_gkp * sigma_gkp;

    // Greedy replay: per round, c = v/(v + g2) and residual c*g2. This is the
    // real-time optimum, so the fixed point matches the quadratic solve.
    auto replay = [&](double v0, PeriodicSolution* fill) {
        double v = v0;
        for (std::size_t i = 0; i < period_noise.size(); ++i) {
            v += period_noise[i];
            if (fill) fill->entry_variances.push_back(v);
            const double c = g2 > 0.0 ? v / (v + g2) : (v > 0.0 ? 1.0 : 0.0);
            v = c * g2;
        }
        return v;
    };

    double v0 = 0.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        const double next = replay(v0, nullptr);
        if (std::abs(next - v0) <= tol) {
            v0 = next;
            break;
        }
        v0 = next;
    }

    PeriodicSolution sol;
    sol.iterations = it + 1;
    sol.exit_variance = replay(v0, &sol);
    if (sigma_gkp > 0.0) {
        NoiseChainSpec spec{sigma_gkp, period_noise, v0};
        sol.coefficients = solve_chain(spec, digits);
    } else {
        sol.coefficients.realtime.assign(period_noise.size(), 1.0);
        sol.coefficients.postponed = realtime_to_postponed(sol.coefficients.realtime);
        sol.coefficients.min_variance = 0.0;
    }
    return sol;
}

// Extend solved chains to a longer length by fitting the geometric approach of
// the real-time tail, c_k ~ c_inf - alpha beta^k, on the last solved positions.
inline CoefficientSet extend_chain(const std::vector<CoefficientSet>& solved,
                                   std::size_t target_len) {
    std::size_t usable = 0;
    for (const auto& s : solved)
        if (!s.realtime.empty()) ++usable;
    if (usable < 3)
        throw std::invalid_argument("extend_chain: need at least 3 solved prefix lengths");

    const CoefficientSet* longest = nullptr;
    for (const auto& s : solved)
        if (!s.realtime.empty() && (!longest || s.realtime.size() > longest->realtime.size()))
            longest = &s;
    const std::size_t m = longest->realtime.size();
    if (target_len == m) return *longest;
    if (target_len < m) {
        // Real-time coefficients are prefix-stable, so a shorter chain is the
        // literal prefix.
        CoefficientSet out;
        out.realtime.assign(longest->realtime.begin(), longest->realtime.begin() + target_len);
        out.postponed = realtime_to_postponed(out.realtime);
        const double c_last_long = longest->realtime.back();
        const double g2 = c_last_long > 0.0 ? longest->min_variance / c_last_long : 0.0;
        out.min_variance = out.realtime.back() * g2;
        return out;
    }

    std::vector<double> rt = longest->realtime;
    const std::size_t k_fit = std::min<std::size_t>(10, m);
    const std::size_t first = m - k_fit;

    // Fit log|d_k| = log(|A|(1-beta)) + k log(beta) on successive differences.
    double beta = 0.0, dcoef = 0.0;
    bool geometric = k_fit >= 3;
    if (geometric) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int cnt = 0;
        int sign = 0;
        for (std::size_t k = first; k + 1 < m; ++k) {
            const double d = rt[k + 1] - rt[k];
            if (d == 0.0 || std::abs(d) < 1e-15) { geometric = false; break; }
            const int s = d > 0 ? 1 : -1;
            if (sign == 0) sign = s;
            if (s != sign) { geometric = false; break; }
            const double x = static_cast<double>(k), y = std::log(std::abs(d));
            sx += x; sy += y; sxx += x * x; sxy += x * y;
            ++cnt;
        }
        if (geometric && cnt >= 2) {
            const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
            beta = std::exp(slope);
            if (!(beta > 0.0) || !(beta < 1.0)) geometric = false;
            if (geometric) {
                double sum = 0;
                for (std::size_t k = first; k + 1 < m; ++k)
                    sum += (rt[k + 1] - rt[k]) / std::pow(beta, static_cast<double>(k));
                dcoef = sum / cnt;
            }
        } else {
            geometric = false;
        }
    }

    rt.resize(target_len);
    for (std::size_t k = m; k < target_len; ++k) {
        const double step =
            geometric ? dcoef * std::pow(beta, static_cast<double>(k - 1)) : 0.0;
        rt[k] = rt[k - 1] + step;
    }

    CoefficientSet out;
    out.realtime = std::move(rt);
    out.postponed = realtime_to_postponed(out.realtime);
    const double c_last_long = longest->realtime.back();
    const double g2 = c_last_long > 0.0 ? longest->min_variance / c_last_long : 0.0;
    out.min_variance = out.realtime.back() * g2;
    out.extrapolated = true;
    return out;
}

// Debug dump of the quadratic problem (a, b, A, x0) with full-precision
// decimal strings, for offline inspection.
inline nlohmann::json dump_quadratic_problem(const NoiseChainSpec& spec, int digits = 60) {
    return detail::with_precision(digits, [&](auto probe) {
        using Real = decltype(probe);
        auto qp = detail::solve_postponed_impl<Real>(spec);
        nlohmann::json j;
        j["a"] = qp.a.str();
        for (const auto& v : qp.b) j["b"].push_back(v.str());
        for (const auto& row : qp.A) {
            nlohmann::json r = nlohmann::json::array();
            for (const auto& v : row) r.push_back(v.str());
            j["A"].push_back(r);
        }
        for (const auto& v : qp.x0) j["x0"].push_back(v.str());
        j["min_variance"] = qp.min_variance.str();
        j["digits"] = digits;
        return j;
    });
}

}  // namespace gkprep::rescaling
