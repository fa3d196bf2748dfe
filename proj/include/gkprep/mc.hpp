#pragma once

// Monte-Carlo propagation of continuous quadrature shifts through repeater
// chains. Trials track exact (dq, dp) shifts per GKP mode; every noise draw
// comes from a per-trial counter-based stream, so estimates are bit-identical
// for a fixed master seed regardless of worker count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gkprep/codes.hpp"
#include "gkprep/math.hpp"
#include "gkprep/rescaling.hpp"
#include "gkprep/rng.hpp"
#include "gkprep/schedule.hpp"

namespace gkprep::mc {

using schedule::Quadrature;

struct ModeState {
    double dq = 0.0;
    double dp = 0.0;

    double& shift(Quadrature x) { return x == Quadrature::q ? dq : dp; }
    double& conj_shift(Quadrature x) { return x == Quadrature::q ? dp : dq; }
    double shift(Quadrature x) const { return x == Quadrature::q ? dq : dp; }
};

// Analog outcome of one GKP syndrome measurement together with the standard
// deviation of the distribution it was effectively drawn from.
struct SyndromeRecord {
    double analog_value = 0.0;
    double effective_sigma = 0.0;
    int link_position = 0;
    int qubit_index = 0;
    Quadrature quadrature = Quadrature::q;
    long op_index = 0;
    double flip_likelihood = 0.0;
};

struct TrialResult {
    bool flip_x = false;
    bool flip_z = false;
};

// One GKP correction round: measure the syndrome with a finitely squeezed
// ancilla, displace back by c times the outcome, and kick the conjugate
// quadrature by an independent ancilla sample.
inline SyndromeRecord gkp_correct(ModeState& mode, Quadrature x, double c,
                                  double sigma_gkp, RandomStream& stream,
                                  double effective_sigma = 0.0, int link_position = 0,
                                  int qubit_index = 0, long op_index = 0) {
    if (!(c > 0.0) || !(c <= 1.0))
        throw std::domain_error("gkp_correct: c must be in (0, 1]");
    if (!(sigma_gkp >= 0.0))
        throw std::domain_error("gkp_correct: sigma_gkp must be nonnegative");
    const double meas_noise = stream.gaussian(sigma_gkp);
    const double back_action = stream.gaussian(sigma_gkp);
    const double syndrome = centered_mod(mode.shift(x) + meas_noise, kSqrtPi);
    mode.shift(x) -= c * syndrome;
    mode.conj_shift(x) -= back_action;

    SyndromeRecord rec;
    rec.analog_value = syndrome;
    rec.effective_sigma = effective_sigma;
    rec.link_position = link_position;
    rec.qubit_index = qubit_index;
    rec.quadrature = x;
    rec.op_index = op_index;
    rec.flip_likelihood =
        effective_sigma > 0.0 ? error_likelihood(effective_sigma, syndrome) : 0.0;
    return rec;
}

// Outer-stabilizer measurement: the ancilla accumulates the shift sum of the
// supported modes and is read out modulo 2 sqrt(pi); all supported modes share
// one back-action sample on the conjugate quadrature.
inline double measure_outer_stabilizer(std::vector<ModeState>& modes,
                                       const codes::Support& support, Quadrature x,
                                       double sigma_gkp, RandomStream& stream) {
    if (!(sigma_gkp >= 0.0))
        throw std::domain_error("measure_outer_stabilizer: sigma_gkp must be nonnegative");
    const double meas_noise = stream.gaussian(sigma_gkp);
    const double back_action = stream.gaussian(sigma_gkp);
    double sum = meas_noise;
    for (int q : support) sum += modes[q].shift(x);
    for (int q : support) modes[q].conj_shift(x) -= back_action;
    return centered_mod(sum, 2.0 * kSqrtPi);
}

struct StabilizerReading {
    int value = +1;
    double flip_likelihood = 0.0;
};

// Discrete stabilizer value from the analog outcome; the measure-zero overlap
// at |q0sl| = sqrt(pi)/2 is assigned to -1. The likelihood that this
// assignment is wrong comes from the sqrt(pi)-folded residue.
inline StabilizerReading infer_stabilizer(double q0sl, double effective_sigma) {
    if (!(q0sl >= -kSqrtPi) || !(q0sl < kSqrtPi))
        throw std::domain_error("infer_stabilizer: q0sl outside [-sqrt(pi), sqrt(pi))");
    StabilizerReading r;
    r.value = std::abs(q0sl) < kSqrtPi / 2.0 ? +1 : -1;
    if (effective_sigma > 0.0)
        r.flip_likelihood = error_likelihood(effective_sigma, centered_mod(q0sl, kSqrtPi));
    return r;
}

// One recorded round of an outer-stabilizer measurement.
struct SlMeasurement {
    int stabilizer = 0;
    int round = 0;
    double analog = 0.0;
    double effective_sigma = 0.0;
    long op_index = 0;
};

namespace detail {

inline int flip_parity(double shift) {
    const long long k = std::llround(shift / kSqrtPi);
    return static_cast<int>(((k % 2) + 2) % 2);
}

inline double window_error(const std::vector<SyndromeRecord>& records, long lo, long hi) {
    double keep = 1.0;
    for (const auto& r : records)
        if (r.op_index > lo && r.op_index < hi) keep *= 1.0 - r.flip_likelihood;
    return 1.0 - keep;
}

}  // namespace detail

// Step 1 of the outer decoding: reconcile the measurement rounds of every
// stabilizer into one syndrome. A disagreement is blamed on whichever is most
// likely of (round-1 flip, round-2 flip, a logical GKP error during an
// intermediate correction); at most one intermediate error is assumed per
// repeater, and stabilizers whose rounds both preceded it are flipped so the
// final syndrome reflects it.
inline std::vector<int> decode_step1(
    const codes::OuterCode& code, bool z_side,
    const std::vector<std::vector<SlMeasurement>>& measurements,
    const std::vector<std::vector<SyndromeRecord>>& qubit_records) {
    const auto& stabs = code.stabilizers(z_side);
    if (measurements.size() != stabs.size())
        throw std::invalid_argument("decode_step1: one measurement list per stabilizer required");

    enum class Status { agreed, single_round, meas_error, intermediate };
    const std::size_t ns = stabs.size();
    std::vector<int> value(ns, +1);
    std::vector<Status> status(ns, Status::agreed);

    struct Pointer {
        std::size_t stab;
        int qubit;
        double likelihood;
    };
    std::vector<Pointer> pointers;

    for (std::size_t s = 0; s < ns; ++s) {
        const auto& rounds = measurements[s];
        if (rounds.empty())
            throw std::invalid_argument("decode_step1: stabilizer without measurements");
        std::vector<StabilizerReading> readings;
        readings.reserve(rounds.size());
        for (const auto& m : rounds)
            readings.push_back(infer_stabilizer(m.analog, m.effective_sigma));

        if (rounds.size() == 1) {
            value[s] = readings[0].value;
            status[s] = Status::single_round;
            continue;
        }
        if (readings[0].value == readings[1].value) {
            value[s] = readings[0].value;
            continue;
        }

        const double p1 = readings[0].flip_likelihood;
        const double p2 = readings[1].flip_likelihood;
        double keep = 1.0;
        for (int q : stabs[s])
            keep *= 1.0 - detail::window_error(qubit_records[q], rounds[0].op_index,
                                               rounds[1].op_index);
        const double p_int = 1.0 - keep;

        if (p_int > p1 && p_int > p2) {
            int best_q = stabs[s].front();
            double best_p = -1.0;
            for (int q : stabs[s]) {
                const double pq = detail::window_error(qubit_records[q], rounds[0].op_index,
                                                       rounds[1].op_index);
                if (pq > best_p) {
                    best_p = pq;
                    best_q = q;
                }
            }
            pointers.push_back({s, best_q, best_p});
            value[s] = readings[1].value;  // round 2 already reflects the error
            status[s] = Status::intermediate;
        } else if (p1 >= p2) {
            value[s] = readings[1].value;  // round 1 deemed faulty
            status[s] = Status::meas_error;
        } else {
            value[s] = readings[0].value;
            status[s] = Status::meas_error;
        }
    }

    if (!pointers.empty()) {
        const Pointer* best = &pointers.front();
        for (const auto& p : pointers)
            if (p.likelihood > best->likelihood) best = &p;
        const int err_q = best->qubit;

        // Place the error at the strongest same-quadrature record of err_q
        // inside the disagreeing stabilizers' between-round windows.
        long loc = -1;
        double best_rec = -1.0;
        for (const auto& p : pointers) {
            const auto& rounds = measurements[p.stab];
            const auto& sup = stabs[p.stab];
            if (std::find(sup.begin(), sup.end(), err_q) == sup.end()) continue;
            for (const auto& r : qubit_records[err_q]) {
                if (r.op_index > rounds[0].op_index && r.op_index < rounds[1].op_index &&
                    r.flip_likelihood > best_rec) {
                    best_rec = r.flip_likelihood;
                    loc = r.op_index;
                }
            }
        }

        if (loc >= 0) {
            for (std::size_t s = 0; s < ns; ++s) {
                if (status[s] == Status::meas_error || status[s] == Status::intermediate)
                    continue;
                const auto& sup = stabs[s];
                if (std::find(sup.begin(), sup.end(), err_q) == sup.end()) continue;
                const auto& rounds = measurements[s];
                const long first = rounds.front().op_index;
                const long last = rounds.back().op_index;
                if (last < loc) {
                    value[s] = -value[s];  // both rounds preceded the flip
                } else if (rounds.size() > 1 && first < loc && loc < last) {
                    value[s] =
                        infer_stabilizer(rounds[1].analog, rounds[1].effective_sigma).value;
                }
            }
        }
    }

    std::vector<int> syndrome(ns, 0);
    for (std::size_t s = 0; s < ns; ++s) syndrome[s] = value[s] == -1 ? 1 : 0;
    return syndrome;
}

// Step 2: most likely error support consistent with the syndrome, using the
// per-qubit odd-flip probabilities accumulated over the segment since the
// previous multi-qubit correction.
inline codes::Support decode_step2(
    const codes::OuterCode& code, bool z_side, const std::vector<int>& syndrome,
    const std::vector<std::vector<SyndromeRecord>>& qubit_records) {
    std::vector<double> p_odd(code.n, 0.0);
    for (int j = 0; j < code.n; ++j) {
        double prod = 1.0;
        for (const auto& r : qubit_records[j]) prod *= 1.0 - 2.0 * r.flip_likelihood;
        p_odd[j] = (1.0 - prod) / 2.0;
    }

    codes::Support support;
    if (code.n == 4) {
        // Per triggered stabilizer, correct the member qubit with the smallest
        // no-error probability; ties resolve to the first listed qubit.
        const auto& stabs = code.stabilizers(z_side);
        for (std::size_t s = 0; s < stabs.size(); ++s) {
            if (!syndrome[s]) continue;
            int pick = stabs[s].front();
            double best = -1.0;
            for (int q : stabs[s]) {
                if (p_odd[q] > best) {
                    best = p_odd[q];
                    pick = q;
                }
            }
            support.push_back(pick);
        }
        std::sort(support.begin(), support.end());
        return support;
    }

    const auto& candidates = codes::candidate_errors(code, z_side, syndrome);
    if (candidates.empty()) return {};
    std::size_t best_i = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double score = 1.0;
        for (int j = 0; j < code.n; ++j) {
            const bool flagged =
                std::find(candidates[i].begin(), candidates[i].end(), j) !=
                candidates[i].end();
            score *= flagged ? p_odd[j] : 1.0 - p_odd[j];
        }
        if (score > best_score) {
            best_score = score;
            best_i = i;
        }
    }
    return candidates[best_i];
}

// End-of-trial perfect outer correction: project the flip pattern to the
// nearest logical state without analog information and report whether the
// residual acts as a logical operator.
inline bool virtual_outer_flip(const codes::OuterCode& code, bool z_side,
                               const std::vector<int>& flips) {
    codes::Support err;
    for (int j = 0; j < code.n; ++j)
        if (flips[j]) err.push_back(j);
    const auto syn = codes::syndrome_of(code, z_side, err);
    const auto corr = codes::nearest_correction(code, z_side, syn);
    std::vector<int> residual = flips;
    for (int q : corr) residual[q] ^= 1;
    return codes::is_logical(code, z_side, residual);
}

struct PhysParams {
    FiberParams fiber;
    Squeezing squeezing;
};

struct ChainConfig {
    PhysParams phys;
    std::optional<codes::CodeName> code;  // nullopt: single-mode GKP chain
    int n_multi = 1;                      // type-A stations per 10 km
    int n_all = 1;                        // all stations per 10 km
    int links = 100;
    int precision_digits = 60;
    bool use_analog = true;

    void validate() const {
        phys.fiber.validate();
        if (n_multi < 1 || n_all < n_multi || n_all > 40)
            throw std::domain_error("ChainConfig: require 1 <= n_multi <= n_all <= 40");
        if (n_all % n_multi != 0)
            throw std::domain_error("ChainConfig: n_all must be a multiple of n_multi");
        if (!code && n_multi != n_all)
            throw std::domain_error("ChainConfig: GKP-only chains use n_multi == n_all");
        if (links < 1) throw std::domain_error("ChainConfig: links must be positive");
    }
};

// A chain model precomputes the per-link operation program with its rescaling
// coefficients and likelihood sigmas; trials then only propagate shifts.
class ChainModel {
  public:
    enum class OpKind { channel, gkp, sl, decode };

    struct Op {
        OpKind kind = OpKind::channel;
        int qubit = -1;
        Quadrature quad = Quadrature::q;
        double c = 1.0;
        double sigma_rec = 0.0;
        int stabilizer = -1;
        int round = 0;
        codes::Support support;
    };

    static ChainModel build(const ChainConfig& cfg) {
        cfg.validate();
        ChainModel m;
        m.cfg_ = cfg;
        m.sigma_gkp_ = cfg.phys.squeezing.sigma_gkp;
        if (cfg.code) m.code_ = codes::build_code(*cfg.code);
        m.n_modes_ = cfg.code ? m.code_->n : 1;

        const double spacing_km = 10.0 / cfg.n_all;
        m.sigma_trans_ = loss_to_sigma(transmissivity(cfg.phys.fiber, spacing_km));

        m.assemble_program();
        m.annotate();
        return m;
    }

    TrialResult run_trial(RandomStream& rng) const {
        const int n = n_modes_;
        std::vector<ModeState> modes(n);
        for (int j = 0; j < n; ++j) {
            modes[j].dq = rng.gaussian(init_sigma_[j][0]);
            modes[j].dp = rng.gaussian(init_sigma_[j][1]);
        }

        std::vector<std::vector<SyndromeRecord>> seg_q(n), seg_p(n);
        std::vector<std::vector<SlMeasurement>> sl_q, sl_p;
        if (code_) {
            sl_q.resize(code_->z_stabilizers.size());
            sl_p.resize(code_->x_stabilizers.size());
        }

        long op_counter = 0;
        for (int link = 0; link < cfg_.links; ++link) {
            for (const Op& op : program_) {
                ++op_counter;
                switch (op.kind) {
                    case OpKind::channel:
                        modes[op.qubit].dq += rng.gaussian(sigma_trans_);
                        modes[op.qubit].dp += rng.gaussian(sigma_trans_);
                        break;
                    case OpKind::gkp: {
                        const bool keep = code_.has_value() && cfg_.use_analog;
                        auto rec = gkp_correct(modes[op.qubit], op.quad, op.c, sigma_gkp_,
                                               rng, keep ? op.sigma_rec : 0.0, link,
                                               op.qubit, op_counter);
                        if (keep) {
                            auto& seg = op.quad == Quadrature::q ? seg_q : seg_p;
                            seg[op.qubit].push_back(rec);
                        }
                        break;
                    }
                    case OpKind::sl: {
                        const double q0sl = measure_outer_stabilizer(
                            modes, op.support, op.quad, sigma_gkp_, rng);
                        auto& buf = op.quad == Quadrature::q ? sl_q : sl_p;
                        buf[op.stabilizer].push_back({op.stabilizer, op.round, q0sl,
                                                      cfg_.use_analog ? op.sigma_rec : 0.0,
                                                      op_counter});
                        break;
                    }
                    case OpKind::decode: {
                        const bool z_side = op.quad == Quadrature::q;
                        auto& sl = z_side ? sl_q : sl_p;
                        auto& seg = z_side ? seg_q : seg_p;
                        const auto syndrome = decode_step1(*code_, z_side, sl, seg);
                        const auto support = decode_step2(*code_, z_side, syndrome, seg);
                        for (int j : support) {
                            double& sh = modes[j].shift(op.quad);
                            sh = centered_mod(sh - kSqrtPi, 2.0 * kSqrtPi);
                        }
                        for (auto& v : seg) v.clear();
                        for (auto& v : sl) v.clear();
                        break;
                    }
                }
            }
        }

        std::vector<int> fx(n), fz(n);
        for (int j = 0; j < n; ++j) {
            fx[j] = detail::flip_parity(modes[j].dq);
            fz[j] = detail::flip_parity(modes[j].dp);
        }
        TrialResult res;
        if (!code_) {
            res.flip_x = fx[0] != 0;
            res.flip_z = fz[0] != 0;
            return res;
        }
        res.flip_x = virtual_outer_flip(*code_, true, fx);
        res.flip_z = virtual_outer_flip(*code_, false, fz);
        return res;
    }

    bool is_noiseless() const { return sigma_gkp_ == 0.0 && sigma_trans_ == 0.0; }
    const std::vector<Op>& program() const { return program_; }
    const ChainConfig& config() const { return cfg_; }
    double sigma_trans() const { return sigma_trans_; }
    double init_sigma(int qubit, Quadrature x) const {
        return init_sigma_[qubit][x == Quadrature::q ? 0 : 1];
    }

  private:
    void assemble_program() {
        const int n = n_modes_;
        auto push_channel = [&] {
            for (int j = 0; j < n; ++j)
                program_.push_back({OpKind::channel, j, Quadrature::q, 1.0, 0.0, -1, 0, {}});
        };
        auto push_gkp = [&](int j, Quadrature x) {
            program_.push_back({OpKind::gkp, j, x, 1.0, 0.0, -1, 0, {}});
        };

        if (!cfg_.code) {
            push_channel();
            push_gkp(0, Quadrature::q);
            push_gkp(0, Quadrature::p);
            return;
        }

        const int m = cfg_.n_all / cfg_.n_multi - 1;  // type-B stations per link
        for (int seg = 0; seg <= m; ++seg) {
            push_channel();
            if (seg < m) {
                for (int j = 0; j < n; ++j) {
                    push_gkp(j, Quadrature::q);
                    push_gkp(j, Quadrature::p);
                }
            }
        }
        const auto sched = schedule::build_schedule(cfg_.code, schedule::StationType::type_a);
        for (const auto& sop : sched.ops) {
            switch (sop.kind) {
                case schedule::OpKind::gkp_correct:
                    push_gkp(sop.qubits.front(), sop.quad);
                    break;
                case schedule::OpKind::sl_measure:
                    program_.push_back({OpKind::sl, -1, sop.quad, 1.0, 0.0, sop.stabilizer,
                                        sop.round, sop.qubits});
                    break;
                case schedule::OpKind::decode:
                    program_.push_back({OpKind::decode, -1, sop.quad, 1.0, 0.0, -1, 0, {}});
                    break;
                case schedule::OpKind::idle:
                    break;
            }
        }
    }

    // Attach rescaling coefficients (periodic fixed point, per qubit and
    // quadrature) and the effective likelihood sigmas, then derive the
    // steady-state shift variances entering a link.
    void annotate() {
        const int n = n_modes_;
        const double g2 = sigma_gkp_ * sigma_gkp_;
        const double t2 = sigma_trans_ * sigma_trans_;

        // Noise-variance gaps between consecutive corrections, cyclic over one
        // link period.
        for (int j = 0; j < n; ++j) {
            for (Quadrature x : {Quadrature::q, Quadrature::p}) {
                std::vector<std::size_t> corr_ops;
                std::vector<double> gaps;
                double acc = 0.0;
                for (std::size_t i = 0; i < program_.size(); ++i) {
                    const Op& op = program_[i];
                    if (op.kind == OpKind::channel && op.qubit == j) {
                        acc += t2;
                    } else if (op.kind == OpKind::gkp && op.qubit == j) {
                        if (op.quad == x) {
                            corr_ops.push_back(i);
                            gaps.push_back(acc);
                            acc = 0.0;
                        } else {
                            acc += g2;
                        }
                    } else if (op.kind == OpKind::sl && op.quad != x &&
                               std::find(op.support.begin(), op.support.end(), j) !=
                                   op.support.end()) {
                        acc += g2;
                    }
                }
                if (corr_ops.empty())
                    throw std::logic_error("ChainModel: mode without corrections");
                gaps.front() += acc;  // wrap the tail noise into the first gap

                const auto sol = rescaling::solve_periodic(gaps, sigma_gkp_,
                                                           cfg_.precision_digits);
                for (std::size_t i = 0; i < corr_ops.size(); ++i) {
                    Op& op = program_[corr_ops[i]];
                    op.c = sigma_gkp_ > 0.0 ? sol.coefficients.realtime[i] : 1.0;
                    if (!(op.c > 0.0)) op.c = std::numeric_limits<double>::min();
                }
            }
        }

        // Replay the predicted variances once to reach the cyclic steady
        // state, then once more to record likelihood sigmas and entry state.
        std::vector<std::array<double, 2>> variance(n, {0.0, 0.0});
        auto idx = [](Quadrature x) { return x == Quadrature::q ? 0 : 1; };
        auto replay = [&](bool record) {
            for (auto& op : program_) {
                switch (op.kind) {
                    case OpKind::channel:
                        variance[op.qubit][0] += t2;
                        variance[op.qubit][1] += t2;
                        break;
                    case OpKind::gkp: {
                        double& v = variance[op.qubit][idx(op.quad)];
                        if (record) op.sigma_rec = std::sqrt(v + g2);
                        v = op.c * g2;
                        variance[op.qubit][idx(conjugate(op.quad))] += g2;
                        break;
                    }
                    case OpKind::sl: {
                        if (record) {
                            double s2 = g2;
                            for (int q : op.support) s2 += variance[q][idx(op.quad)];
                            op.sigma_rec = std::sqrt(s2);
                        }
                        for (int q : op.support)
                            variance[q][idx(conjugate(op.quad))] += g2;
                        break;
                    }
                    case OpKind::decode:
                        break;
                }
            }
        };
        replay(false);
        replay(true);
        init_sigma_.assign(n, {0.0, 0.0});
        for (int j = 0; j < n; ++j) {
            init_sigma_[j][0] = std::sqrt(variance[j][0]);
            init_sigma_[j][1] = std::sqrt(variance[j][1]);
        }
    }

    static Quadrature conjugate(Quadrature x) { return schedule::conjugate(x); }

    ChainConfig cfg_;
    std::optional<codes::OuterCode> code_;
    int n_modes_ = 1;
    double sigma_gkp_ = 0.0;
    double sigma_trans_ = 0.0;
    std::vector<Op> program_;
    std::vector<std::array<double, 2>> init_sigma_;
};

inline TrialResult run_chain(const ChainModel& model, RandomStream& stream) {
    return model.run_trial(stream);
}

struct SimEstimate {
    double p_err_x = 0.0, p_err_z = 0.0;
    double stderr_x = 0.0, stderr_z = 0.0;
    double per_link_p_x = 0.0, per_link_p_z = 0.0;
    std::uint64_t trials = 0;
    bool converged = false;
};

struct EstimateOptions {
    double rel_error = 0.1;  // threshold b on the relative standard error
    std::uint64_t budget = 10'000'000;
    int threads = 1;
    int links = 100;
    std::vector<std::uint8_t>* trial_log = nullptr;  // flip bits per trial id
};

namespace detail {

inline double per_link_prob(double p, int links) {
    if (p >= 0.5) return 0.5;
    return (1.0 - std::pow(1.0 - 2.0 * p, 1.0 / links)) / 2.0;
}

}  // namespace detail

// Adaptive sampling: run 10 trials, then grow the sample tenfold until the
// relative standard error of both flip probabilities drops below the
// threshold or the budget is exhausted (partial result, converged = false).
// Trial indices address counter-based substreams, so the estimate is
// independent of the thread partition.
template <class TrialFn>
SimEstimate estimate(TrialFn&& trial, const EstimateOptions& opt) {
    if (!(opt.rel_error > 0.0) || !(opt.rel_error < 1.0))
        throw std::domain_error("estimate: rel_error must lie in (0, 1)");
    std::uint64_t target = std::min<std::uint64_t>(10, opt.budget);
    std::uint64_t done = 0, count_x = 0, count_z = 0;
    bool converged = false;

    while (true) {
        const std::uint64_t batch = target - done;
        const int nthreads =
            static_cast<int>(std::min<std::uint64_t>(std::max(1, opt.threads), batch));
        if (opt.trial_log) opt.trial_log->resize(target);
        std::vector<std::uint64_t> bx(nthreads, 0), bz(nthreads, 0);
        auto worker = [&](int t) {
            const std::uint64_t lo = done + batch * t / nthreads;
            const std::uint64_t hi = done + batch * (t + 1) / nthreads;
            std::uint64_t sx = 0, sz = 0;
            for (std::uint64_t i = lo; i < hi; ++i) {
                const TrialResult r = trial(i);
                sx += r.flip_x ? 1 : 0;
                sz += r.flip_z ? 1 : 0;
                if (opt.trial_log)
                    (*opt.trial_log)[i] =
                        static_cast<std::uint8_t>((r.flip_x ? 1 : 0) | (r.flip_z ? 2 : 0));
            }
            bx[t] = sx;
            bz[t] = sz;
        };
        if (nthreads == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(nthreads);
            for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
            for (auto& th : pool) th.join();
        }
        for (int t = 0; t < nthreads; ++t) {
            count_x += bx[t];
            count_z += bz[t];
        }
        done = target;

        const double px = static_cast<double>(count_x) / done;
        const double pz = static_cast<double>(count_z) / done;
        auto rel = [&](double p) {
            return p > 0.0 ? std::sqrt((1.0 - p) / (p * static_cast<double>(done)))
                           : std::numeric_limits<double>::infinity();
        };
        if (rel(px) <= opt.rel_error && rel(pz) <= opt.rel_error) {
            converged = true;
            break;
        }
        if (done >= opt.budget) break;
        target = std::min(done * 10, opt.budget);
    }

    SimEstimate est;
    est.trials = done;
    est.converged = converged;
    est.p_err_x = static_cast<double>(count_x) / done;
    est.p_err_z = static_cast<double>(count_z) / done;
    est.stderr_x = std::sqrt(est.p_err_x * (1.0 - est.p_err_x) / static_cast<double>(done));
    est.stderr_z = std::sqrt(est.p_err_z * (1.0 - est.p_err_z) / static_cast<double>(done));
    est.per_link_p_x = detail::per_link_prob(est.p_err_x, opt.links);
    est.per_link_p_z = detail::per_link_prob(est.p_err_z, opt.links);
    return est;
}

inline SimEstimate estimate_chain(const ChainModel& model, std::uint64_t master_seed,
                                  const EstimateOptions& opt_in) {
    EstimateOptions opt = opt_in;
    opt.links = model.config().links;
    return estimate(
        [&model, master_seed](std::uint64_t trial) {
            RandomStream rng(master_seed, trial);
            return model.run_trial(rng);
        },
        opt);
}

// End-to-end flip probability over a total distance, from a per-`links`
// estimate of a chain whose type-A (or GKP) station density is given per
// 10 km.
inline double chain_flip_over_distance(double p_links, double density_per_10km,
                                       double total_km, int links = 100) {
    const double exponent = density_per_10km * total_km / (10.0 * links);
    const double base = 1.0 - 2.0 * std::min(p_links, 0.5);
    return (1.0 - std::pow(base, exponent)) / 2.0;
}

// ---- single-link experiment --------------------------------------------

enum class LinkScheme { gkp_only, c4_analog, steane7_analog, steane7_no_analog };

inline std::string to_string(LinkScheme s) {
    switch (s) {
        case LinkScheme::gkp_only: return "gkp-only";
        case LinkScheme::c4_analog: return "c4-analog";
        case LinkScheme::steane7_analog: return "steane7-analog";
        case LinkScheme::steane7_no_analog: return "steane7-no-analog";
    }
    return "?";
}

inline LinkScheme link_scheme_from_string(const std::string& s) {
    if (s == "gkp-only") return LinkScheme::gkp_only;
    if (s == "c4-analog") return LinkScheme::c4_analog;
    if (s == "steane7-analog") return LinkScheme::steane7_analog;
    if (s == "steane7-no-analog") return LinkScheme::steane7_no_analog;
    throw std::invalid_argument("unknown single-link scheme: " + s);
}

// One transmission over a pure loss channel of loss gamma: perfect encoding
// and amplification, then ideal GKP correction on every mode (infinitely
// squeezed ancillas) followed by ideal outer correction. Returns whether any
// logical Pauli error survived.
inline bool single_link_trial(LinkScheme scheme, double gamma, RandomStream& rng) {
    const double sigma_ch = std::sqrt(gamma);
    std::optional<codes::OuterCode> code;
    bool use_analog = true;
    switch (scheme) {
        case LinkScheme::gkp_only: break;
        case LinkScheme::c4_analog: code = codes::build_code(codes::CodeName::c4); break;
        case LinkScheme::steane7_analog:
            code = codes::build_code(codes::CodeName::steane7);
            break;
        case LinkScheme::steane7_no_analog:
            code = codes::build_code(codes::CodeName::steane7);
            use_analog = false;
            break;
    }
    const int n = code ? code->n : 1;

    std::vector<ModeState> modes(n);
    for (int j = 0; j < n; ++j) {
        modes[j].dq = rng.gaussian(sigma_ch);
        modes[j].dp = rng.gaussian(sigma_ch);
    }

    std::vector<int> fx(n), fz(n);
    std::vector<std::vector<SyndromeRecord>> rec_q(n), rec_p(n);
    for (int j = 0; j < n; ++j) {
        const double q0 = centered_mod(modes[j].dq, kSqrtPi);
        modes[j].dq -= q0;
        const double p0 = centered_mod(modes[j].dp, kSqrtPi);
        modes[j].dp -= p0;
        fx[j] = detail::flip_parity(modes[j].dq);
        fz[j] = detail::flip_parity(modes[j].dp);
        if (use_analog) {
            SyndromeRecord rq, rp;
            rq.analog_value = q0;
            rq.effective_sigma = sigma_ch;
            rq.flip_likelihood = error_likelihood(sigma_ch, q0);
            rp.analog_value = p0;
            rp.effective_sigma = sigma_ch;
            rp.flip_likelihood = error_likelihood(sigma_ch, p0);
            rec_q[j].push_back(rq);
            rec_p[j].push_back(rp);
        }
    }
    if (!code) return fx[0] != 0 || fz[0] != 0;

    auto correct = [&](bool z_side, std::vector<int>& flips,
                       const std::vector<std::vector<SyndromeRecord>>& recs) {
        codes::Support err;
        for (int j = 0; j < n; ++j)
            if (flips[j]) err.push_back(j);
        const auto syn = codes::syndrome_of(*code, z_side, err);
        const auto corr = decode_step2(*code, z_side, syn, recs);
        for (int q : corr) flips[q] ^= 1;
        return codes::is_logical(*code, z_side, flips);
    };
    const bool lx = correct(true, fx, rec_q);
    const bool lz = correct(false, fz, rec_p);
    return lx || lz;
}

struct SingleLinkPoint {
    double gamma = 0.0;
    double p_err = 0.0;
    double std_err = 0.0;
    std::uint64_t trials = 0;
    bool converged = false;
};

inline std::vector<SingleLinkPoint> single_link_experiment(
    const std::vector<double>& gammas, LinkScheme scheme, std::uint64_t master_seed,
    const EstimateOptions& opt) {
    std::vector<SingleLinkPoint> out;
    out.reserve(gammas.size());
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        const double gamma = gammas[gi];
        if (!(gamma > 0.0) || !(gamma < 1.0))
            throw std::domain_error("single_link_experiment: gamma must lie in (0, 1)");
        // Distinct substream block per gamma point.
        const std::uint64_t stream_base = (static_cast<std::uint64_t>(gi) + 1) << 40;
        const auto est = estimate(
            [&](std::uint64_t trial) {
                RandomStream rng(master_seed, stream_base + trial);
                const bool any = single_link_trial(scheme, gamma, rng);
                return TrialResult{any, any};
            },
            opt);
        out.push_back({gamma, est.p_err_x, est.stderr_x, est.trials, est.converged});
    }
    return out;
}

// Fixed-width trial log: 8-byte little-endian trial id, 1 flip-bits byte.
inline void write_trial_log(const std::string& path,
                            const std::vector<std::uint8_t>& bits) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_trial_log: cannot open " + path);
    for (std::uint64_t i = 0; i < bits.size(); ++i) {
        char rec[9];
        for (int b = 0; b < 8; ++b) rec[b] = static_cast<char>((i >> (8 * b)) & 0xff);
        rec[8] = static_cast<char>(bits[i]);
        out.write(rec, sizeof rec);
    }
}

}  // namespace gkprep::mc
