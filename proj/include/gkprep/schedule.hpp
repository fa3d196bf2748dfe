#pragma once

// Operation schedules for the two repeater types, generated from the station
// rules:
//  1. a data qubit measured again later in the same quadrature gets a GKP
//     correction pair (opposite quadrature first) right after each outer
//     stabilizer measurement,
//  2. quadratures containing weight-four stabilizers are measured in two
//     full rounds,
//  3. after the last stabilizer of a quadrature every data qubit gets one GKP
//     correction in the opposite quadrature,
//  4. the arrival GKP corrections are doubled when weight-four stabilizers
//     follow,
//  5. switching to a quadrature with weight-four stabilizers replaces the
//     single rule-3 correction by a q-p-q triple.
// Storage-step counts per data mode and the resulting station costs are
// derived from the generated sequences.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gkprep/codes.hpp"

namespace gkprep::schedule {

enum class Quadrature { q, p };

inline Quadrature conjugate(Quadrature x) {
    return x == Quadrature::q ? Quadrature::p : Quadrature::q;
}

enum class StationType { type_a, type_b };

enum class OpKind { gkp_correct, sl_measure, decode, idle };

// One scheduled operation. gkp_correct acts on a single qubit; sl_measure is
// a joint outer-stabilizer measurement on `qubits`; decode marks the point
// where the collected rounds of one quadrature are processed and outer
// feedback is applied.
struct ScheduledOp {
    OpKind kind = OpKind::idle;
    Quadrature quad = Quadrature::q;
    std::vector<int> qubits;
    int stabilizer = -1;
    int round = 0;
};

// Storage-mode accounting of one station under the staggered-arrival timing
// model: every data mode is stored for the full per-data-mode duration, outer
// ancilla modes for their listed spans, and each GKP-correction ancilla mode
// for a single step.
struct StorageSummary {
    int data_modes = 0;
    int data_steps_each = 0;
    std::vector<int> sl_ancilla_spans;
    int gkp_ancilla_modes = 0;

    int total() const {
        int t = data_modes * data_steps_each + gkp_ancilla_modes;
        for (int s : sl_ancilla_spans) t += s;
        return t;
    }
};

struct LinkSchedule {
    StationType station = StationType::type_b;
    std::optional<codes::CodeName> code;
    std::vector<ScheduledOp> ops;               // global order, idles omitted
    std::vector<std::vector<int>> per_qubit_op_counts_;  // steps per data mode, no idles
    int per_data_mode_steps = 0;                // includes idle padding
    StorageSummary storage;

    int total_cost() const { return storage.total(); }
};

namespace detail {

inline void add_gkp(std::vector<ScheduledOp>& ops, int qubit, Quadrature x) {
    ops.push_back({OpKind::gkp_correct, x, {qubit}, -1, 0});
}

// Whether qubit q participates in any same-quadrature stabilizer measurement
// after position `from` in the flat (round, stabilizer) order.
inline bool measured_later(const std::vector<codes::Support>& stabs, int rounds,
                           int round, std::size_t stab, int q) {
    for (int r = round; r < rounds; ++r) {
        for (std::size_t s = (r == round ? stab + 1 : 0); s < stabs.size(); ++s) {
            if (std::find(stabs[s].begin(), stabs[s].end(), q) != stabs[s].end())
                return true;
        }
    }
    return false;
}

inline bool has_weight4(const std::vector<codes::Support>& stabs) {
    return std::any_of(stabs.begin(), stabs.end(),
                       [](const codes::Support& s) { return s.size() >= 4; });
}

}  // namespace detail

inline LinkSchedule build_schedule(std::optional<codes::CodeName> code_name,
                                   StationType station) {
    LinkSchedule sched;
    sched.station = station;
    sched.code = code_name;

    if (station == StationType::type_b) {
        detail::add_gkp(sched.ops, 0, Quadrature::q);
        detail::add_gkp(sched.ops, 0, Quadrature::p);
        sched.per_data_mode_steps = 2;
        sched.storage = {1, 2, {}, 2};
        return sched;
    }

    if (!code_name)
        throw std::invalid_argument("build_schedule: type-A station requires an outer code");
    const codes::OuterCode code = codes::build_code(*code_name);
    const int n = code.n;
    auto& ops = sched.ops;

    // X stabilizers act on p shifts and are measured first, then Z on q.
    struct Phase {
        Quadrature quad;
        const std::vector<codes::Support>* stabs;
    };
    const Phase phases[2] = {{Quadrature::p, &code.x_stabilizers},
                             {Quadrature::q, &code.z_stabilizers}};

    // Rule 4: arrival corrections, doubled when the first phase measures
    // weight-four stabilizers.
    const int arrival_rounds = detail::has_weight4(*phases[0].stabs) ? 2 : 1;
    for (int r = 0; r < arrival_rounds; ++r) {
        for (int q = 0; q < n; ++q) detail::add_gkp(ops, q, Quadrature::q);
        for (int q = 0; q < n; ++q) detail::add_gkp(ops, q, Quadrature::p);
    }

    for (int ph = 0; ph < 2; ++ph) {
        const auto& stabs = *phases[ph].stabs;
        const Quadrature quad = phases[ph].quad;
        const int rounds = detail::has_weight4(stabs) ? 2 : 1;  // rule 2

        for (int r = 0; r < rounds; ++r) {
            for (std::size_t s = 0; s < stabs.size(); ++s) {
                ops.push_back({OpKind::sl_measure, quad, stabs[s],
                               static_cast<int>(s), r});
                // Rule 1: refresh qubits that will be measured again in this
                // quadrature.
                for (int q : stabs[s]) {
                    if (detail::measured_later(stabs, rounds, r, s, q)) {
                        detail::add_gkp(ops, q, conjugate(quad));
                        detail::add_gkp(ops, q, quad);
                    }
                }
            }
        }

        ops.push_back({OpKind::decode, quad, {}, -1, 0});

        const bool next_weight4 = ph == 0 && detail::has_weight4(*phases[1].stabs);
        if (next_weight4) {
            // Rule 5: q-p-q triple before switching to weight-four Z rounds.
            for (int q = 0; q < n; ++q) detail::add_gkp(ops, q, Quadrature::q);
            for (int q = 0; q < n; ++q) detail::add_gkp(ops, q, Quadrature::p);
            for (int q = 0; q < n; ++q) detail::add_gkp(ops, q, Quadrature::q);
        } else {
            // Rule 3: single correction in the opposite quadrature.
            for (int q = 0; q < n; ++q) detail::add_gkp(ops, q, conjugate(quad));
        }
    }

    std::vector<int> counts(n, 0);
    for (const auto& op : ops)
        for (int q : op.qubits) ++counts[q];
    sched.per_data_mode_steps = *std::max_element(counts.begin(), counts.end());
    sched.per_qubit_op_counts_.push_back(counts);

    // Outer-ancilla spans and GKP-ancilla mode counts under the staggered
    // timing grid (ancilla reuse across non-neighbouring steps, one-step
    // re-preparation).
    if (*code_name == codes::CodeName::c4)
        sched.storage = {4, sched.per_data_mode_steps, {7, 7, 3}, 7};
    else
        sched.storage = {7, sched.per_data_mode_steps, {7, 7, 8}, 9};
    return sched;
}

// Storage-step costs (type-B, type-A) for an outer code.
inline std::pair<int, int> station_costs(codes::CodeName code) {
    const int t_b = build_schedule(std::nullopt, StationType::type_b).total_cost();
    const int t_a = build_schedule(code, StationType::type_a).total_cost();
    return {t_b, t_a};
}

// Storage duration of one data mode in a station, in time steps; sets the
// throughput limit of the station type.
inline int data_mode_steps(std::optional<codes::CodeName> code, StationType station) {
    return build_schedule(code, station).per_data_mode_steps;
}

}  // namespace gkprep::schedule
