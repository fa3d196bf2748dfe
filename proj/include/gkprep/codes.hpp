#pragma once

// Static structure of the [[4,1,2]] and [[7,1,3]] outer codes: stabilizer
// supports, logical operators, syndrome-to-candidate tables and logical
// measurement recipes. Qubit indices are 0-based internally; published
// listings use 1-based labels, converted only through display_index().

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace gkprep::codes {

enum class CodeName { c4, steane7 };

enum class Basis { X, Y, Z };

inline std::string to_string(CodeName c) { return c == CodeName::c4 ? "c4" : "steane7"; }

inline CodeName code_from_string(const std::string& s) {
    if (s == "c4") return CodeName::c4;
    if (s == "steane7") return CodeName::steane7;
    throw std::invalid_argument("unknown outer code: " + s);
}

// 0-based internal index -> 1-based published label.
inline int display_index(int internal) { return internal + 1; }

using Support = std::vector<int>;

// Candidate error supports per syndrome, singles first, then pairs in
// lexicographic order. Syndromes are indexed by their bitmask (bit s set iff
// stabilizer s triggered); the zero syndrome maps to no candidates.
struct SyndromeTable {
    std::vector<std::vector<Support>> by_mask;

    static unsigned mask_of(const std::vector<int>& syndrome) {
        unsigned mask = 0;
        for (std::size_t s = 0; s < syndrome.size(); ++s)
            if (syndrome[s]) mask |= 1u << s;
        return mask;
    }

    const std::vector<Support>& candidates(const std::vector<int>& syndrome) const {
        return by_mask[mask_of(syndrome)];
    }
};

struct OuterCode {
    std::string name;
    int n = 0;
    std::vector<Support> z_stabilizers;  // detect X errors (q shifts)
    std::vector<Support> x_stabilizers;  // detect Z errors (p shifts)
    Support logical_x;
    Support logical_z;
    SyndromeTable z_syndromes;  // keyed by Z-stabilizer syndrome bits
    SyndromeTable x_syndromes;

    const std::vector<Support>& stabilizers(bool z_side) const {
        return z_side ? z_stabilizers : x_stabilizers;
    }
    const SyndromeTable& table(bool z_side) const {
        return z_side ? z_syndromes : x_syndromes;
    }
};

namespace detail {

inline std::vector<int> syndrome_of(const std::vector<Support>& stabilizers,
                                    const Support& error) {
    std::vector<int> syn(stabilizers.size(), 0);
    for (std::size_t s = 0; s < stabilizers.size(); ++s) {
        int overlap = 0;
        for (int q : error)
            overlap += static_cast<int>(std::count(stabilizers[s].begin(),
                                                   stabilizers[s].end(), q));
        syn[s] = overlap % 2;
    }
    return syn;
}

inline SyndromeTable build_table(const std::vector<Support>& stabilizers, int n) {
    SyndromeTable t;
    t.by_mask.assign(1u << stabilizers.size(), {});
    for (int q = 0; q < n; ++q) {
        const Support e{q};
        const unsigned mask = SyndromeTable::mask_of(syndrome_of(stabilizers, e));
        if (mask != 0) t.by_mask[mask].push_back(e);
    }
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            const Support e{a, b};
            const unsigned mask = SyndromeTable::mask_of(syndrome_of(stabilizers, e));
            if (mask != 0) t.by_mask[mask].push_back(e);
        }
    }
    // Enumeration order already yields singles first and pairs lexicographic.
    return t;
}

}  // namespace detail

inline OuterCode build_code(CodeName name) {
    OuterCode code;
    if (name == CodeName::c4) {
        code.name = "c4";
        code.n = 4;
        code.z_stabilizers = {{0, 1}, {2, 3}};
        code.x_stabilizers = {{0, 1, 2, 3}};
        code.logical_x = {0, 1};
        code.logical_z = {0, 2};
    } else {
        code.name = "steane7";
        code.n = 7;
        code.z_stabilizers = {{3, 4, 5, 6}, {1, 2, 5, 6}, {0, 2, 4, 6}};
        code.x_stabilizers = code.z_stabilizers;
        code.logical_x = {0, 1, 2, 3, 4, 5, 6};
        code.logical_z = code.logical_x;
    }
    code.z_syndromes = detail::build_table(code.z_stabilizers, code.n);
    code.x_syndromes = detail::build_table(code.x_stabilizers, code.n);
    return code;
}

inline OuterCode build_code(const std::string& name) {
    return build_code(code_from_string(name));
}

inline std::vector<int> syndrome_of(const OuterCode& code, bool z_side,
                                    const Support& error) {
    return detail::syndrome_of(code.stabilizers(z_side), error);
}

// Error supports consistent with the syndrome, singles first. Empty for the
// zero syndrome.
inline const std::vector<Support>& candidate_errors(const OuterCode& code, bool z_side,
                                                    const std::vector<int>& syndrome) {
    const auto& stabs = code.stabilizers(z_side);
    if (syndrome.size() != stabs.size())
        throw std::invalid_argument("candidate_errors: syndrome length mismatch");
    return code.table(z_side).candidates(syndrome);
}

// Per-qubit measurement recipe for reading the logical operator in a given
// basis; the logical outcome is the XOR of the listed bits. Z maps to a q
// homodyne, X to p, Y to the diagonal axis.
struct MeasurementPlan {
    std::vector<std::pair<int, Basis>> entries;  // (qubit, per-qubit basis)
};

inline MeasurementPlan logical_measurement_plan(const OuterCode& code, Basis basis) {
    MeasurementPlan plan;
    if (code.n == 7) {
        for (int q = 0; q < 7; ++q) plan.entries.emplace_back(q, basis);
        return plan;
    }
    switch (basis) {
        case Basis::Z:  // Z_L = Z1 Z3
            plan.entries = {{0, Basis::Z}, {2, Basis::Z}};
            break;
        case Basis::X:  // X_L = X1 X2
            plan.entries = {{0, Basis::X}, {1, Basis::X}};
            break;
        case Basis::Y:  // Y_L = i X_L Z_L = Y1 X2 Z3
            plan.entries = {{0, Basis::Y}, {1, Basis::X}, {2, Basis::Z}};
            break;
    }
    return plan;
}

// Minimum-weight coset representative for a syndrome, lexicographic
// tie-break; used by the end-of-trial perfect correction.
inline Support nearest_correction(const OuterCode& code, bool z_side,
                                  const std::vector<int>& syndrome) {
    const std::vector<int> zero(code.stabilizers(z_side).size(), 0);
    if (syndrome == zero) return {};
    const auto cands = candidate_errors(code, z_side, syndrome);
    if (!cands.empty()) return cands.front();
    // Weight > 2 never occurs for these codes (all syndromes are covered by
    // weight <= 2 errors), but keep the search total.
    for (int a = 0; a < code.n; ++a)
        for (int b = a + 1; b < code.n; ++b)
            for (int c = b + 1; c < code.n; ++c)
                if (syndrome_of(code, z_side, {a, b, c}) == syndrome) return {a, b, c};
    throw std::logic_error("nearest_correction: no representative found");
}

// Whether the residual flip pattern acts as a logical operator: odd overlap
// with the conjugate logical support.
inline bool is_logical(const OuterCode& code, bool z_side, const std::vector<int>& flips) {
    const Support& ref = z_side ? code.logical_z : code.logical_x;
    int overlap = 0;
    for (int q : ref) overlap += flips[q];
    return overlap % 2 != 0;
}

}  // namespace gkprep::codes
