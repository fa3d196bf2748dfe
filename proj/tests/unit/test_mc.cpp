#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "gkprep/mc.hpp"

using namespace gkprep;
using mc::Quadrature;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

mc::SyndromeRecord synthetic_record(int qubit, double likelihood, long op_index) {
    mc::SyndromeRecord r;
    r.qubit_index = qubit;
    r.flip_likelihood = likelihood;
    r.op_index = op_index;
    r.effective_sigma = 0.3;
    return r;
}

mc::SlMeasurement sl(int stab, int round, double analog, double sigma, long op) {
    return {stab, round, analog, sigma, op};
}

}  // namespace

TEST_CASE("gkp_correct with perfect ancillas", "[mc]") {
    RandomStream rng(1, 0);

    mc::ModeState m{0.3, -0.2};
    mc::gkp_correct(m, Quadrature::q, 1.0, 0.0, rng);
    REQUIRE(m.dq == 0.0);       // small shift removed exactly
    REQUIRE(m.dp == -0.2);      // conjugate untouched at sigma_gkp = 0

    // idempotence on the corrected quadrature
    mc::gkp_correct(m, Quadrature::q, 1.0, 0.0, rng);
    REQUIRE(m.dq == 0.0);

    // a shift beyond the decision boundary leaves a full logical displacement
    mc::ModeState big{0.9 * kSqrtPi, 0.0};
    const auto rec = mc::gkp_correct(big, Quadrature::q, 1.0, 0.0, rng);
    REQUIRE_THAT(big.dq, WithinRel(kSqrtPi, 1e-12));
    REQUIRE_THAT(rec.analog_value, WithinAbs(-0.1 * kSqrtPi, 1e-12));

    REQUIRE_THROWS_AS(mc::gkp_correct(m, Quadrature::q, 0.0, 0.1, rng), std::domain_error);
    REQUIRE_THROWS_AS(mc::gkp_correct(m, Quadrature::q, 1.2, 0.1, rng), std::domain_error);
}

TEST_CASE("gkp_correct residual variance tracks the linear optimum", "[mc][sampling]") {
    RandomStream rng(2, 0);
    for (double sd : {0.05, 0.15}) {
        for (double sg : {0.05, 0.15}) {
            const double c = rescaling::single_round_c(sd, sg);
            const int n = 1'000'000;
            double sumsq = 0.0;
            for (int i = 0; i < n; ++i) {
                mc::ModeState m{rng.gaussian(sd), 0.0};
                mc::gkp_correct(m, Quadrature::q, c, sg, rng);
                sumsq += m.dq * m.dq;
            }
            REQUIRE_THAT(sumsq / n, WithinRel(c * sg * sg, 0.02));
        }
    }
}

TEST_CASE("gkp_correct back-action kicks the conjugate quadrature", "[mc][sampling]") {
    RandomStream rng(3, 0);
    const double sg = 0.2;
    const int n = 200'000;
    double sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        mc::ModeState m{0.0, 0.0};
        mc::gkp_correct(m, Quadrature::q, 0.5, sg, rng);
        sumsq += m.dp * m.dp;
    }
    REQUIRE_THAT(sumsq / n, WithinRel(sg * sg, 0.02));
}

TEST_CASE("outer stabilizer measurement", "[mc]") {
    RandomStream rng(4, 0);
    std::vector<mc::ModeState> clean(4);
    REQUIRE(mc::measure_outer_stabilizer(clean, {0, 1, 2, 3}, Quadrature::q, 0.0, rng) == 0.0);

    // one mode carrying a full logical shift wraps to the interval start
    std::vector<mc::ModeState> flipped(4);
    flipped[2].dq = kSqrtPi;
    const double q0sl =
        mc::measure_outer_stabilizer(flipped, {0, 1, 2, 3}, Quadrature::q, 0.0, rng);
    REQUIRE_THAT(q0sl, WithinRel(-kSqrtPi, 1e-12));
    REQUIRE(mc::infer_stabilizer(q0sl, 0.3).value == -1);

    // the same back-action sample lands on every supported conjugate shift
    std::vector<mc::ModeState> block(4);
    mc::measure_outer_stabilizer(block, {0, 1, 3}, Quadrature::q, 0.3, rng);
    REQUIRE(block[0].dp != 0.0);
    REQUIRE(block[0].dp == block[1].dp);
    REQUIRE(block[0].dp == block[3].dp);
    REQUIRE(block[2].dp == 0.0);
    REQUIRE(block[0].dq == 0.0);  // measured quadrature unchanged
}

TEST_CASE("outer measurement analog variance follows the coefficient sum",
          "[mc][sampling]") {
    RandomStream rng(5, 0);
    const double sg = 0.1;
    const std::vector<double> cs{0.5, 0.6, 0.7, 0.8};
    const int n = 400'000;
    double sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<mc::ModeState> block(4);
        for (int j = 0; j < 4; ++j) {
            // residual of an optimal correction with coefficient c has
            // variance c * sg^2 in the linear regime
            mc::ModeState m{rng.gaussian(sg * std::sqrt(cs[j] / (1.0 - cs[j]))), 0.0};
            mc::gkp_correct(m, Quadrature::q, cs[j], sg, rng);
            block[j] = m;
        }
        const double v =
            mc::measure_outer_stabilizer(block, {0, 1, 2, 3}, Quadrature::q, sg, rng);
        sumsq += v * v;
    }
    const double expected = (cs[0] + cs[1] + cs[2] + cs[3] + 1.0) * sg * sg;
    REQUIRE_THAT(sumsq / n, WithinRel(expected, 0.02));
}

TEST_CASE("infer_stabilizer rule and boundary", "[mc]") {
    REQUIRE(mc::infer_stabilizer(0.0, 0.3).value == +1);
    REQUIRE(mc::infer_stabilizer(-kSqrtPi, 0.3).value == -1);
    REQUIRE(mc::infer_stabilizer(kSqrtPi / 2.0, 0.3).value == -1);   // boundary -> -1
    REQUIRE(mc::infer_stabilizer(-kSqrtPi / 2.0, 0.3).value == -1);

    const auto near = mc::infer_stabilizer(kSqrtPi / 2.0 - 1e-9, 0.3);
    REQUIRE(near.value == +1);
    REQUIRE_THAT(near.flip_likelihood, WithinAbs(0.5, 1e-6));

    REQUIRE_THROWS_AS(mc::infer_stabilizer(kSqrtPi, 0.3), std::domain_error);
}

TEST_CASE("decode_step1 keeps agreeing rounds", "[mc]") {
    const auto code = codes::build_code(codes::CodeName::steane7);
    std::vector<std::vector<mc::SlMeasurement>> meas{
        {sl(0, 0, 0.0, 0.3, 10), sl(0, 1, 0.0, 0.3, 100)},
        {sl(1, 0, -kSqrtPi, 0.3, 20), sl(1, 1, -kSqrtPi + 0.05, 0.3, 200)},
        {sl(2, 0, 0.0, 0.3, 30), sl(2, 1, 0.0, 0.3, 300)}};
    std::vector<std::vector<mc::SyndromeRecord>> recs(7);
    REQUIRE(mc::decode_step1(code, true, meas, recs) == std::vector<int>{0, 1, 0});
}

TEST_CASE("decode_step1 blames the dominant hypothesis", "[mc]") {
    const auto code = codes::build_code(codes::CodeName::steane7);
    std::vector<std::vector<mc::SyndromeRecord>> recs(7);

    // near-boundary first round (flip likelihood ~ 0.49) against a clean
    // second round and negligible intermediate likelihoods: adopt round 2
    std::vector<std::vector<mc::SlMeasurement>> meas{
        {sl(0, 0, kSqrtPi / 2.0 + 0.01, 0.3, 10), sl(0, 1, 0.0, 0.3, 100)},
        {sl(1, 0, 0.0, 0.3, 20), sl(1, 1, 0.0, 0.3, 200)},
        {sl(2, 0, 0.0, 0.3, 30), sl(2, 1, 0.0, 0.3, 300)}};
    REQUIRE(mc::decode_step1(code, true, meas, recs) == std::vector<int>{0, 0, 0});

    // same disagreement, but round 2 is the near-boundary one
    meas[0] = {sl(0, 0, -kSqrtPi + 0.02, 0.3, 10), sl(0, 1, kSqrtPi / 2.0 + 0.01, 0.3, 100)};
    REQUIRE(mc::decode_step1(code, true, meas, recs) == std::vector<int>{1, 0, 0});
}

TEST_CASE("decode_step1 resolves an intermediate logical flip on qubit 7", "[mc]") {
    const auto code = codes::build_code(codes::CodeName::steane7);
    // Z stabilizers all contain qubit index 6. Rounds: S0 at ops 10/100,
    // S1 at 20/200, S2 at 30/300; a strong same-quadrature record on qubit 6
    // sits at op 150, after both rounds of S0 but between the rounds of S1, S2.
    std::vector<std::vector<mc::SlMeasurement>> meas{
        {sl(0, 0, 0.0, 0.3, 10), sl(0, 1, 0.0, 0.3, 100)},
        {sl(1, 0, 0.0, 0.3, 20), sl(1, 1, -kSqrtPi + 0.03, 0.3, 200)},
        {sl(2, 0, 0.0, 0.3, 30), sl(2, 1, -kSqrtPi - 0.02 + 2 * kSqrtPi, 0.3, 300)}};
    std::vector<std::vector<mc::SyndromeRecord>> recs(7);
    recs[6].push_back(synthetic_record(6, 0.40, 150));

    const auto syndrome = mc::decode_step1(code, true, meas, recs);
    // S1 and S2 take the round-2 value (-1); S0, measured twice before the
    // flip, is corrected to reflect it as well
    REQUIRE(syndrome == std::vector<int>{1, 1, 1});
}

TEST_CASE("decode_step2 follows the candidate likelihoods", "[mc]") {
    const auto s7 = codes::build_code(codes::CodeName::steane7);
    std::vector<std::vector<mc::SyndromeRecord>> recs(7);
    REQUIRE(mc::decode_step2(s7, true, {0, 0, 0}, recs).empty());

    // syndrome (1,0,0): flips on qubits 0 and 4 more likely than the single
    for (int j = 0; j < 7; ++j) recs[j].push_back(synthetic_record(j, 0.01, j));
    recs[0][0].flip_likelihood = 0.35;
    recs[4][0].flip_likelihood = 0.30;
    const auto picked = mc::decode_step2(s7, true, {1, 0, 0}, recs);
    REQUIRE(picked == codes::Support{0, 4});

    // exhaustive posterior over all 2^7 patterns agrees
    std::vector<double> p_odd(7, 0.01);
    p_odd[0] = 0.35;
    p_odd[4] = 0.30;
    double best_prob = -1.0;
    int best_mask = 0;
    for (int mask = 0; mask < (1 << 7); ++mask) {
        codes::Support err;
        double prob = 1.0;
        for (int j = 0; j < 7; ++j) {
            const bool set = mask & (1 << j);
            prob *= set ? p_odd[j] : 1.0 - p_odd[j];
            if (set) err.push_back(j);
        }
        if (codes::syndrome_of(s7, true, err) == std::vector<int>{1, 0, 0} &&
            prob > best_prob) {
            best_prob = prob;
            best_mask = mask;
        }
    }
    codes::Support best_support;
    for (int j = 0; j < 7; ++j)
        if (best_mask & (1 << j)) best_support.push_back(j);
    REQUIRE(best_support == picked);

    // c4: smallest no-error probability wins within the triggered stabilizer
    const auto c4 = codes::build_code(codes::CodeName::c4);
    std::vector<std::vector<mc::SyndromeRecord>> recs4(4);
    recs4[0].push_back(synthetic_record(0, 0.4, 0));
    recs4[1].push_back(synthetic_record(1, 0.01, 1));
    REQUIRE(mc::decode_step2(c4, true, {1, 0}, recs4) == codes::Support{0});
}

TEST_CASE("virtual outer correction classifies residual patterns", "[mc]") {
    const auto c4 = codes::build_code(codes::CodeName::c4);
    REQUIRE_FALSE(mc::virtual_outer_flip(c4, true, {0, 0, 0, 0}));
    REQUIRE_FALSE(mc::virtual_outer_flip(c4, true, {1, 0, 0, 0}));  // detected, corrected
    REQUIRE(mc::virtual_outer_flip(c4, true, {1, 1, 0, 0}));        // undetected X_L-type pair

    const auto s7 = codes::build_code(codes::CodeName::steane7);
    REQUIRE_FALSE(mc::virtual_outer_flip(s7, true, {1, 0, 0, 0, 0, 0, 0}));
    // a weight-2 pattern decodes to the wrong single qubit: weight-3 logical
    REQUIRE(mc::virtual_outer_flip(s7, true, {1, 0, 0, 0, 1, 0, 0}));
}

TEST_CASE("shift bookkeeping is exact without noise", "[mc]") {
    RandomStream rng(6, 0);
    std::vector<mc::ModeState> block(7);
    for (int round = 0; round < 50; ++round) {
        for (int j = 0; j < 7; ++j) {
            mc::gkp_correct(block[j], Quadrature::q, 1.0, 0.0, rng);
            mc::gkp_correct(block[j], Quadrature::p, 1.0, 0.0, rng);
        }
        mc::measure_outer_stabilizer(block, {0, 2, 4, 6}, Quadrature::q, 0.0, rng);
        mc::measure_outer_stabilizer(block, {3, 4, 5, 6}, Quadrature::p, 0.0, rng);
    }
    for (const auto& m : block) {
        REQUIRE(m.dq == 0.0);
        REQUIRE(m.dp == 0.0);
    }
}

TEST_CASE("noiseless chain never flips", "[mc]") {
    mc::ChainConfig cfg;
    cfg.phys.fiber = FiberParams{1.0, 1e30};  // transmissivity exactly 1
    cfg.phys.squeezing = Squeezing{0.0, 0.0};
    cfg.code = codes::CodeName::steane7;
    cfg.n_multi = 2;
    cfg.n_all = 10;
    const auto model = mc::ChainModel::build(cfg);
    REQUIRE(model.is_noiseless());
    for (int t = 0; t < 25; ++t) {
        RandomStream rng(77, t);
        const auto r = model.run_trial(rng);
        REQUIRE_FALSE(r.flip_x);
        REQUIRE_FALSE(r.flip_z);
    }
}

TEST_CASE("GKP-only chain with ideal ancillas matches the closed form",
          "[mc][sampling]") {
    mc::ChainConfig cfg;
    cfg.phys.fiber = FiberParams{0.95, 22.0};
    cfg.phys.squeezing = Squeezing{0.0, 0.0};  // perfect ancillas, c = 1
    cfg.code = std::nullopt;
    cfg.n_multi = cfg.n_all = 20;
    const auto model = mc::ChainModel::build(cfg);

    mc::EstimateOptions opt;
    opt.rel_error = 0.05;
    opt.budget = 100'000;
    opt.threads = 2;
    const auto est = mc::estimate_chain(model, 4242, opt);

    const double p_link = flip_prob(model.sigma_trans());
    const double expected = odd_error_aggregate(p_link, 100.0);
    REQUIRE_THAT(est.p_err_x, WithinAbs(expected, 3.0 * est.stderr_x));
    REQUIRE_THAT(est.p_err_z, WithinAbs(expected, 3.0 * est.stderr_z));
    // discretization inverts the aggregation
    REQUIRE_THAT(odd_error_aggregate(est.per_link_p_x, 100.0),
                 WithinRel(est.p_err_x, 1e-9));
}

TEST_CASE("analog information improves the hybrid chain", "[mc][sampling][slow]") {
    mc::ChainConfig cfg;
    cfg.phys.fiber = FiberParams{0.97, 22.0};
    cfg.phys.squeezing = Squeezing::from_sigma(0.09);
    cfg.code = codes::CodeName::steane7;
    cfg.n_multi = 2;
    cfg.n_all = 20;

    mc::EstimateOptions opt;
    opt.rel_error = 0.2;
    opt.budget = 10'000;
    opt.threads = 2;

    const auto with_analog = mc::estimate_chain(mc::ChainModel::build(cfg), 99, opt);
    cfg.use_analog = false;
    const auto without = mc::estimate_chain(mc::ChainModel::build(cfg), 99, opt);

    const double gap_x = without.p_err_x - with_analog.p_err_x;
    const double sigma_x =
        std::sqrt(without.stderr_x * without.stderr_x + with_analog.stderr_x * with_analog.stderr_x);
    REQUIRE(gap_x > 3.0 * sigma_x);
}

TEST_CASE("estimates are bit-identical across worker counts", "[mc]") {
    mc::ChainConfig cfg;
    cfg.phys.fiber = FiberParams{0.95, 22.0};
    cfg.phys.squeezing = Squeezing::from_sigma(0.12);
    cfg.code = std::nullopt;
    cfg.n_multi = cfg.n_all = 20;
    const auto model = mc::ChainModel::build(cfg);

    mc::EstimateOptions opt;
    opt.rel_error = 0.2;
    opt.budget = 2000;
    std::vector<std::uint8_t> log1, log4;
    opt.threads = 1;
    opt.trial_log = &log1;
    const auto a = mc::estimate_chain(model, 31337, opt);
    opt.threads = 4;
    opt.trial_log = &log4;
    const auto b = mc::estimate_chain(model, 31337, opt);

    REQUIRE(a.p_err_x == b.p_err_x);
    REQUIRE(a.p_err_z == b.p_err_z);
    REQUIRE(a.stderr_x == b.stderr_x);
    REQUIRE(a.trials == b.trials);
    REQUIRE(a.converged == b.converged);
    REQUIRE(log1 == log4);
}

TEST_CASE("adaptive estimation ladder", "[mc]") {
    // deterministic flip: converges immediately with zero standard error
    std::uint64_t calls = 0;
    mc::EstimateOptions opt;
    opt.rel_error = 0.3;
    opt.budget = 1000;
    const auto certain = mc::estimate(
        [&](std::uint64_t) {
            ++calls;
            return mc::TrialResult{true, true};
        },
        opt);
    REQUIRE(certain.trials == 10);
    REQUIRE(calls == 10);
    REQUIRE(certain.p_err_x == 1.0);
    REQUIRE(certain.stderr_x == 0.0);
    REQUIRE(certain.converged);

    // p = 1/2 with b = 0.1 converges exactly at the k = 100 rung
    calls = 0;
    opt.rel_error = 0.11;
    const auto half = mc::estimate(
        [&](std::uint64_t t) {
            ++calls;
            return mc::TrialResult{t % 2 == 0, t % 2 == 0};
        },
        opt);
    REQUIRE(half.trials == 100);
    REQUIRE(calls == 100);
    REQUIRE(half.converged);

    // nothing ever flips: the budget cap is reached and flagged
    opt.rel_error = 0.1;
    opt.budget = 500;
    const auto empty = mc::estimate([](std::uint64_t) { return mc::TrialResult{}; }, opt);
    REQUIRE(empty.trials == 500);
    REQUIRE_FALSE(empty.converged);
    REQUIRE(empty.p_err_x == 0.0);
}

TEST_CASE("single-link experiment basics", "[mc][sampling]") {
    mc::EstimateOptions opt;
    opt.rel_error = 0.25;
    opt.budget = 200'000;
    opt.threads = 2;
    opt.links = 1;

    const auto gkp = mc::single_link_experiment({0.15}, mc::LinkScheme::gkp_only, 7, opt);
    const auto c4 = mc::single_link_experiment({0.15}, mc::LinkScheme::c4_analog, 7, opt);
    REQUIRE(gkp[0].converged);
    REQUIRE(c4[0].converged);
    // concatenation helps already at one link
    REQUIRE(c4[0].p_err < gkp[0].p_err);

    // loss monotonicity for the same scheme at well-separated points
    const auto low = mc::single_link_experiment({0.09}, mc::LinkScheme::gkp_only, 7, opt);
    REQUIRE(low[0].p_err < gkp[0].p_err);

    REQUIRE(mc::link_scheme_from_string("steane7-analog") == mc::LinkScheme::steane7_analog);
    REQUIRE_THROWS_AS(mc::link_scheme_from_string("nope"), std::invalid_argument);
}

TEST_CASE("trial log uses fixed-width records", "[mc]") {
    const auto path = std::filesystem::temp_directory_path() / "gkprep_trials.bin";
    mc::write_trial_log(path.string(), {0x1, 0x0, 0x3});
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 3 * 9);
    REQUIRE(bytes[0] == 0);   // trial id 0, little endian
    REQUIRE(bytes[8] == 1);   // flips of trial 0
    REQUIRE(bytes[9] == 1);   // trial id 1
    REQUIRE(bytes[17] == 0);
    REQUIRE(bytes[18] == 2);  // trial id 2
    REQUIRE(bytes[26] == 3);
    std::filesystem::remove(path);
}

TEST_CASE("chain model coefficient annotation matches the periodic solver", "[mc]") {
    mc::ChainConfig cfg;
    cfg.phys.fiber = FiberParams{0.98, 22.0};
    cfg.phys.squeezing = Squeezing::from_sigma(0.09);
    cfg.code = std::nullopt;
    cfg.n_multi = cfg.n_all = 40;
    const auto model = mc::ChainModel::build(cfg);

    const double g2 = 0.09 * 0.09;
    const double t2 = model.sigma_trans() * model.sigma_trans();
    const double steady = rescaling::steady_state_c(std::sqrt(g2 + t2), 0.09);
    int checked = 0;
    for (const auto& op : model.program()) {
        if (op.kind != mc::ChainModel::OpKind::gkp) continue;
        REQUIRE_THAT(op.c, WithinRel(steady, 1e-9));
        // data noise since the last same-quadrature correction plus the
        // fresh ancilla: (c g^2 + g^2 + t^2) + g^2
        REQUIRE_THAT(op.sigma_rec, WithinRel(std::sqrt(steady * g2 + 2.0 * g2 + t2), 1e-9));
        ++checked;
    }
    REQUIRE(checked == 2);
    // steady-state entry variance also seeds the trial initialization
    REQUIRE_THAT(model.init_sigma(0, Quadrature::p), WithinRel(std::sqrt(steady * g2), 1e-9));
    REQUIRE_THAT(model.init_sigma(0, Quadrature::q),
                 WithinRel(std::sqrt(steady * g2 + g2), 1e-9));
}
