#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "famac/replica.hpp"
#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace famac;
using famac::testing::kronecker_reference;

namespace {

struct Instance {
    std::vector<WeichselbergerModel> models;
    std::vector<CMatrix> b;
    std::vector<VectorAlphabet> alphabets;
};

Instance random_instance(std::uint64_t seed, double snr_db, int users = 2) {
    Instance in;
    const Constellation q = make_constellation(Modulation::PSK, 4);
    for (int k = 0; k < users; ++k) {
        in.models.push_back(random_model(2, 2, derive_seed(seed, {static_cast<std::uint64_t>(k)})));
        const double p = snr_to_power(snr_db, in.models.back());
        const CMatrix v = random_unitary(2, derive_seed(seed, {100, static_cast<std::uint64_t>(k)}));
        in.b.push_back(std::sqrt(p / 2.0) * v);
        in.alphabets.emplace_back(q, 2);
    }
    return in;
}

void check_state_invariants(const FixedPointState& st, const std::vector<WeichselbergerModel>& models) {
    CMatrix r_sum = CMatrix::Zero(st.r_sum.rows(), st.r_sum.cols());
    for (std::size_t t = 0; t < st.users.size(); ++t) {
        const UserReplica& u = st.users[t];
        const WeichselbergerModel& m = models[t];
        const RVector dt = m.g.transpose() * u.gamma;
        const RVector dr = m.g * u.psi;
        CHECK((u.t_matrix - m.u_t * dt.cast<cplx>().asDiagonal() * m.u_t.adjoint()).norm() <= 1e-10);
        CHECK((u.r_matrix - m.u_r * dr.cast<cplx>().asDiagonal() * m.u_r.adjoint()).norm() <= 1e-10);
        CHECK(u.gamma.minCoeff() > 0.0);
        CHECK(u.gamma.maxCoeff() <= 1.0 + 1e-12);
        CHECK(u.psi.minCoeff() >= 0.0);
        r_sum += u.r_matrix;
    }
    CHECK((r_sum - st.r_sum).norm() <= 1e-10);
}

}  // namespace

TEST_CASE("zero precoders: gamma = 1, psi = 0, zero rate") {
    const Instance in = random_instance(1, 10.0);
    const std::vector<CMatrix> zero = {CMatrix::Zero(2, 2), CMatrix::Zero(2, 2)};
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 1);
    const FixedPointState st = solve_fixed_point(in.models, zero, in.alphabets, FixedPointConfig{}, n);
    CHECK(st.converged);
    CHECK(st.r_sum.norm() == 0.0);
    for (const auto& u : st.users) {
        CHECK(u.psi.cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((u.gamma - RVector::Ones(2)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    const AsymptoticRate r = asymptotic_conditional_mi(st, in.models, zero, in.alphabets, n);
    CHECK(std::abs(r.value_bits) <= 1e-12);
}

TEST_CASE("zero coupling: T = 0, R = 0, psi at the prior") {
    Instance in = random_instance(2, 5.0);
    for (auto& m : in.models) m = WeichselbergerModel::from_g_tilde(m.u_t, m.u_r, RMatrix::Zero(2, 2));
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 2);
    const FixedPointState st = solve_fixed_point(in.models, in.b, in.alphabets, FixedPointConfig{}, n);
    for (std::size_t t = 0; t < 2; ++t) {
        const auto& u = st.users[t];
        CHECK(u.t_matrix.norm() == 0.0);
        CHECK(u.r_matrix.norm() == 0.0);
        CHECK((u.gamma - RVector::Ones(2)).cwiseAbs().maxCoeff() <= 1e-12);
        const RVector prior = (in.models[t].u_t.adjoint() * in.b[t] * in.b[t].adjoint() * in.models[t].u_t).diagonal().real();
        CHECK((u.psi - prior).cwiseAbs().maxCoeff() <= 1e-5);
    }
    CHECK(std::abs(rate_from_state(st, in.models).value_bits) <= 1e-12);
}

TEST_CASE("random instances converge and return the minimum over starts") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 300, 3);
    FixedPointConfig cfg;
    cfg.n_starts = 5;
    for (std::uint64_t s = 0; s < 4; ++s) {
        const double snr = -5.0 + 5.0 * static_cast<double>(s);
        const Instance in = random_instance(10 + s, snr);
        cfg.seed = s;
        const FixedPointState st = solve_fixed_point(in.models, in.b, in.alphabets, cfg, n);
        CHECK(st.converged);
        CHECK(st.residual < 1e-6);
        check_state_invariants(st, in.models);
        const AsymptoticRate r = rate_from_state(st, in.models);
        REQUIRE(!st.start_values.empty());
        CHECK(r.value_bits == *std::min_element(st.start_values.begin(), st.start_values.end()));
        CHECK(r.value_bits == doctest::Approx(std::accumulate(r.per_user_mi.begin(), r.per_user_mi.end(), 0.0) +
                                              r.logdet_term - r.correction_term));
        if (snr <= 0.0) {
            // Low SNR: a single fixed point, reached from every start.
            CHECK(st.start_values.size() == 5);
            const auto [lo, hi] = std::minmax_element(st.start_values.begin(), st.start_values.end());
            CHECK(*hi - *lo <= 1e-5);
        }
    }
}

TEST_CASE("fresh and cached MI terms agree; unconverged states are rejected") {
    const Instance in = random_instance(4, 3.0);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 4);
    FixedPointState st = solve_fixed_point(in.models, in.b, in.alphabets, FixedPointConfig{}, n);
    const AsymptoticRate fresh = asymptotic_conditional_mi(st, in.models, in.b, in.alphabets, n);
    CHECK(fresh.value_bits == doctest::Approx(rate_from_state(st, in.models).value_bits).epsilon(1e-12));
    st.converged = false;
    CHECK_THROWS_AS(asymptotic_conditional_mi(st, in.models, in.b, in.alphabets, n), InvalidStateError);
}

TEST_CASE("per-user terms depend on other users only through gamma") {
    const Instance in = random_instance(5, 5.0);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 5);
    const FixedPointState st = solve_fixed_point(in.models, in.b, in.alphabets, FixedPointConfig{}, n);
    std::vector<CMatrix> other = in.b;
    other[1] = 0.3 * random_unitary(2, 99);
    const AsymptoticRate a = asymptotic_conditional_mi(st, in.models, in.b, in.alphabets, n);
    const AsymptoticRate b = asymptotic_conditional_mi(st, in.models, other, in.alphabets, n);
    CHECK(a.per_user_mi[0] == b.per_user_mi[0]);
    CHECK(a.per_user_mi[1] != b.per_user_mi[1]);
}

TEST_CASE("asymptotic WSR bookkeeping") {
    const Instance in = random_instance(6, 5.0);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 6);
    const FixedPointConfig cfg;

    const WsrEvaluation sum = asymptotic_wsr(in.models, in.b, RVector::Ones(2), in.alphabets, cfg, n);
    CHECK(!sum.states[0].has_value());
    REQUIRE(sum.states[1].has_value());
    CHECK(sum.value_bits == rate_from_state(*sum.states[1], in.models).value_bits);

    RVector w(2);
    w << 1.0, 0.0;
    const WsrEvaluation first = asymptotic_wsr(in.models, in.b, w, in.alphabets, cfg, n);
    REQUIRE(first.states[0].has_value());
    CHECK(!first.states[1].has_value());
    const std::vector<WeichselbergerModel> one(in.models.begin(), in.models.begin() + 1);
    const FixedPointState single = solve_fixed_point(one, {in.b[0]}, {in.alphabets[0]}, cfg, n);
    CHECK(first.value_bits == doctest::Approx(rate_from_state(single, one).value_bits).epsilon(1e-12));

    const WsrEvaluation k1 = asymptotic_wsr(one, {in.b[0]}, RVector::Ones(1), {in.alphabets[0]}, cfg, n);
    CHECK(k1.value_bits == doctest::Approx(first.value_bits).epsilon(1e-12));

    w << 2.0, 0.5;
    const WsrEvaluation weighted = asymptotic_wsr(in.models, in.b, w, in.alphabets, cfg, n, true);
    CHECK(weighted.value_bits == doctest::Approx(1.5 * weighted.rates[0]->value_bits + 0.5 * weighted.rates[1]->value_bits));

    w << 0.5, 1.0;
    CHECK_THROWS_AS(asymptotic_wsr(in.models, in.b, w, in.alphabets, cfg, n), std::invalid_argument);
}

TEST_CASE("rank-one couplings match the dedicated Kronecker evaluation") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 300, 7);
    const Constellation q = make_constellation(Modulation::PSK, 4);
    for (std::uint64_t s = 0; s < 3; ++s) {
        std::mt19937_64 rng(s);
        std::uniform_real_distribution<double> uni(0.2, 1.5);
        std::vector<RVector> a(2), bv(2);
        std::vector<CMatrix> ut(2), ur(2), b(2);
        std::vector<WeichselbergerModel> models;
        std::vector<VectorAlphabet> alph;
        for (int t = 0; t < 2; ++t) {
            a[t] = RVector(2);
            bv[t] = RVector(2);
            a[t] << uni(rng), uni(rng);
            bv[t] << uni(rng), uni(rng);
            bv[t] *= a[t].sum() / bv[t].sum();
            ut[t] = random_unitary(2, 300 + 10 * s + t);
            ur[t] = random_unitary(2, 400 + 10 * s + t);
            b[t] = 0.8 * random_unitary(2, 500 + 10 * s + t);
            models.push_back(kronecker_as_weichselberger(bv[t], a[t], ut[t], ur[t]));
            alph.emplace_back(q, 2);
        }
        // The stored coupling is a bᵀ / Σa; feed the reference the same factors.
        std::vector<RVector> a_ref(2);
        for (int t = 0; t < 2; ++t) a_ref[t] = a[t] / a[t].sum();
        FixedPointConfig cfg;
        cfg.tol = 1e-12;
        cfg.max_iter = 2000;
        const FixedPointState st = solve_fixed_point(models, b, alph, cfg, n);
        const double lib = rate_from_state(st, models).value_bits;
        const double ref = kronecker_reference(a_ref, bv, ut, ur, b, alph, n);
        CHECK(std::abs(lib - ref) <= 1e-9);
    }
}

TEST_CASE("users with different receive eigenbases converge") {
    const Instance in = random_instance(8, 8.0, 3);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 8);
    const FixedPointState st = solve_fixed_point(in.models, in.b, in.alphabets, FixedPointConfig{}, n);
    CHECK(st.converged);
    CHECK(st.residual < 1e-6);
    check_state_invariants(st, in.models);
}

TEST_CASE("an exhausted iteration budget raises a convergence error") {
    const Instance in = random_instance(9, 10.0);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 100, 9);
    FixedPointConfig cfg;
    cfg.max_iter = 1;
    cfg.tol = 1e-300;
    try {
        solve_fixed_point(in.models, in.b, in.alphabets, cfg, n);
        FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
        CHECK(e.best_residual() > 0.0);
    }
}

TEST_CASE("warm starts reproduce the branch they start on") {
    const Instance in = random_instance(10, 4.0);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 10);
    FixedPointConfig cfg;
    cfg.tol = 1e-10;
    const FixedPointState st = solve_fixed_point(in.models, in.b, in.alphabets, cfg, n);
    std::vector<RVector> psi;
    for (const auto& u : st.users) psi.push_back(u.psi);
    cfg.n_starts = 0;
    const FixedPointState warm = solve_fixed_point(in.models, in.b, in.alphabets, cfg, n, &psi);
    CHECK(warm.start_index == -1);
    CHECK(warm.iterations <= 2);
    CHECK(rate_from_state(warm, in.models).value_bits == doctest::Approx(rate_from_state(st, in.models).value_bits).epsilon(1e-9));
}
