#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "famac/mi_engine.hpp"

#include <cmath>
#include <functional>

using namespace famac;

namespace {

// Expectation of f(x) for x ~ N(0, 1/2) by Gauss–Hermite quadrature
// (independent of the library's ensemble code).
double gh_expect(const std::function<double(double)>& f, int n = 120) {
    RMatrix j = RMatrix::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<RMatrix> es(j);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
        s += w * f(es.eigenvalues()(i));
    }
    return s;
}

// BPSK per-noise-sample MI (bits) at amplitude s, averaged over both symbols.
double bpsk_mi_sample(double s, double x) {
    auto l2 = [](double e) { return e > 0 ? e * kLog2e + std::log2(1.0 + std::exp(-e)) : std::log2(1.0 + std::exp(e)); };
    return 1.0 - 0.5 * (l2(-4 * s * s + 4 * s * x) + l2(-4 * s * s - 4 * s * x));
}

// BPSK per-noise-sample posterior variance 1 − d̂², averaged over both symbols.
double bpsk_mmse_sample(double s, double x) {
    const double a = std::tanh(2 * s * (s - x));
    const double b = std::tanh(2 * s * (-s - x));
    return 0.5 * ((1 - a * a) + (1 - b * b));
}

VectorAlphabet bpsk(int n) { return VectorAlphabet(make_constellation(Modulation::PSK, 2), n); }
VectorAlphabet qpsk(int n) { return VectorAlphabet(make_constellation(Modulation::PSK, 4), n); }

CMatrix random_psd(int n, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    const CMatrix a = complex_gaussian(n, n, rng);
    return scale * a * a.adjoint() / n;
}

CMatrix random_matrix(int n, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    return scale * complex_gaussian(n, n, rng);
}

}  // namespace

TEST_CASE("noise ensembles") {
    const NoiseEnsemble a = NoiseEnsemble::monte_carlo(2, 100, 9);
    const NoiseEnsemble b = NoiseEnsemble::monte_carlo(2, 100, 9);
    CHECK(a.samples == b.samples);
    CHECK(a.weights.sum() == doctest::Approx(1.0));
    CHECK(a.count == 100);

    const NoiseEnsemble q = NoiseEnsemble::gauss_hermite(2, 6);
    CHECK(q.count == 1296);
    CHECK(q.quadrature);
    CHECK(std::abs(q.weights.sum() - 1.0) <= 1e-12);
    // Exact low-order moments of CN(0, I).
    double m2 = 0.0, m4 = 0.0;
    cplx m1 = 0.0;
    for (Eigen::Index i = 0; i < q.samples.cols(); ++i) {
        m1 += q.weights(i) * q.samples(0, i);
        m2 += q.weights(i) * std::norm(q.samples(0, i));
        m4 += q.weights(i) * std::norm(q.samples(0, i)) * std::norm(q.samples(1, i));
    }
    CHECK(std::abs(m1) <= 1e-12);
    CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m4 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(NoiseEnsemble::gauss_hermite(4, 20), ResourceLimitError);

    // Pruning drops negligible nodes and keeps the moments.
    const NoiseEnsemble pr = NoiseEnsemble::gauss_hermite(2, 12, 4'000'000, 1e-8);
    CHECK(pr.count < 20736);
    CHECK(pr.samples.cols() == static_cast<Eigen::Index>(pr.count));
    CHECK(std::abs(pr.weights.sum() - 1.0) <= 1e-12);
    double p2 = 0.0;
    for (Eigen::Index i = 0; i < pr.samples.cols(); ++i) p2 += pr.weights(i) * std::norm(pr.samples(0, i));
    CHECK(std::abs(p2 - 1.0) <= 1e-6);
    CHECK_THROWS_AS(NoiseEnsemble::gauss_hermite(2, 4, 4'000'000, 1.0), std::invalid_argument);
}

TEST_CASE("zero precoder or zero T carries no information") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 1);
    const VectorAlphabet a = qpsk(2);
    const CMatrix t = random_psd(2, 3, 2.0);
    CHECK(deterministic_mi(t, CMatrix::Zero(2, 2), a, n) == 0.0);
    CHECK(deterministic_mi(CMatrix::Zero(2, 2), CMatrix::Identity(2, 2), a, n) == 0.0);
    const MseMatrices m = mmse_matrices(t, CMatrix::Zero(2, 2), a, n);
    CHECK((m.e - CMatrix::Identity(2, 2)).norm() <= 1e-12);
    CHECK(m.omega.norm() == 0.0);
}

TEST_CASE("BPSK scalar channel matches 1-D quadrature") {
    const double s = std::sqrt(10.0);
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(1, 4000, 21);
    const VectorAlphabet a = bpsk(1);
    const CMatrix t = CMatrix::Identity(1, 1);

    const double mean = gh_expect([&](double x) { return bpsk_mi_sample(s, x); });
    const double var = gh_expect([&](double x) { return std::pow(bpsk_mi_sample(s, x) - mean, 2); });
    const MiMmse r = mi_and_mmse(t, CMatrix::Constant(1, 1, s), a, n);
    CHECK(std::abs(r.raw_mi_bits - mean) <= 3.0 * std::sqrt(var / n.count));

    // The engine's standard error estimates the same quantity.
    CHECK(r.std_err == doctest::Approx(std::sqrt(var / n.count)).epsilon(0.2));

    const double e_mean = gh_expect([&](double x) { return bpsk_mmse_sample(1.0, x); });
    const double e_var = gh_expect([&](double x) { return std::pow(bpsk_mmse_sample(1.0, x) - e_mean, 2); });
    const MseMatrices m = mmse_matrices(t, CMatrix::Identity(1, 1), a, n);
    CHECK(std::abs(m.e(0, 0).real() - e_mean) <= 3.0 * std::sqrt(e_var / n.count));
}

TEST_CASE("perfect detection limit") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 200, 4);
    const MiMmse r = mi_and_mmse(1e6 * CMatrix::Identity(2, 2), CMatrix::Identity(2, 2), bpsk(2), n);
    CHECK(r.mse.e.cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(r.mi_bits == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("range, PSD and trace bounds on random inputs") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 300, 5);
    const VectorAlphabet a = qpsk(2);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const CMatrix t = random_psd(2, 100 + s, 1.0 + s);
        const CMatrix b = random_matrix(2, 200 + s, 1.0);
        const MiMmse r = mi_and_mmse(t, b, a, n);
        CHECK(r.raw_mi_bits >= -3.0 * r.std_err);
        CHECK(r.raw_mi_bits <= 4.0 + 3.0 * r.std_err);
        CHECK(r.mi_bits >= 0.0);
        CHECK(r.mi_bits <= 4.0);
        CHECK((r.mse.e - r.mse.e.adjoint()).norm() <= 1e-10);
        CHECK((r.mse.omega - r.mse.omega.adjoint()).norm() <= 1e-10);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(r.mse.e);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-10);
        Eigen::SelfAdjointEigenSolver<CMatrix> eo(r.mse.omega);
        CHECK(eo.eigenvalues().minCoeff() >= -1e-10);
        CHECK(r.mse.omega.trace().real() <= (b * b.adjoint()).trace().real() + 1e-9);
    }
}

TEST_CASE("rotations that map the alphabet onto itself leave MI unchanged") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 300, 6);
    const VectorAlphabet a = qpsk(2);
    const CMatrix t = random_psd(2, 7, 3.0);
    const CMatrix b = random_matrix(2, 8, 1.0);
    CMatrix rot = CMatrix::Zero(2, 2);
    rot(0, 0) = cplx(0.0, 1.0);
    rot(1, 1) = cplx(-1.0, 0.0);
    CHECK(std::abs(deterministic_mi(t, b, a, n) - deterministic_mi(t, b * rot, a, n)) <= 1e-9);
}

TEST_CASE("MI is nondecreasing in a scale on T") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 400, 10);
    const VectorAlphabet a = qpsk(2);
    const CMatrix t = random_psd(2, 11, 1.0);
    const CMatrix b = random_matrix(2, 12, 1.0);
    double prev = -1.0;
    double prev_se = 0.0;
    for (double c : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0}) {
        const MiMmse r = mi_and_mmse(c * t, b, a, n, false);
        CHECK(r.mi_bits >= prev - std::max(r.std_err, prev_se));
        prev = r.mi_bits;
        prev_se = r.std_err;
    }
}

TEST_CASE("invalid inputs") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 10, 1);
    CMatrix bad = CMatrix::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS_AS(deterministic_mi(bad, CMatrix::Identity(2, 2), qpsk(2), n), std::invalid_argument);
    CHECK_THROWS_AS(mmse_matrices(bad, CMatrix::Identity(2, 2), qpsk(2), n), std::invalid_argument);
    CHECK_THROWS_AS(deterministic_mi(CMatrix::Identity(3, 3), CMatrix::Identity(3, 3), qpsk(3), n),
                    std::invalid_argument);
}

TEST_CASE("results do not depend on the thread count") {
    const NoiseEnsemble n = NoiseEnsemble::monte_carlo(2, 500, 13);
    const CMatrix t = random_psd(2, 14, 2.0);
    const CMatrix b = random_matrix(2, 15, 1.0);
    set_thread_count(1);
    const MiMmse one = mi_and_mmse(t, b, qpsk(2), n);
    set_thread_count(4);
    const MiMmse four = mi_and_mmse(t, b, qpsk(2), n);
    set_thread_count(0);
    CHECK(one.mi_bits == four.mi_bits);
    CHECK(one.mse.e == four.mse.e);
}

TEST_CASE("MMSE-MI identity against finite differences") {
    const NoiseEnsemble n = NoiseEnsemble::gauss_hermite(2, 10);
    const VectorAlphabet a = qpsk(2);
    const CMatrix u = random_unitary(2, 30);
    RVector g_row(2);
    g_row << 0.7, 1.3;
    const CMatrix dir = u * g_row.cast<cplx>().asDiagonal() * u.adjoint();
    for (std::uint64_t s = 0; s < 3; ++s) {
        const CMatrix t = random_psd(2, 40 + s, 0.5);
        const CMatrix b = random_matrix(2, 50 + s, 0.8);
        const double analytic = mi_gamma_partial(t, b, a, n, g_row, u);
        const double h = 1e-4;
        const double fd = (mi_and_mmse(t + h * dir, b, a, n, false).raw_mi_bits -
                           mi_and_mmse(t - h * dir, b, a, n, false).raw_mi_bits) /
                          (2 * h);
        CHECK(std::abs(analytic - fd) <= 1e-3 * std::abs(fd));
    }
    CHECK(mi_gamma_partial(CMatrix::Identity(2, 2), CMatrix::Zero(2, 2), a, n, g_row, u) == 0.0);
    CHECK(mi_gamma_partial(CMatrix::Identity(2, 2), CMatrix::Identity(2, 2), a, n, RVector::Zero(2), u) == 0.0);
}

TEST_CASE("exact Monte Carlo MI") {
    const Constellation q = make_constellation(Modulation::PSK, 4);
    std::vector<WeichselbergerModel> models = {random_model(2, 2, 1), random_model(2, 2, 2)};
    const std::vector<VectorAlphabet> alph = {VectorAlphabet(q, 2), VectorAlphabet(q, 2)};
    McConfig cfg;
    cfg.n_channels = 100;
    cfg.n_noise = 16;
    cfg.seed = 3;

    SUBCASE("zero precoders give zero") {
        const McEstimate e = exact_conditional_mi_mc(models, {CMatrix::Zero(2, 2), CMatrix::Zero(2, 2)}, {0, 1}, alph, cfg);
        CHECK(std::abs(e.value_bits) <= 1e-12);
        CHECK(e.std_err <= 1e-12);
    }
    SUBCASE("vanishing coupling gives zero") {
        std::vector<WeichselbergerModel> tiny = models;
        for (auto& m : tiny) m = WeichselbergerModel::from_g_tilde(m.u_t, m.u_r, 1e-5 * m.g_tilde);
        const McEstimate e = exact_conditional_mi_mc(tiny, {CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)}, {0, 1}, alph, cfg);
        CHECK(std::abs(e.value_bits) <= 1e-4);
    }
    SUBCASE("saturates at K n_t log2 Q at 30 dB") {
        const double p = snr_to_power(30.0, models[0]);
        const CMatrix b = std::sqrt(p / 2.0) * CMatrix::Identity(2, 2);
        const McEstimate e = exact_conditional_mi_mc(models, {b, b}, {0, 1}, alph, cfg);
        CHECK(std::abs(e.value_bits - 8.0) <= 0.15);
    }
    SUBCASE("joint alphabet cap") {
        McConfig capped = cfg;
        capped.alphabet_cap = 100;
        CHECK_THROWS_AS(exact_conditional_mi_mc(models, {CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)}, {0, 1}, alph, capped),
                        ResourceLimitError);
    }
    SUBCASE("reproducible") {
        const std::vector<CMatrix> b = {CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)};
        const McEstimate e1 = exact_conditional_mi_mc(models, b, {0}, alph, cfg);
        const McEstimate e2 = exact_conditional_mi_mc(models, b, {0}, alph, cfg);
        CHECK(e1.value_bits == e2.value_bits);
        CHECK(e1.std_err > 0.0);
    }
}

TEST_CASE("exact MC on a scalar Rayleigh BPSK link matches nested quadrature") {
    // Oracle: ∫ e^{-u} I_BPSK(u·P) du with |h|² ~ Exp(1) by composite Simpson.
    const double p = 2.0;
    auto mi_at = [](double snr) {
        const double s = std::sqrt(snr);
        return gh_expect([&](double x) { return bpsk_mi_sample(s, x); }, 60);
    };
    const int n = 2000;
    const double umax = 40.0;
    const double h = umax / n;
    double oracle = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double u = i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        oracle += w * std::exp(-u) * mi_at(u * p);
    }
    oracle *= h / 3.0;

    const WeichselbergerModel m = WeichselbergerModel::from_g_tilde(CMatrix::Identity(1, 1), CMatrix::Identity(1, 1),
                                                                    RMatrix::Ones(1, 1));
    McConfig cfg;
    cfg.n_channels = 4000;
    cfg.n_noise = 32;
    cfg.seed = 8;
    const McEstimate e = exact_conditional_mi_mc({m}, {CMatrix::Constant(1, 1, std::sqrt(p))}, {0}, {bpsk(1)}, cfg);
    CHECK(std::abs(e.value_bits - oracle) <= 4.0 * e.std_err);
    CHECK(e.std_err < 0.02);
}
