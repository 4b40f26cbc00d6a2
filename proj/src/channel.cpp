#include "famac/channel.hpp"

#include <cmath>

namespace famac {

WeichselbergerModel WeichselbergerModel::from_g_tilde(CMatrix u_t, CMatrix u_r, RMatrix g_tilde) {
    WeichselbergerModel m;
    m.n_r = static_cast<int>(u_r.rows());
    m.n_t = static_cast<int>(u_t.rows());
    m.u_t = std::move(u_t);
    m.u_r = std::move(u_r);
    m.g = g_tilde.array().square().matrix();
    m.g_tilde = std::move(g_tilde);
    m.validate();
    return m;
}

void WeichselbergerModel::validate() const {
    if (n_r < 1 || n_t < 1) throw std::invalid_argument("model dimensions must be positive");
    if (u_t.rows() != n_t || u_t.cols() != n_t) throw std::invalid_argument("u_t must be n_t x n_t");
    if (u_r.rows() != n_r || u_r.cols() != n_r) throw std::invalid_argument("u_r must be n_r x n_r");
    if (g_tilde.rows() != n_r || g_tilde.cols() != n_t || g.rows() != n_r || g.cols() != n_t)
        throw std::invalid_argument("coupling matrices must be n_r x n_t");
    if ((u_t * u_t.adjoint() - CMatrix::Identity(n_t, n_t)).norm() > 1e-10)
        throw std::invalid_argument("u_t is not unitary");
    if ((u_r * u_r.adjoint() - CMatrix::Identity(n_r, n_r)).norm() > 1e-10)
        throw std::invalid_argument("u_r is not unitary");
    if (!g_tilde.allFinite() || (g_tilde.array() < 0.0).any())
        throw std::invalid_argument("g_tilde must be finite and nonnegative");
    if ((g - g_tilde.array().square().matrix()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("g must equal g_tilde squared");
}

SystemDims SystemDims::of(int k_users, int n_t, int n_r) {
    if (k_users < 1 || n_t < 1 || n_r < 1) throw std::invalid_argument("dimensions must be positive");
    return {k_users, n_t, n_r, static_cast<double>(n_t) / n_r};
}

CMatrix random_unitary(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("random_unitary needs n >= 1");
    std::mt19937_64 rng(seed);
    const CMatrix z = complex_gaussian(n, n, rng);
    Eigen::HouseholderQR<CMatrix> qr(z);
    CMatrix q = qr.householderQ() * CMatrix::Identity(n, n);
    const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i) {
        const double mag = std::abs(r(i, i));
        const cplx phase = mag > 0.0 ? r(i, i) / mag : cplx(1.0, 0.0);
        q.col(i) *= phase;
    }
    return q;
}

ChannelRealization sample_channel(const WeichselbergerModel& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const CMatrix w = complex_gaussian(model.n_r, model.n_t, rng);
    const CMatrix inner = model.g_tilde.cast<cplx>().cwiseProduct(w);
    return {model.u_r * inner * model.u_t.adjoint()};
}

CorrelationMatrices correlation_matrices(const WeichselbergerModel& model) {
    const RVector col = model.g.colwise().sum().transpose();
    const RVector row = model.g.rowwise().sum();
    return {model.u_t * col.cast<cplx>().asDiagonal() * model.u_t.adjoint(),
            model.u_r * row.cast<cplx>().asDiagonal() * model.u_r.adjoint()};
}

WeichselbergerModel kronecker_as_weichselberger(const RVector& r_t_eigvals, const RVector& r_r_eigvals,
                                                const CMatrix& u_t, const CMatrix& u_r) {
    if ((r_t_eigvals.array() < 0.0).any() || (r_r_eigvals.array() < 0.0).any())
        throw std::invalid_argument("correlation eigenvalues must be nonnegative");
    if (r_t_eigvals.size() != u_t.rows() || r_r_eigvals.size() != u_r.rows())
        throw std::invalid_argument("eigenvalue count does not match the unitary dimension");
    const double st = r_t_eigvals.sum();
    const double sr = r_r_eigvals.sum();
    if (std::abs(st - sr) > 1e-9 * std::max(1.0, std::max(st, sr)))
        throw std::invalid_argument("transmit and receive correlation traces differ");
    RMatrix g = RMatrix::Zero(r_r_eigvals.size(), r_t_eigvals.size());
    if (st > 0.0) g = r_r_eigvals * r_t_eigvals.transpose() / st;
    return WeichselbergerModel::from_g_tilde(u_t, u_r, g.array().sqrt().matrix());
}

WeichselbergerModel normalize_coupling(const WeichselbergerModel& model) {
    const double total = model.g.sum();
    if (!(total > 0.0)) throw std::invalid_argument("cannot normalize an all-zero coupling matrix");
    const double target = static_cast<double>(model.n_t) * model.n_r;
    WeichselbergerModel out = model;
    if (total == target) return out;
    const double scale = target / total;
    out.g_tilde *= std::sqrt(scale);
    out.g = out.g_tilde.array().square().matrix();
    return out;
}

double snr_to_power(double snr_db, const WeichselbergerModel& model) {
    const double total = model.g.sum();
    if (!(total > 0.0)) throw std::invalid_argument("SNR undefined for an all-zero coupling matrix");
    return std::pow(10.0, snr_db / 10.0) * model.n_t * model.n_r / total;
}

WeichselbergerModel random_model(int n_r, int n_t, std::uint64_t seed) {
    const CMatrix u_t = random_unitary(n_t, derive_seed(seed, {1}));
    const CMatrix u_r = random_unitary(n_r, derive_seed(seed, {2}));
    std::mt19937_64 rng(derive_seed(seed, {3}));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    RMatrix gt(n_r, n_t);
    for (int j = 0; j < n_t; ++j) {
        for (int i = 0; i < n_r; ++i) gt(i, j) = uni(rng);
    }
    return normalize_coupling(WeichselbergerModel::from_g_tilde(u_t, u_r, gt));
}

}  // namespace famac
