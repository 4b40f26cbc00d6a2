#include "famac/replica.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace famac {

namespace {

void check_inputs(const std::vector<WeichselbergerModel>& models, const std::vector<CMatrix>& precoders,
                  const std::vector<VectorAlphabet>& alphabets) {
    if (models.empty()) throw std::invalid_argument("at least one user is required");
    if (precoders.size() < models.size() || alphabets.size() < models.size())
        throw std::invalid_argument("need a precoder and an alphabet for every user");
    const int n_r = models.front().n_r;
    for (std::size_t t = 0; t < models.size(); ++t) {
        if (models[t].n_r != n_r) throw std::invalid_argument("all users must share n_r");
        if (precoders[t].rows() != models[t].n_t || precoders[t].cols() != models[t].n_t)
            throw std::invalid_argument("precoders must be n_t x n_t");
        if (alphabets[t].n_t() != models[t].n_t) throw std::invalid_argument("alphabet dimension must equal n_t");
    }
}

CMatrix build_r(const WeichselbergerModel& m, const RVector& psi) {
    const RVector d = m.g * psi;
    return m.u_r * d.cast<cplx>().asDiagonal() * m.u_r.adjoint();
}

CMatrix build_t(const WeichselbergerModel& m, const RVector& gamma) {
    const RVector d = m.g.transpose() * gamma;
    return m.u_t * d.cast<cplx>().asDiagonal() * m.u_t.adjoint();
}

// γ_t from ψ: quadratic forms of (I + R_A)⁻¹ in each user's receive eigenbasis.
std::vector<RVector> gammas_from_psi(const std::vector<WeichselbergerModel>& models, const std::vector<RVector>& psi,
                                     CMatrix& r_sum) {
    const int n_r = models.front().n_r;
    r_sum = CMatrix::Zero(n_r, n_r);
    for (std::size_t t = 0; t < models.size(); ++t) r_sum += build_r(models[t], psi[t]);
    const CMatrix a = CMatrix::Identity(n_r, n_r) + (r_sum + r_sum.adjoint()) / 2.0;
    const CMatrix inv = a.llt().solve(CMatrix::Identity(n_r, n_r));
    std::vector<RVector> gammas;
    gammas.reserve(models.size());
    for (const auto& m : models) gammas.push_back((m.u_r.adjoint() * inv * m.u_r).diagonal().real());
    return gammas;
}

double log2det_identity_plus(const CMatrix& r) {
    const CMatrix a = CMatrix::Identity(r.rows(), r.cols()) + (r + r.adjoint()) / 2.0;
    Eigen::LLT<CMatrix> llt(a);
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) s += std::log(llt.matrixL()(i, i).real());
    return 2.0 * s * kLog2e;
}

FixedPointState finalize(const std::vector<WeichselbergerModel>& models, const std::vector<CMatrix>& precoders,
                         const std::vector<VectorAlphabet>& alphabets, const NoiseEnsemble& noise,
                         const std::vector<RVector>& psi) {
    FixedPointState st;
    st.subset_k = static_cast<int>(models.size());
    const std::vector<RVector> gammas = gammas_from_psi(models, psi, st.r_sum);
    for (std::size_t t = 0; t < models.size(); ++t) {
        UserReplica u;
        u.gamma = gammas[t];
        u.psi = psi[t];
        u.t_matrix = build_t(models[t], u.gamma);
        u.r_matrix = build_r(models[t], u.psi);
        const MiMmse mm = mi_and_mmse(u.t_matrix, precoders[t], alphabets[t], noise, true);
        u.mse = mm.mse;
        u.mi_bits = mm.mi_bits;
        st.users.push_back(std::move(u));
    }
    return st;
}

RVector stack(const std::vector<RVector>& parts) {
    Eigen::Index n = 0;
    for (const auto& p : parts) n += p.size();
    RVector out(n);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.segment(at, p.size()) = p;
        at += p.size();
    }
    return out;
}

std::vector<RVector> unstack(const RVector& x, const std::vector<RVector>& shape) {
    std::vector<RVector> out;
    Eigen::Index at = 0;
    for (const auto& p : shape) {
        out.push_back(x.segment(at, p.size()));
        at += p.size();
    }
    return out;
}

// One undamped update ψ -> h(f(ψ)).
std::vector<RVector> picard_map(const std::vector<WeichselbergerModel>& models, const std::vector<CMatrix>& precoders,
                                const std::vector<VectorAlphabet>& alphabets, const NoiseEnsemble& noise,
                                const std::vector<RVector>& psi) {
    CMatrix r_sum;
    const std::vector<RVector> gammas = gammas_from_psi(models, psi, r_sum);
    std::vector<RVector> next(models.size());
    for (std::size_t t = 0; t < models.size(); ++t) {
        const CMatrix tm = build_t(models[t], gammas[t]);
        const MseMatrices mse = mmse_matrices(tm, precoders[t], alphabets[t], noise);
        next[t] = (models[t].u_t.adjoint() * mse.omega * models[t].u_t).diagonal().real().cwiseMax(0.0);
    }
    return next;
}

// Damped Picard iteration with Anderson acceleration (memory kAndersonDepth)
// on the stacked ψ. Near a bifurcation the plain map contracts too slowly
// to reach the tolerance within the iteration budget.
constexpr int kAndersonDepth = 5;

FixedPointState run_start(const std::vector<WeichselbergerModel>& models, const std::vector<CMatrix>& precoders,
                          const std::vector<VectorAlphabet>& alphabets, const FixedPointConfig& cfg,
                          const NoiseEnsemble& noise, std::vector<RVector> psi) {
    const double mix = 1.0 - cfg.damping;
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;
    int it = 0;
    RVector x = stack(psi);
    std::vector<RVector> dx_hist, dr_hist;
    // Last accepted iterate and its residual.
    RVector x_acc, r_acc;
    double res_acc = std::numeric_limits<double>::infinity();
    bool extrapolated = false;
    // Plain damped steps still owed before extrapolating again; doubles on
    // every rejected extrapolation so the iteration degrades to damped Picard.
    int plain_left = 0;
    int backoff = 1;
    while (it < cfg.max_iter) {
        ++it;
        const std::vector<RVector> next = picard_map(models, precoders, alphabets, noise, unstack(x, psi));
        const RVector gx = stack(next);
        const RVector r = gx - x;
        residual = r.cwiseAbs().maxCoeff();
        if (residual < cfg.tol) {
            x = gx;
            converged = true;
            break;
        }
        if (extrapolated && !(residual < res_acc)) {
            // The extrapolation did not help: take a plain damped step from
            // the last accepted iterate instead, with empty history.
            dx_hist.clear();
            dr_hist.clear();
            x = (x_acc + mix * r_acc).cwiseMax(0.0);
            extrapolated = false;
            plain_left = backoff;
            backoff = std::min(2 * backoff, cfg.max_iter);
            continue;
        }
        if (x_acc.size() == x.size()) {
            dx_hist.push_back(x - x_acc);
            dr_hist.push_back(r - r_acc);
            if (static_cast<int>(dx_hist.size()) > kAndersonDepth) {
                dx_hist.erase(dx_hist.begin());
                dr_hist.erase(dr_hist.begin());
            }
        }
        x_acc = x;
        r_acc = r;
        res_acc = residual;
        RVector step = mix * r;
        extrapolated = !dr_hist.empty() && plain_left == 0;
        if (plain_left > 0) --plain_left;
        if (extrapolated) {
            const auto m = static_cast<Eigen::Index>(dr_hist.size());
            RMatrix dr(x.size(), m), dxm(x.size(), m);
            for (Eigen::Index j = 0; j < m; ++j) {
                dr.col(j) = dr_hist[static_cast<std::size_t>(j)];
                dxm.col(j) = dx_hist[static_cast<std::size_t>(j)];
            }
            const RMatrix gram = dr.transpose() * dr + 1e-12 * (1.0 + dr.squaredNorm()) * RMatrix::Identity(m, m);
            const RVector theta = gram.ldlt().solve(dr.transpose() * r);
            step -= (dxm + mix * dr) * theta;
            if (!step.allFinite()) {
                dx_hist.clear();
                dr_hist.clear();
                step = mix * r;
                extrapolated = false;
            }
        }
        x = (x + step).cwiseMax(0.0);
    }
    if (!converged && x_acc.size() == x.size()) {
        x = x_acc;
        residual = res_acc;
    }
    FixedPointState st = finalize(models, precoders, alphabets, noise, unstack(x, psi));
    st.residual = residual;
    st.iterations = it;
    st.converged = converged;
    return st;
}

}  // namespace

std::uint64_t precoder_hash(const std::vector<CMatrix>& precoders, int k) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (int t = 0; t < k && t < static_cast<int>(precoders.size()); ++t) {
        const Eigen::Index dims[2] = {precoders[t].rows(), precoders[t].cols()};
        mix(dims, sizeof(dims));
        mix(precoders[t].data(), sizeof(cplx) * static_cast<std::size_t>(precoders[t].size()));
    }
    return h;
}

FixedPointState solve_fixed_point(const std::vector<WeichselbergerModel>& models,
                                  const std::vector<CMatrix>& precoders,
                                  const std::vector<VectorAlphabet>& alphabets, const FixedPointConfig& cfg,
                                  const NoiseEnsemble& noise, const std::vector<RVector>* warm_psi) {
    check_inputs(models, precoders, alphabets);
    if (!(cfg.tol > 0.0) || cfg.max_iter < 1 || cfg.damping < 0.0 || cfg.damping >= 1.0 || cfg.n_starts < 0)
        throw std::invalid_argument("invalid fixed-point configuration");
    if (cfg.n_starts == 0 && warm_psi == nullptr) throw std::invalid_argument("no fixed-point start requested");
    const std::size_t k = models.size();

    std::vector<std::pair<int, std::vector<RVector>>> starts;
    if (warm_psi != nullptr) {
        if (warm_psi->size() != k) throw std::invalid_argument("warm start must hold one psi per user");
        starts.emplace_back(-1, *warm_psi);
    }
    for (int s = 0; s < cfg.n_starts; ++s) {
        std::vector<RVector> psi(k);
        std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(s)}));
        for (std::size_t t = 0; t < k; ++t) {
            const CMatrix& b = precoders[t];
            const int n_t = models[t].n_t;
            if (s == 0) {
                psi[t] = RVector::Zero(n_t);
            } else if (s == 1) {
                psi[t] = (models[t].u_t.adjoint() * b * b.adjoint() * models[t].u_t).diagonal().real();
            } else {
                std::uniform_real_distribution<double> uni(0.0, b.squaredNorm() / n_t);
                psi[t].resize(n_t);
                for (int m = 0; m < n_t; ++m) psi[t](m) = uni(rng);
            }
        }
        starts.emplace_back(s, std::move(psi));
    }

    std::optional<FixedPointState> best;
    double best_value = std::numeric_limits<double>::infinity();
    double best_residual = std::numeric_limits<double>::infinity();
    std::vector<double> values;
    for (auto& [index, psi] : starts) {
        FixedPointState st = run_start(models, precoders, alphabets, cfg, noise, psi);
        best_residual = std::min(best_residual, st.residual);
        if (!st.converged) continue;
        const double v = rate_from_state(st, models).value_bits;
        values.push_back(v);
        if (v < best_value) {
            best_value = v;
            st.start_index = index;
            best = std::move(st);
        }
    }
    if (!best) {
        throw ConvergenceError("fixed point did not converge for the set of the first " + std::to_string(k) +
                                   " users (best residual " + std::to_string(best_residual) + ")",
                               best_residual);
    }
    best->start_values = std::move(values);
    best->precoder_hash = precoder_hash(precoders, static_cast<int>(k));
    return *best;
}

AsymptoticRate rate_from_state(const FixedPointState& state, const std::vector<WeichselbergerModel>& models) {
    if (models.size() < state.users.size()) throw std::invalid_argument("fewer models than users in the state");
    AsymptoticRate r;
    r.logdet_term = log2det_identity_plus(state.r_sum);
    double corr = 0.0;
    double mi = 0.0;
    for (std::size_t t = 0; t < state.users.size(); ++t) {
        const UserReplica& u = state.users[t];
        r.per_user_mi.push_back(u.mi_bits);
        mi += u.mi_bits;
        corr += u.gamma.dot(models[t].g * u.psi);
    }
    r.correction_term = kLog2e * corr;
    r.value_bits = mi + r.logdet_term - r.correction_term;
    return r;
}

AsymptoticRate asymptotic_conditional_mi(const FixedPointState& state,
                                         const std::vector<WeichselbergerModel>& models,
                                         const std::vector<CMatrix>& precoders,
                                         const std::vector<VectorAlphabet>& alphabets, const NoiseEnsemble& noise) {
    if (!state.converged) throw InvalidStateError("fixed-point state has not converged");
    if (models.size() < state.users.size() || precoders.size() < state.users.size() ||
        alphabets.size() < state.users.size())
        throw std::invalid_argument("inputs do not cover every user of the state");
    FixedPointState fresh = state;
    for (std::size_t t = 0; t < state.users.size(); ++t) {
        fresh.users[t].mi_bits = deterministic_mi(state.users[t].t_matrix, precoders[t], alphabets[t], noise);
    }
    return rate_from_state(fresh, models);
}

WsrEvaluation asymptotic_wsr(const std::vector<WeichselbergerModel>& models,
                             const std::vector<CMatrix>& precoders, const RVector& weights_mu,
                             const std::vector<VectorAlphabet>& alphabets, const FixedPointConfig& cfg,
                             const NoiseEnsemble& noise, bool all_k, const WsrEvaluation* warm) {
    check_inputs(models, precoders, alphabets);
    const auto k_users = static_cast<Eigen::Index>(models.size());
    if (weights_mu.size() != k_users) throw std::invalid_argument("one weight per user is required");
    for (Eigen::Index k = 0; k < k_users; ++k) {
        if (!(weights_mu(k) >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
        if (k > 0 && weights_mu(k) > weights_mu(k - 1))
            throw std::invalid_argument("weights must be sorted in nonincreasing order");
    }
    WsrEvaluation out;
    out.states.resize(models.size());
    out.rates.resize(models.size());
    for (Eigen::Index k = 1; k <= k_users; ++k) {
        const double delta = weights_mu(k - 1) - (k < k_users ? weights_mu(k) : 0.0);
        if (!(delta > 0.0) && !all_k) continue;
        const std::vector<WeichselbergerModel> sub_models(models.begin(), models.begin() + k);
        const std::vector<CMatrix> sub_b(precoders.begin(), precoders.begin() + k);
        const std::vector<VectorAlphabet> sub_a(alphabets.begin(), alphabets.begin() + k);
        std::vector<RVector> warm_psi;
        const std::vector<RVector>* warm_ptr = nullptr;
        if (warm != nullptr && static_cast<Eigen::Index>(warm->states.size()) >= k && warm->states[k - 1]) {
            for (const auto& u : warm->states[k - 1]->users) warm_psi.push_back(u.psi);
            warm_ptr = &warm_psi;
        }
        FixedPointState st = solve_fixed_point(sub_models, sub_b, sub_a, cfg, noise, warm_ptr);
        const AsymptoticRate rate = rate_from_state(st, sub_models);
        if (delta > 0.0) out.value_bits += delta * rate.value_bits;
        out.states[k - 1] = std::move(st);
        out.rates[k - 1] = rate;
    }
    return out;
}

}  // namespace famac
