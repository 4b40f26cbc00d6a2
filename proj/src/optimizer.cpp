#include "famac/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace famac {

namespace {

// Frozen-T terms of one user's objective Σ_k Δ_k I(T_l^{(k)}, B_l).
struct UserTerms {
    std::vector<double> delta;
    std::vector<RVector> d;  // G_lᵀ γ_l^{(k)}
    std::vector<CMatrix> t;
    std::vector<CMatrix> e;  // E_l^{(k)} at the current B_l
};

UserTerms user_terms(const WsrProblem& problem, const WsrEvaluation& evaluation, int user,
                     const std::vector<CMatrix>* check_b) {
    const RVector deltas = problem.deltas();
    UserTerms terms;
    for (int k = user + 1; k <= problem.users(); ++k) {
        if (!(deltas(k - 1) > 0.0)) continue;
        if (static_cast<int>(evaluation.states.size()) < k || !evaluation.states[k - 1])
            throw InvalidStateError("missing fixed-point state for the set of the first " + std::to_string(k) + " users");
        const FixedPointState& st = *evaluation.states[k - 1];
        if (check_b != nullptr && st.precoder_hash != precoder_hash(*check_b, k))
            throw InvalidStateError("fixed-point state was computed for different precoders");
        const UserReplica& u = st.users[static_cast<std::size_t>(user)];
        terms.delta.push_back(deltas(k - 1));
        terms.d.push_back(problem.models[user].g.transpose() * u.gamma);
        terms.t.push_back(u.t_matrix);
        terms.e.push_back(u.mse.e);
    }
    return terms;
}

RVector gamma_gradient(const UserTerms& terms, const PrecoderFactors& f) {
    RVector g = RVector::Zero(f.gamma_diag.size());
    for (std::size_t i = 0; i < terms.delta.size(); ++i) {
        const RVector q = (f.v * terms.e[i] * f.v.adjoint()).diagonal().real();
        g += terms.delta[i] * kLog2e * terms.d[i].cwiseProduct(q);
    }
    return g;
}

CMatrix v_gradient(const UserTerms& terms, const PrecoderFactors& f) {
    CMatrix g = CMatrix::Zero(f.v.rows(), f.v.cols());
    const RVector gsq = f.gamma_diag.cwiseAbs2();
    for (std::size_t i = 0; i < terms.delta.size(); ++i) {
        const RVector lam = terms.d[i].cwiseProduct(gsq);
        g += terms.delta[i] * 2.0 * kLog2e * (lam.cast<cplx>().asDiagonal() * f.v * terms.e[i]);
    }
    return g;
}

double frozen_objective(const UserTerms& terms, const CMatrix& b, const VectorAlphabet& alphabet,
                        const NoiseEnsemble& noise) {
    double f = 0.0;
    for (std::size_t i = 0; i < terms.delta.size(); ++i) f += terms.delta[i] * deterministic_mi(terms.t[i], b, alphabet, noise);
    return f;
}

WsrEvaluation evaluate(const WsrProblem& problem, const std::vector<PrecoderFactors>& f, const WsrEvaluation* warm) {
    return asymptotic_wsr(problem.models, precoder_matrices(f), problem.weights_mu, problem.alphabets,
                          problem.fixed_point, problem.noise, false, warm);
}

}  // namespace

CMatrix PrecoderFactors::matrix() const { return u * gamma_diag.cast<cplx>().asDiagonal() * v; }

std::vector<CMatrix> precoder_matrices(const std::vector<PrecoderFactors>& factors) {
    std::vector<CMatrix> out;
    out.reserve(factors.size());
    for (const auto& f : factors) out.push_back(f.matrix());
    return out;
}

RVector WsrProblem::deltas() const {
    RVector d(weights_mu.size());
    for (Eigen::Index k = 0; k < weights_mu.size(); ++k) {
        d(k) = weights_mu(k) - (k + 1 < weights_mu.size() ? weights_mu(k + 1) : 0.0);
    }
    return d;
}

void WsrProblem::validate() const {
    const auto k = static_cast<Eigen::Index>(models.size());
    if (k < 1) throw std::invalid_argument("problem has no users");
    if (weights_mu.size() != k || powers.size() != k || static_cast<Eigen::Index>(alphabets.size()) != k)
        throw std::invalid_argument("weights, powers and alphabets need one entry per user");
    for (Eigen::Index i = 0; i < k; ++i) {
        models[i].validate();
        if (!(weights_mu(i) >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
        if (i > 0 && weights_mu(i) > weights_mu(i - 1)) throw std::invalid_argument("weights must be nonincreasing");
        if (!(powers(i) > 0.0)) throw std::invalid_argument("powers must be positive");
        if (alphabets[i].n_t() != models[i].n_t) throw std::invalid_argument("alphabet dimension must equal n_t");
        if (noise.dim != models[i].n_t) throw std::invalid_argument("noise dimension must equal n_t");
    }
}

void OptimizerConfig::validate() const {
    if (!(theta > 0.0 && theta < 0.5)) throw std::invalid_argument("theta must lie in (0, 0.5)");
    if (!(omega > 0.0 && omega < 1.0)) throw std::invalid_argument("omega must lie in (0, 1)");
    if (!(wsr_tol >= 0.0)) throw std::invalid_argument("wsr_tol must be nonnegative");
    if (max_iters < 1 || restarts < 1) throw std::invalid_argument("max_iters and restarts must be positive");
}

std::vector<PrecoderFactors> init_precoders(const WsrProblem& problem, int restart, std::uint64_t seed) {
    std::vector<PrecoderFactors> out;
    for (int l = 0; l < problem.users(); ++l) {
        const WeichselbergerModel& m = problem.models[l];
        PrecoderFactors f;
        f.u = m.u_t;
        f.gamma_diag = RVector::Constant(m.n_t, std::sqrt(problem.powers(l) / m.n_t));
        if (restart == 0) {
            f.v = m.u_t.adjoint();
        } else if (restart == 1) {
            f.v = CMatrix::Identity(m.n_t, m.n_t);
        } else {
            f.v = random_unitary(m.n_t, derive_seed(seed, {static_cast<std::uint64_t>(restart), static_cast<std::uint64_t>(l)}));
        }
        out.push_back(std::move(f));
    }
    return out;
}

RVector grad_gamma_sq(const WsrProblem& problem, const std::vector<PrecoderFactors>& precoders,
                      const WsrEvaluation& evaluation, int user) {
    if (user < 0 || user >= problem.users()) throw std::invalid_argument("user index out of range");
    const std::vector<CMatrix> b = precoder_matrices(precoders);
    return gamma_gradient(user_terms(problem, evaluation, user, &b), precoders[user]);
}

CMatrix grad_v(const WsrProblem& problem, const std::vector<PrecoderFactors>& precoders,
               const WsrEvaluation& evaluation, int user) {
    if (user < 0 || user >= problem.users()) throw std::invalid_argument("user index out of range");
    const std::vector<CMatrix> b = precoder_matrices(precoders);
    return v_gradient(user_terms(problem, evaluation, user, &b), precoders[user]);
}

RVector project_power(const RVector& gamma_sq, double power) {
    if (!(power > 0.0)) throw std::invalid_argument("power must be positive");
    const Eigen::Index n = gamma_sq.size();
    if (n == 0) throw std::invalid_argument("empty power vector");
    std::vector<double> s(gamma_sq.data(), gamma_sq.data() + n);
    std::sort(s.begin(), s.end(), std::greater<>());
    double cum = 0.0;
    double tau = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cum += s[static_cast<std::size_t>(k)];
        const double t = (cum - power) / static_cast<double>(k + 1);
        if (s[static_cast<std::size_t>(k)] - t > 0.0) tau = t;
    }
    RVector out = (gamma_sq.array() - tau).cwiseMax(0.0).matrix();
    // Remove rounding drift so the constraint holds with equality.
    const double sum = out.sum();
    if (sum > 0.0) out *= power / sum;
    return out;
}

CMatrix project_stiefel(const CMatrix& v_tilde) {
    if (v_tilde.rows() != v_tilde.cols() || v_tilde.rows() == 0) throw std::invalid_argument("expected a square matrix");
    Eigen::JacobiSVD<CMatrix> svd(v_tilde, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues().minCoeff() <= 1e-12) throw NumericalRankError("matrix is rank deficient; polar factor undefined");
    return svd.matrixU() * svd.matrixV().adjoint();
}

OptimizeResult optimize(const WsrProblem& problem, const OptimizerConfig& cfg) {
    problem.validate();
    cfg.validate();
    std::optional<OptimizeResult> best;
    std::vector<std::vector<double>> all_traces;
    for (int r = 0; r < cfg.restarts; ++r) {
        std::vector<PrecoderFactors> f = init_precoders(problem, r, cfg.seed);
        WsrEvaluation eval = evaluate(problem, f, nullptr);
        OptimizerTrace trace;
        trace.restart = r;
        trace.wsr.push_back(eval.value_bits);
        double scale = 1.0;
        int spent = 1;
        while (spent < cfg.max_iters) {
            ++spent;
            std::vector<PrecoderFactors> trial = f;
            const int k_users = problem.users();
            // Step 2: power allocation.
            for (int l = 0; l < k_users; ++l) {
                const UserTerms terms = user_terms(problem, eval, l, nullptr);
                if (terms.delta.empty()) continue;
                PrecoderFactors& pf = trial[static_cast<std::size_t>(l)];
                const RVector g = gamma_gradient(terms, pf);
                const RVector x = pf.gamma_diag.cwiseAbs2();
                const double f0 = frozen_objective(terms, pf.matrix(), problem.alphabets[l], problem.noise);
                double accepted = 0.0;
                for (double u = scale; u >= cfg.min_step; u *= cfg.omega) {
                    const RVector xu = project_power(x + u * g, problem.powers(l));
                    const double ascent = g.dot(xu - x);
                    if (!(ascent > 0.0)) continue;
                    PrecoderFactors cand = pf;
                    cand.gamma_diag = xu.cwiseSqrt();
                    const double fu = frozen_objective(terms, cand.matrix(), problem.alphabets[l], problem.noise);
                    if (fu >= f0 + cfg.theta * ascent) {
                        pf = std::move(cand);
                        accepted = u;
                        break;
                    }
                }
                trace.gamma_steps.push_back(accepted);
            }
            // Step 3: right singular vectors, with E refreshed at the new powers.
            for (int l = 0; l < k_users; ++l) {
                UserTerms terms = user_terms(problem, eval, l, nullptr);
                if (terms.delta.empty()) continue;
                PrecoderFactors& pf = trial[static_cast<std::size_t>(l)];
                const CMatrix b0 = pf.matrix();
                for (std::size_t i = 0; i < terms.t.size(); ++i) {
                    terms.e[i] = mmse_matrices(terms.t[i], b0, problem.alphabets[l], problem.noise).e;
                }
                const CMatrix g = v_gradient(terms, pf);
                const double f0 = frozen_objective(terms, b0, problem.alphabets[l], problem.noise);
                double accepted = 0.0;
                for (double u = scale; u >= cfg.min_step; u *= cfg.omega) {
                    CMatrix vu;
                    try {
                        vu = project_stiefel(pf.v + u * g);
                    } catch (const NumericalRankError&) {
                        continue;
                    }
                    const double ascent = (g.adjoint() * (vu - pf.v)).trace().real();
                    if (!(ascent > 0.0)) continue;
                    PrecoderFactors cand = pf;
                    cand.v = vu;
                    const double fu = frozen_objective(terms, cand.matrix(), problem.alphabets[l], problem.noise);
                    if (fu >= f0 + cfg.theta * ascent) {
                        pf = std::move(cand);
                        accepted = u;
                        break;
                    }
                }
                trace.v_steps.push_back(accepted);
            }
            // Step 4: re-solve the fixed points at the updated precoders.
            WsrEvaluation next = evaluate(problem, trial, &eval);
            const double prev = trace.wsr.back();
            if (next.value_bits >= prev) {
                f = std::move(trial);
                eval = std::move(next);
                trace.wsr.push_back(eval.value_bits);
                scale = 1.0;
                // Step 5.
                if (eval.value_bits - prev < cfg.wsr_tol) {
                    trace.converged = true;
                    break;
                }
            } else {
                scale *= 0.5;
                if (scale < cfg.min_step) {
                    trace.converged = true;
                    break;
                }
            }
        }
        all_traces.push_back(trace.wsr);
        if (!best || eval.value_bits > best->evaluation.value_bits) {
            best = OptimizeResult{std::move(f), std::move(trace), std::move(eval)};
        }
    }
    best->trace.restart_wsr = std::move(all_traces);
    return std::move(*best);
}

std::vector<PrecoderFactors> no_precoding_baseline(const WsrProblem& problem) {
    std::vector<PrecoderFactors> out;
    for (int l = 0; l < problem.users(); ++l) {
        const int n = problem.models[l].n_t;
        out.push_back({CMatrix::Identity(n, n), RVector::Constant(n, std::sqrt(problem.powers(l) / n)),
                       CMatrix::Identity(n, n)});
    }
    return out;
}

std::vector<PrecoderFactors> gaussian_waterfilling_baseline(const WsrProblem& problem) {
    std::vector<PrecoderFactors> out;
    for (int l = 0; l < problem.users(); ++l) {
        const WeichselbergerModel& m = problem.models[l];
        const double power = problem.powers(l);
        const RVector lam = m.g.colwise().sum().transpose();
        std::vector<int> order(static_cast<std::size_t>(m.n_t));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return lam(a) > lam(b); });
        RVector p = RVector::Zero(m.n_t);
        if (lam(order.front()) <= 0.0) {
            p.setConstant(power / m.n_t);
        } else {
            // Largest active set whose water level stays above every 1/λ in it.
            double inv_sum = 0.0;
            double level = 0.0;
            for (int k = 0; k < m.n_t; ++k) {
                const double lk = lam(order[static_cast<std::size_t>(k)]);
                if (lk <= 0.0) break;
                const double candidate = (power + inv_sum + 1.0 / lk) / (k + 1);
                if (candidate <= 1.0 / lk) break;
                inv_sum += 1.0 / lk;
                level = candidate;
            }
            for (int i = 0; i < m.n_t; ++i) {
                if (lam(i) > 0.0) p(i) = std::max(0.0, level - 1.0 / lam(i));
            }
        }
        out.push_back({m.u_t, p.cwiseSqrt(), CMatrix::Identity(m.n_t, m.n_t)});
    }
    return out;
}

CMatrix eigen_aligned_precoder(const CMatrix& t_matrix, const CMatrix& q) {
    Eigen::SelfAdjointEigenSolver<CMatrix> et((t_matrix + t_matrix.adjoint()) / 2.0);
    Eigen::SelfAdjointEigenSolver<CMatrix> eq((q + q.adjoint()) / 2.0);
    if (et.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("t_matrix must be positive definite");
    // Both spectra ascending: largest eigenvalue of T carries the largest of Q.
    const RVector scale = (eq.eigenvalues().cwiseMax(0.0).array() / et.eigenvalues().array()).sqrt().matrix();
    return et.eigenvectors() * scale.cast<cplx>().asDiagonal() * eq.eigenvectors().adjoint();
}

CMatrix same_gram_precoder(const CMatrix& t_matrix, const CMatrix& q, const CMatrix& w) {
    Eigen::SelfAdjointEigenSolver<CMatrix> et((t_matrix + t_matrix.adjoint()) / 2.0);
    Eigen::SelfAdjointEigenSolver<CMatrix> eq((q + q.adjoint()) / 2.0);
    if (et.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("t_matrix must be positive definite");
    const RVector inv_root = et.eigenvalues().cwiseSqrt().cwiseInverse();
    const CMatrix t_inv_sqrt = et.eigenvectors() * inv_root.cast<cplx>().asDiagonal() * et.eigenvectors().adjoint();
    const RVector q_root = eq.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return t_inv_sqrt * w * q_root.cast<cplx>().asDiagonal() * eq.eigenvectors().adjoint();
}

}  // namespace famac
