#pragma once

#include "famac/mi_engine.hpp"

#include <optional>
#include <vector>

namespace famac {

struct FixedPointConfig {
    double tol = 1e-6;
    int max_iter = 500;
    double damping = 0.5;  // weight kept on the previous iterate
    int n_starts = 4;
    std::uint64_t seed = 0;
};

struct UserReplica {
    RVector gamma;     // n_r
    RVector psi;       // n_t
    CMatrix t_matrix;  // U_T diag(Gᵀγ) U_Tᴴ
    CMatrix r_matrix;  // U_R diag(Gψ) U_Rᴴ
    MseMatrices mse;   // at t_matrix
    double mi_bits = 0.0;
};

// Replica parameters for the user set A_k = {1..k}.
struct FixedPointState {
    int subset_k = 0;
    std::vector<UserReplica> users;
    CMatrix r_sum;  // R_A
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    int start_index = 0;  // -1 for the warm start
    std::vector<double> start_values;  // asymptotic MI of every converged start
    std::uint64_t precoder_hash = 0;
};

struct AsymptoticRate {
    double value_bits = 0.0;
    std::vector<double> per_user_mi;
    double logdet_term = 0.0;
    double correction_term = 0.0;
};

std::uint64_t precoder_hash(const std::vector<CMatrix>& precoders, int k);

// Solves the coupled (γ, ψ) equations for users 0..k-1 of the given lists
// (k = models.size()) by damped Picard iteration from several starts and
// keeps the converged solution of least asymptotic MI.
FixedPointState solve_fixed_point(const std::vector<WeichselbergerModel>& models,
                                  const std::vector<CMatrix>& precoders,
                                  const std::vector<VectorAlphabet>& alphabets, const FixedPointConfig& cfg,
                                  const NoiseEnsemble& noise, const std::vector<RVector>* warm_psi = nullptr);

// Σ_t I_t(T_t) + log2det(I + R_A) − log2e Σ_t γ_tᵀ G_t ψ_t, with the MI
// terms recomputed from the state's T_t.
AsymptoticRate asymptotic_conditional_mi(const FixedPointState& state,
                                         const std::vector<WeichselbergerModel>& models,
                                         const std::vector<CMatrix>& precoders,
                                         const std::vector<VectorAlphabet>& alphabets, const NoiseEnsemble& noise);

// Same expression using the MI values cached in the state.
AsymptoticRate rate_from_state(const FixedPointState& state, const std::vector<WeichselbergerModel>& models);

struct WsrEvaluation {
    double value_bits = 0.0;
    std::vector<std::optional<FixedPointState>> states;  // index k-1
    std::vector<std::optional<AsymptoticRate>> rates;
};

// Σ_k Δ_k I(A_k) with Δ_k = μ_k − μ_{k+1}. Weights must be nonincreasing.
// With all_k set, every nested set is solved, including those with Δ_k = 0.
// warm, if given, supplies previous states whose ψ seeds an extra start.
WsrEvaluation asymptotic_wsr(const std::vector<WeichselbergerModel>& models,
                             const std::vector<CMatrix>& precoders, const RVector& weights_mu,
                             const std::vector<VectorAlphabet>& alphabets, const FixedPointConfig& cfg,
                             const NoiseEnsemble& noise, bool all_k = false, const WsrEvaluation* warm = nullptr);

}  // namespace famac
