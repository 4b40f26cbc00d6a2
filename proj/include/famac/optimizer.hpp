#pragma once

#include "famac/replica.hpp"

#include <vector>

namespace famac {

// B = U·diag(gamma_diag)·V.
struct PrecoderFactors {
    CMatrix u;
    RVector gamma_diag;
    CMatrix v;

    CMatrix matrix() const;
};

std::vector<CMatrix> precoder_matrices(const std::vector<PrecoderFactors>& factors);

struct WsrProblem {
    std::vector<WeichselbergerModel> models;
    RVector weights_mu;  // nonincreasing
    RVector powers;
    std::vector<VectorAlphabet> alphabets;
    NoiseEnsemble noise;
    FixedPointConfig fixed_point;

    int users() const { return static_cast<int>(models.size()); }
    // Δ_k = μ_k − μ_{k+1}, μ_{K+1} = 0.
    RVector deltas() const;
    void validate() const;
};

struct OptimizerConfig {
    double theta = 0.1;
    double omega = 0.5;
    double wsr_tol = 1e-3;
    int max_iters = 100;
    int restarts = 4;
    std::uint64_t seed = 0;
    double min_step = 1e-12;

    void validate() const;
};

struct OptimizerTrace {
    std::vector<double> wsr;  // wsr[0] is the initialization
    std::vector<double> gamma_steps;  // accepted steps, one entry per (iteration, user)
    std::vector<double> v_steps;
    int restart = 0;
    bool converged = false;
    std::vector<std::vector<double>> restart_wsr;  // traces of every restart
};

struct OptimizeResult {
    std::vector<PrecoderFactors> precoders;
    OptimizerTrace trace;
    WsrEvaluation evaluation;
};

// Equal power with u = U_T. Restart 0 uses v = U_Tᴴ (B = √(P/n_t)·I),
// restart 1 uses v = I, later restarts a seeded Haar v.
std::vector<PrecoderFactors> init_precoders(const WsrProblem& problem, int restart, std::uint64_t seed);

// Gradients of the WSR in bits. `evaluation` must come from asymptotic_wsr at
// exactly these precoders.
RVector grad_gamma_sq(const WsrProblem& problem, const std::vector<PrecoderFactors>& precoders,
                      const WsrEvaluation& evaluation, int user);
CMatrix grad_v(const WsrProblem& problem, const std::vector<PrecoderFactors>& precoders,
               const WsrEvaluation& evaluation, int user);

// Euclidean projection onto {x ≥ 0, Σx = P}.
RVector project_power(const RVector& gamma_sq, double power);

// Unitary polar factor.
CMatrix project_stiefel(const CMatrix& v_tilde);

OptimizeResult optimize(const WsrProblem& problem, const OptimizerConfig& cfg);

// B = √(P/n_t)·I.
std::vector<PrecoderFactors> no_precoding_baseline(const WsrProblem& problem);

// Eigenbeamforming along U_T with water-filling over the transmit
// correlation eigenvalues. Approximates a Gaussian-input design.
std::vector<PrecoderFactors> gaussian_waterfilling_baseline(const WsrProblem& problem);

// Minimum-power B with Bᴴ T B = Q: U_T D^{-1/2} Π Γ_q^{1/2} U_qᴴ, pairing
// the largest eigenvalues of T and Q. T must be positive definite.
CMatrix eigen_aligned_precoder(const CMatrix& t_matrix, const CMatrix& q);

// Another B with Bᴴ T B = Q: T^{-1/2} W Γ_q^{1/2} U_qᴴ for unitary W.
CMatrix same_gram_precoder(const CMatrix& t_matrix, const CMatrix& q, const CMatrix& w);

}  // namespace famac
