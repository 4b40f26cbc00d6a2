#pragma once

#include "famac/common.hpp"

namespace famac {

// H = U_R (G̃ ⊙ W) U_Tᴴ with W i.i.d. CN(0,1); g = g_tilde².
struct WeichselbergerModel {
    int n_r = 0;
    int n_t = 0;
    CMatrix u_t;
    CMatrix u_r;
    RMatrix g_tilde;
    RMatrix g;

    static WeichselbergerModel from_g_tilde(CMatrix u_t, CMatrix u_r, RMatrix g_tilde);
    // Throws std::invalid_argument if any invariant is violated.
    void validate() const;
};

struct ChannelRealization {
    CMatrix h;
};

struct SystemDims {
    int k_users = 0;
    int n_t = 0;
    int n_r = 0;
    double beta = 0.0;

    static SystemDims of(int k_users, int n_t, int n_r);
};

// Haar unitary: QR of a CN(0,1) matrix with the phases of diag(R) absorbed.
CMatrix random_unitary(int n, std::uint64_t seed);

ChannelRealization sample_channel(const WeichselbergerModel& model, std::uint64_t seed);

struct CorrelationMatrices {
    CMatrix r_t;
    CMatrix r_r;
};

// r_t = U_T diag(column sums of g) U_Tᴴ, r_r = U_R diag(row sums of g) U_Rᴴ.
CorrelationMatrices correlation_matrices(const WeichselbergerModel& model);

// Rank-one coupling g = a bᵀ / Σa reproducing both eigenvalue sets.
WeichselbergerModel kronecker_as_weichselberger(const RVector& r_t_eigvals, const RVector& r_r_eigvals,
                                                const CMatrix& u_t, const CMatrix& u_r);

// Scales g_tilde so that Σg = n_t·n_r.
[[nodiscard]] WeichselbergerModel normalize_coupling(const WeichselbergerModel& model);

// Per-user power P = 10^{snr/10}·n_t·n_r/Σg.
double snr_to_power(double snr_db, const WeichselbergerModel& model);

// Haar U_T, U_R and g_tilde uniform on [0,1), normalized.
WeichselbergerModel random_model(int n_r, int n_t, std::uint64_t seed);

}  // namespace famac
