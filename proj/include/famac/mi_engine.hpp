#pragma once

#include "famac/channel.hpp"
#include "famac/constellation.hpp"

#include <vector>

namespace famac {

// Samples of v ~ CN(0, I_dim) with weights summing to one. Monte Carlo
// ensembles use equal weights; quadrature ensembles use the Gauss–Hermite
// product rule over the 2·dim real coordinates.
struct NoiseEnsemble {
    int dim = 0;
    CMatrix samples;  // dim × count
    RVector weights;  // count
    std::uint64_t seed = 0;
    std::size_t count = 0;
    bool quadrature = false;

    static NoiseEnsemble monte_carlo(int dim, std::size_t count, std::uint64_t seed);
    // Tensor Gauss–Hermite rule for CN(0, I). Nodes whose weight is below
    // prune × the largest weight are dropped. The cap applies to the full grid.
    static NoiseEnsemble gauss_hermite(int dim, int points_per_axis, std::size_t cap = 4'000'000,
                                       double prune = 0.0);
};

struct MseMatrices {
    CMatrix e;      // signal domain
    CMatrix omega;  // B E Bᴴ
};

struct MiMmse {
    double mi_bits = 0.0;      // clamped to [0, log2 M]
    double raw_mi_bits = 0.0;  // before clamping
    double std_err = 0.0;      // 0 for quadrature ensembles
    MseMatrices mse;
};

// Hermitian PSD square root. Eigenvalues below −1e-8 are rejected;
// smaller negative ones are treated as zero.
CMatrix hermitian_sqrt(const CMatrix& t);

// Per-user virtual-channel MI I(d; √T B d + v) and MMSE from one pass over
// the ensemble.
MiMmse mi_and_mmse(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet,
                   const NoiseEnsemble& noise, bool want_mmse = true);

double deterministic_mi(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet,
                        const NoiseEnsemble& noise);

MseMatrices mmse_matrices(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet,
                          const NoiseEnsemble& noise);

// ∂I/∂γ_n for T(γ) = t_base + γ_n·U_T diag(g_row) U_Tᴴ, evaluated at
// t_base: log2e·Σ_m g_row[m]·u_mᴴ Ω u_m.
double mi_gamma_partial(const CMatrix& t_base, const CMatrix& b, const VectorAlphabet& alphabet,
                        const NoiseEnsemble& noise, const RVector& g_row, const CMatrix& u_t);

struct McConfig {
    std::size_t n_channels = 200;
    std::size_t n_noise = 64;  // (d, v) draws per channel
    std::uint64_t seed = 0;
    std::size_t alphabet_cap = std::size_t{1} << 20;
    std::size_t batches = 10;
};

struct McEstimate {
    double value_bits = 0.0;
    double std_err = 0.0;
};

// I(d_A; y | d_{A^c}) averaged over channel draws, with an exact inner sum
// over the joint alphabet of the users in `subset` (0-based indices).
McEstimate exact_conditional_mi_mc(const std::vector<WeichselbergerModel>& models,
                                   const std::vector<CMatrix>& precoders, const std::vector<int>& subset,
                                   const std::vector<VectorAlphabet>& alphabets, const McConfig& cfg);

}  // namespace famac
