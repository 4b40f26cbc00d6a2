#include "famac/mi_engine.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace famac {

namespace {

constexpr std::size_t kNoiseBlock = 64;
constexpr Eigen::Index kDenseDistanceLimit = 2048;

struct BlockSums {
    double mi_sum = 0.0;  // Σ_v w_v s_v, nats
    double mi_sq = 0.0;   // Σ_v w_v s_v²
    RVector post_mass;    // Σ_{v,m} w_v w_p(m, v)
    CMatrix dd;           // Σ_{v,m} w_v d̂ d̂ᴴ
};

// Sample MI and conditional-covariance MMSE of z = x_m + noise over the
// points x (dim × M) carrying the symbols a (n_t × M).
MiMmse virtual_channel(const CMatrix& x, const CMatrix& a, const NoiseEnsemble& noise, bool want_mmse) {
    const Eigen::Index m_count = x.cols();
    const Eigen::Index n_t = a.rows();
    const double log_m = std::log(static_cast<double>(m_count));

    RMatrix dist;
    const bool dense = m_count <= kDenseDistanceLimit;
    if (dense) {
        dist.resize(m_count, m_count);
        for (Eigen::Index m = 0; m < m_count; ++m) {
            dist.col(m) = (x.colwise() - x.col(m)).colwise().squaredNorm().transpose();
        }
    }

    const std::size_t n_blocks = (noise.count + kNoiseBlock - 1) / kNoiseBlock;
    std::vector<BlockSums> blocks(n_blocks);
    parallel_for(n_blocks, [&](std::size_t b) {
        BlockSums& out = blocks[b];
        if (want_mmse) {
            out.post_mass = RVector::Zero(m_count);
            out.dd = CMatrix::Zero(n_t, n_t);
        }
        RVector column(m_count);
        Eigen::ArrayXd expo(m_count);
        Eigen::ArrayXd post(m_count);
        const std::size_t lo = b * kNoiseBlock;
        const std::size_t hi = std::min(noise.count, lo + kNoiseBlock);
        for (std::size_t s = lo; s < hi; ++s) {
            const auto si = static_cast<Eigen::Index>(s);
            const double wv = noise.weights(si);
            const RVector r = (x.adjoint() * noise.samples.col(si)).real();
            double lse_sum = 0.0;
            for (Eigen::Index m = 0; m < m_count; ++m) {
                if (dense) {
                    column = dist.col(m);
                } else {
                    column = (x.colwise() - x.col(m)).colwise().squaredNorm().transpose();
                }
                // −(‖x_p − x_m + v‖² − ‖v‖²) = −D_mp − 2r_p + 2r_m
                expo = -column.array() - 2.0 * r.array();
                const double mx = expo.maxCoeff();
                // Floor keeps tiny posteriors out of the denormal range.
                post = (expo - mx).max(-700.0).exp();
                const double total = post.sum();
                lse_sum += mx + std::log(total) + 2.0 * r(m);
                if (want_mmse) {
                    post /= total;
                    out.post_mass.array() += wv * post;
                    const CVector dhat = a * post.matrix().cast<cplx>();
                    out.dd.noalias() += wv * (dhat * dhat.adjoint());
                }
            }
            const double sample = log_m - lse_sum / static_cast<double>(m_count);
            out.mi_sum += wv * sample;
            out.mi_sq += wv * sample * sample;
        }
    });

    double mi = 0.0;
    double sq = 0.0;
    RVector post_mass = RVector::Zero(m_count);
    CMatrix dd = CMatrix::Zero(n_t, n_t);
    for (const BlockSums& blk : blocks) {
        mi += blk.mi_sum;
        sq += blk.mi_sq;
        if (want_mmse) {
            post_mass += blk.post_mass;
            dd += blk.dd;
        }
    }

    MiMmse res;
    res.raw_mi_bits = mi * kLog2e;
    res.mi_bits = std::clamp(res.raw_mi_bits, 0.0, log_m * kLog2e);
    if (!noise.quadrature && noise.count > 1) {
        const double n = static_cast<double>(noise.count);
        const double var = std::max(0.0, sq - mi * mi) * n / (n - 1.0);
        res.std_err = std::sqrt(var / n) * kLog2e;
    }
    if (want_mmse) {
        CMatrix e = (a * post_mass.cast<cplx>().asDiagonal() * a.adjoint() - dd) / static_cast<double>(m_count);
        res.mse.e = (e + e.adjoint()) / 2.0;
    }
    return res;
}

void check_dims(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet, const NoiseEnsemble& noise) {
    const Eigen::Index n = alphabet.n_t();
    if (b.cols() != n) throw std::invalid_argument("precoder columns must equal the alphabet dimension");
    if (t_matrix.rows() != b.rows() || t_matrix.cols() != b.rows())
        throw std::invalid_argument("t_matrix must be square and match the precoder rows");
    if (noise.dim != t_matrix.rows()) throw std::invalid_argument("noise dimension must equal the virtual channel dimension");
}

std::vector<double> hermite_nodes(int n, std::vector<double>& weights) {
    RMatrix jacobi = RMatrix::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
    }
    Eigen::SelfAdjointEigenSolver<RMatrix> es(jacobi);
    std::vector<double> nodes(n);
    weights.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        nodes[i] = es.eigenvalues()(i);
        weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
    return nodes;
}

}  // namespace

NoiseEnsemble NoiseEnsemble::monte_carlo(int dim, std::size_t count, std::uint64_t seed) {
    if (dim < 1 || count < 1) throw std::invalid_argument("noise ensemble needs dim >= 1 and count >= 1");
    NoiseEnsemble ens;
    ens.dim = dim;
    ens.count = count;
    ens.seed = seed;
    std::mt19937_64 rng(seed);
    ens.samples = complex_gaussian(dim, static_cast<Eigen::Index>(count), rng);
    ens.weights = RVector::Constant(static_cast<Eigen::Index>(count), 1.0 / static_cast<double>(count));
    return ens;
}

NoiseEnsemble NoiseEnsemble::gauss_hermite(int dim, int points_per_axis, std::size_t cap, double prune) {
    if (dim < 1 || points_per_axis < 1) throw std::invalid_argument("quadrature needs dim >= 1 and points >= 1");
    if (!(prune >= 0.0 && prune < 1.0)) throw std::invalid_argument("prune must lie in [0, 1)");
    const int axes = 2 * dim;
    std::size_t count = 1;
    for (int i = 0; i < axes; ++i) {
        if (count > cap / static_cast<std::size_t>(points_per_axis))
            throw ResourceLimitError("Gauss-Hermite grid exceeds the cap of " + std::to_string(cap) + " nodes");
        count *= static_cast<std::size_t>(points_per_axis);
    }
    std::vector<double> w1;
    const std::vector<double> x1 = hermite_nodes(points_per_axis, w1);
    NoiseEnsemble ens;
    ens.dim = dim;
    ens.count = count;
    ens.quadrature = true;
    ens.samples.resize(dim, static_cast<Eigen::Index>(count));
    ens.weights.resize(static_cast<Eigen::Index>(count));
    for (std::size_t idx = 0; idx < count; ++idx) {
        std::size_t rest = idx;
        double w = 1.0;
        std::vector<double> coord(axes);
        for (int ax = axes - 1; ax >= 0; --ax) {
            const std::size_t d = rest % static_cast<std::size_t>(points_per_axis);
            rest /= static_cast<std::size_t>(points_per_axis);
            coord[ax] = x1[d];
            w *= w1[d];
        }
        const auto col = static_cast<Eigen::Index>(idx);
        for (int i = 0; i < dim; ++i) ens.samples(i, col) = cplx(coord[2 * i], coord[2 * i + 1]);
        ens.weights(col) = w;
    }
    if (prune > 0.0) {
        const double floor = prune * ens.weights.maxCoeff();
        Eigen::Index kept = 0;
        for (Eigen::Index i = 0; i < ens.weights.size(); ++i) {
            if (ens.weights(i) < floor) continue;
            ens.samples.col(kept) = ens.samples.col(i);
            ens.weights(kept) = ens.weights(i);
            ++kept;
        }
        ens.samples.conservativeResize(Eigen::NoChange, kept);
        ens.weights.conservativeResize(kept);
        ens.count = static_cast<std::size_t>(kept);
    }
    ens.weights /= ens.weights.sum();
    return ens;
}

CMatrix hermitian_sqrt(const CMatrix& t) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es((t + t.adjoint()) / 2.0);
    const RVector ev = es.eigenvalues();
    if (ev.size() > 0 && ev.minCoeff() < -1e-8)
        throw std::invalid_argument("matrix is not positive semidefinite (eigenvalue " + std::to_string(ev.minCoeff()) + ")");
    const RVector root = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

MiMmse mi_and_mmse(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet,
                   const NoiseEnsemble& noise, bool want_mmse) {
    check_dims(t_matrix, b, alphabet, noise);
    const CMatrix a = alphabet.matrix();
    const CMatrix x = hermitian_sqrt(t_matrix) * b * a;
    MiMmse res = virtual_channel(x, a, noise, want_mmse);
    if (want_mmse) res.mse.omega = b * res.mse.e * b.adjoint();
    return res;
}

double deterministic_mi(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet,
                        const NoiseEnsemble& noise) {
    return mi_and_mmse(t_matrix, b, alphabet, noise, false).mi_bits;
}

MseMatrices mmse_matrices(const CMatrix& t_matrix, const CMatrix& b, const VectorAlphabet& alphabet,
                          const NoiseEnsemble& noise) {
    return mi_and_mmse(t_matrix, b, alphabet, noise, true).mse;
}

double mi_gamma_partial(const CMatrix& t_base, const CMatrix& b, const VectorAlphabet& alphabet,
                        const NoiseEnsemble& noise, const RVector& g_row, const CMatrix& u_t) {
    if (g_row.size() != u_t.cols()) throw std::invalid_argument("g_row length must equal the number of eigendirections");
    const MseMatrices mse = mmse_matrices(t_base, b, alphabet, noise);
    const RVector quad = (u_t.adjoint() * mse.omega * u_t).diagonal().real();
    return kLog2e * g_row.dot(quad);
}

McEstimate exact_conditional_mi_mc(const std::vector<WeichselbergerModel>& models,
                                   const std::vector<CMatrix>& precoders, const std::vector<int>& subset,
                                   const std::vector<VectorAlphabet>& alphabets, const McConfig& cfg) {
    if (subset.empty()) throw std::invalid_argument("subset must be nonempty");
    if (models.size() != precoders.size() || models.size() != alphabets.size())
        throw std::invalid_argument("models, precoders and alphabets must have one entry per user");
    if (std::set<int>(subset.begin(), subset.end()).size() != subset.size())
        throw std::invalid_argument("subset has repeated users");
    if (cfg.n_channels < 1 || cfg.n_noise < 1) throw std::invalid_argument("MC config needs channels and noise draws");
    std::size_t joint = 1;
    for (int k : subset) {
        if (k < 0 || k >= static_cast<int>(models.size())) throw std::invalid_argument("subset index out of range");
        const std::size_t mk = alphabets[k].size();
        if (joint > cfg.alphabet_cap / mk) {
            throw ResourceLimitError("joint alphabet size exceeds the cap of " + std::to_string(cfg.alphabet_cap) +
                                     " (users in subset: " + std::to_string(subset.size()) + ")");
        }
        joint *= mk;
    }
    const int n_r = models[subset.front()].n_r;
    for (int k : subset) {
        if (models[k].n_r != n_r) throw std::invalid_argument("all users must share n_r");
        if (precoders[k].rows() != models[k].n_t || precoders[k].cols() != alphabets[k].n_t())
            throw std::invalid_argument("precoder dimensions do not match the model");
    }
    std::vector<CMatrix> symbols;
    for (int k : subset) symbols.push_back(alphabets[k].matrix());

    const double log2_joint = std::log2(static_cast<double>(joint));
    std::vector<double> per_channel(cfg.n_channels, 0.0);
    parallel_for(cfg.n_channels, [&](std::size_t c) {
        CMatrix x = CMatrix::Zero(n_r, 1);
        for (std::size_t i = 0; i < subset.size(); ++i) {
            const int k = subset[i];
            const CMatrix h = sample_channel(models[k], derive_seed(cfg.seed, {c, static_cast<std::uint64_t>(k)})).h;
            const CMatrix y = h * precoders[k] * symbols[i];
            CMatrix next(n_r, x.cols() * y.cols());
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                for (Eigen::Index p = 0; p < y.cols(); ++p) next.col(j * y.cols() + p) = x.col(j) + y.col(p);
            }
            x = std::move(next);
        }
        std::mt19937_64 rng(derive_seed(cfg.seed, {c, 0x9E3779B9ULL}));
        std::uniform_int_distribution<std::size_t> pick(0, joint - 1);
        double acc = 0.0;
        Eigen::ArrayXd expo(static_cast<Eigen::Index>(joint));
        for (std::size_t s = 0; s < cfg.n_noise; ++s) {
            const auto m = static_cast<Eigen::Index>(pick(rng));
            const CVector v = complex_gaussian(n_r, 1, rng);
            const CVector centre = x.col(m) - v;
            expo = -(x.colwise() - centre).colwise().squaredNorm().transpose().array();
            const double mx = expo.maxCoeff();
            const double lse = mx + std::log((expo - mx).exp().sum()) + v.squaredNorm();
            acc += log2_joint - lse * kLog2e;
        }
        per_channel[c] = acc / static_cast<double>(cfg.n_noise);
    });

    const std::size_t batches = std::max<std::size_t>(1, std::min(cfg.batches, cfg.n_channels));
    std::vector<double> means(batches, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = cfg.n_channels * b / batches;
        const std::size_t hi = cfg.n_channels * (b + 1) / batches;
        double s = 0.0;
        for (std::size_t c = lo; c < hi; ++c) s += per_channel[c];
        means[b] = s / static_cast<double>(hi - lo);
        total += s;
    }
    McEstimate est;
    est.value_bits = total / static_cast<double>(cfg.n_channels);
    if (batches > 1) {
        double mean_b = 0.0;
        for (double m : means) mean_b += m;
        mean_b /= static_cast<double>(batches);
        double var = 0.0;
        for (double m : means) var += (m - mean_b) * (m - mean_b);
        var /= static_cast<double>(batches - 1);
        est.std_err = std::sqrt(var / static_cast<double>(batches));
    }
    return est;
}

}  // namespace famac
