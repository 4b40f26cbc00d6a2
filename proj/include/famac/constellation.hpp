#pragma once

#include "famac/common.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace famac {

enum class Modulation { PSK, QAM, PAM };

// Unit-energy, zero-mean scalar constellation.
//
// Point order: PSK by increasing phase (QPSK at 45°, 135°, 225°, 315°;
// other orders at 2πk/Q). QAM index i·L + j has real level i and imaginary
// level j, levels ascending. PAM levels ascending.
struct Constellation {
    Modulation kind = Modulation::PSK;
    int order = 0;
    std::vector<cplx> points;
};

Constellation make_constellation(Modulation kind, int order);

// Accepts bpsk, qpsk, 8psk, 16psk, 64psk, 4qam, 16qam, 64qam, 2pam, 4pam, ...
Constellation parse_modulation(std::string_view name);
std::string modulation_name(const Constellation& c);

// The n_t-fold product of a constellation, enumerated by index. Base-Q
// digits of the index select one point per antenna, most significant digit
// on antenna 1.
class VectorAlphabet {
public:
    VectorAlphabet(Constellation base, int n_t);

    const Constellation& base() const { return base_; }
    int n_t() const { return n_t_; }
    std::size_t size() const { return m_; }

    CVector symbol(std::size_t index) const;
    // All symbols as columns (n_t × m).
    CMatrix matrix() const;

private:
    Constellation base_;
    int n_t_;
    std::size_t m_;
};

CVector vector_symbol(const VectorAlphabet& alphabet, std::size_t index);

enum class AdditionMode { PerUser, Joint };

// Additions needed for one MI evaluation: per-user Σ_k Q_k^{2 n_t}, joint
// (Π_k Q_k)^{2 n_t}.
boost::multiprecision::cpp_int count_additions(AdditionMode mode, const std::vector<int>& orders, int n_t);

}  // namespace famac
