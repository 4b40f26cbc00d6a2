#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

namespace famac {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kLog2e = 1.4426950408889634;

// Alphabet or quadrature grid too large for the configured cap.
class ResourceLimitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// No fixed-point start converged.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double best_residual)
        : std::runtime_error(what), best_residual_(best_residual) {}
    double best_residual() const { return best_residual_; }

private:
    double best_residual_;
};

// Cached data no longer matches the inputs it was computed from.
class InvalidStateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class NumericalRankError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sub-seed derivation: a splitmix64 chain over (seed, path...). Distinct
// paths give statistically independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// i.i.d. CN(0,1) entries (real and imaginary parts N(0, 1/2)).
CMatrix complex_gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

// Worker threads used by the kernels. 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(i) for i in [0, n). Work is split into contiguous chunks, so a
// body that writes only to slot i gives results independent of the thread
// count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace famac
