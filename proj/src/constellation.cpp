#include "famac/constellation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace famac {

namespace {

bool contains(std::initializer_list<int> set, int v) {
    return std::find(set.begin(), set.end(), v) != set.end();
}

std::string kind_name(Modulation kind) {
    switch (kind) {
        case Modulation::PSK: return "psk";
        case Modulation::QAM: return "qam";
        case Modulation::PAM: return "pam";
    }
    return "?";
}

}  // namespace

Constellation make_constellation(Modulation kind, int order) {
    Constellation c;
    c.kind = kind;
    c.order = order;
    switch (kind) {
        case Modulation::PSK: {
            if (!contains({2, 4, 8, 16, 64}, order))
                throw std::invalid_argument("unsupported PSK order " + std::to_string(order));
            const double offset = order == 4 ? std::numbers::pi / 4.0 : 0.0;
            for (int k = 0; k < order; ++k) c.points.push_back(std::polar(1.0, offset + 2.0 * std::numbers::pi * k / order));
            if (order == 2) c.points = {cplx(1.0, 0.0), cplx(-1.0, 0.0)};
            break;
        }
        case Modulation::QAM: {
            if (!contains({4, 16, 64}, order))
                throw std::invalid_argument("unsupported QAM order " + std::to_string(order));
            const int l = static_cast<int>(std::lround(std::sqrt(order)));
            const double scale = 1.0 / std::sqrt(2.0 * (order - 1) / 3.0);
            for (int i = 0; i < l; ++i) {
                for (int j = 0; j < l; ++j) {
                    c.points.emplace_back((2 * i - l + 1) * scale, (2 * j - l + 1) * scale);
                }
            }
            break;
        }
        case Modulation::PAM: {
            if (!contains({2, 4, 8, 16, 64}, order))
                throw std::invalid_argument("unsupported PAM order " + std::to_string(order));
            const double scale = 1.0 / std::sqrt((static_cast<double>(order) * order - 1.0) / 3.0);
            for (int i = 0; i < order; ++i) c.points.emplace_back((2 * i - order + 1) * scale, 0.0);
            break;
        }
    }
    return c;
}

Constellation parse_modulation(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "bpsk") return make_constellation(Modulation::PSK, 2);
    if (s == "qpsk") return make_constellation(Modulation::PSK, 4);
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits == 0 || digits == s.size()) throw std::invalid_argument("unknown modulation '" + std::string(name) + "'");
    const int order = std::stoi(s.substr(0, digits));
    const std::string family = s.substr(digits);
    if (family == "psk") return make_constellation(Modulation::PSK, order);
    if (family == "qam") return make_constellation(Modulation::QAM, order);
    if (family == "pam") return make_constellation(Modulation::PAM, order);
    throw std::invalid_argument("unknown modulation '" + std::string(name) + "'");
}

std::string modulation_name(const Constellation& c) {
    if (c.kind == Modulation::PSK && c.order == 2) return "bpsk";
    if (c.kind == Modulation::PSK && c.order == 4) return "qpsk";
    return std::to_string(c.order) + kind_name(c.kind);
}

VectorAlphabet::VectorAlphabet(Constellation base, int n_t) : base_(std::move(base)), n_t_(n_t), m_(1) {
    if (n_t < 1) throw std::invalid_argument("n_t must be positive");
    if (base_.points.empty()) throw std::invalid_argument("empty constellation");
    const auto q = static_cast<std::size_t>(base_.points.size());
    for (int i = 0; i < n_t; ++i) {
        if (m_ > (std::size_t{1} << 40) / q) throw ResourceLimitError("vector alphabet too large to index");
        m_ *= q;
    }
}

CVector VectorAlphabet::symbol(std::size_t index) const {
    if (index >= m_) throw std::invalid_argument("symbol index " + std::to_string(index) + " out of range");
    const auto q = static_cast<std::size_t>(base_.points.size());
    CVector a(n_t_);
    for (int i = n_t_ - 1; i >= 0; --i) {
        a(i) = base_.points[index % q];
        index /= q;
    }
    return a;
}

CMatrix VectorAlphabet::matrix() const {
    CMatrix a(n_t_, static_cast<Eigen::Index>(m_));
    for (std::size_t p = 0; p < m_; ++p) a.col(static_cast<Eigen::Index>(p)) = symbol(p);
    return a;
}

CVector vector_symbol(const VectorAlphabet& alphabet, std::size_t index) { return alphabet.symbol(index); }

boost::multiprecision::cpp_int count_additions(AdditionMode mode, const std::vector<int>& orders, int n_t) {
    using boost::multiprecision::cpp_int;
    if (orders.empty() || n_t < 1) throw std::invalid_argument("count_additions needs users and n_t >= 1");
    for (int q : orders) {
        if (q < 2) throw std::invalid_argument("constellation orders must be >= 2");
    }
    const auto exponent = static_cast<unsigned>(2 * n_t);
    if (mode == AdditionMode::PerUser) {
        cpp_int total = 0;
        for (int q : orders) total += boost::multiprecision::pow(cpp_int(q), exponent);
        return total;
    }
    cpp_int product = 1;
    for (int q : orders) product *= q;
    return boost::multiprecision::pow(product, exponent);
}

}  // namespace famac
