#include "famac/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace famac {

using nlohmann::json;

json to_json(const CMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const RMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

CMatrix complex_matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw std::invalid_argument("expected a nested complex matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    CMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw std::invalid_argument("ragged complex matrix");
        for (Eigen::Index k = 0; k < cols; ++k) {
            const json& e = row[static_cast<std::size_t>(k)];
            if (!e.is_array() || e.size() != 2) throw std::invalid_argument("complex entries must be [re, im]");
            m(i, k) = cplx(e[0].get<double>(), e[1].get<double>());
        }
    }
    return m;
}

RMatrix real_matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw std::invalid_argument("expected a nested real matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    RMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw std::invalid_argument("ragged real matrix");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

json models_to_json(const std::vector<WeichselbergerModel>& models) {
    json users = json::array();
    for (const auto& m : models) {
        users.push_back({{"n_r", m.n_r}, {"n_t", m.n_t}, {"u_t", to_json(m.u_t)}, {"u_r", to_json(m.u_r)},
                         {"g_tilde", to_json(m.g_tilde)}});
    }
    return {{"format", "famac-channel"}, {"version", 1}, {"users", users}};
}

std::vector<WeichselbergerModel> models_from_json(const json& j) {
    if (j.value("format", "") != "famac-channel") throw std::invalid_argument("not a famac-channel document");
    if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported channel format version");
    std::vector<WeichselbergerModel> out;
    for (const json& u : j.at("users")) {
        WeichselbergerModel m = WeichselbergerModel::from_g_tilde(complex_matrix_from_json(u.at("u_t")),
                                                                  complex_matrix_from_json(u.at("u_r")),
                                                                  real_matrix_from_json(u.at("g_tilde")));
        if (m.n_r != u.at("n_r").get<int>() || m.n_t != u.at("n_t").get<int>())
            throw std::invalid_argument("declared dimensions do not match the matrices");
        out.push_back(std::move(m));
    }
    if (out.empty()) throw std::invalid_argument("channel document has no users");
    return out;
}

json precoders_to_json(const std::vector<PrecoderFactors>& precoders) {
    json users = json::array();
    for (const auto& p : precoders) {
        json gamma = json::array();
        for (Eigen::Index i = 0; i < p.gamma_diag.size(); ++i) gamma.push_back(p.gamma_diag(i));
        users.push_back({{"u", to_json(p.u)}, {"gamma_diag", gamma}, {"v", to_json(p.v)}});
    }
    return {{"format", "famac-precoders"}, {"version", 1}, {"users", users}};
}

std::vector<PrecoderFactors> precoders_from_json(const json& j) {
    if (j.value("format", "") != "famac-precoders") throw std::invalid_argument("not a famac-precoders document");
    std::vector<PrecoderFactors> out;
    for (const json& u : j.at("users")) {
        PrecoderFactors p;
        p.u = complex_matrix_from_json(u.at("u"));
        p.v = complex_matrix_from_json(u.at("v"));
        const auto& g = u.at("gamma_diag");
        p.gamma_diag.resize(static_cast<Eigen::Index>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i) p.gamma_diag(static_cast<Eigen::Index>(i)) = g[i].get<double>();
        out.push_back(std::move(p));
    }
    return out;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("invalid JSON in '" + path + "': " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

}  // namespace famac
