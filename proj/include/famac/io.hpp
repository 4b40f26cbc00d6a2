#pragma once

#include "famac/optimizer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace famac {

// Complex matrices are stored row-major as nested arrays of [re, im] pairs;
// real matrices as nested arrays of numbers.
nlohmann::json to_json(const CMatrix& m);
nlohmann::json to_json(const RMatrix& m);
CMatrix complex_matrix_from_json(const nlohmann::json& j);
RMatrix real_matrix_from_json(const nlohmann::json& j);

// {"format": "famac-channel", "version": 1, "users": [{n_r, n_t, u_t, u_r, g_tilde}, ...]}
nlohmann::json models_to_json(const std::vector<WeichselbergerModel>& models);
std::vector<WeichselbergerModel> models_from_json(const nlohmann::json& j);

// {"format": "famac-precoders", "version": 1, "users": [{u, gamma_diag, v}, ...]}
nlohmann::json precoders_to_json(const std::vector<PrecoderFactors>& precoders);
std::vector<PrecoderFactors> precoders_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Ten significant digits; the text form used in every CSV.
std::string format_double(double x);

}  // namespace famac
