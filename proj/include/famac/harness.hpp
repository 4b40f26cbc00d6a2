#pragma once

#include "famac/optimizer.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace famac {

struct ModelSource {
    std::string file;  // empty: generate
    int users = 2;
    int n_t = 2;
    int n_r = 2;
    std::optional<std::uint64_t> seed;
};

struct NoiseConfig {
    std::size_t samples = 500;
    int quadrature_points = 0;  // > 0 selects Gauss–Hermite with this many points per axis
    std::optional<std::uint64_t> seed;
};

// One experiment. Seeds left unset are derived from `seed`, so a single
// master seed reproduces every stochastic component.
struct ExperimentSpec {
    std::string scenario = "experiment";
    ModelSource model;
    std::string modulation = "qpsk";
    std::vector<double> snr_db{0.0};
    std::vector<double> weights;  // empty: all ones
    std::vector<std::string> methods{"NP", "FAP"};
    bool exact_mc = false;
    OptimizerConfig optimizer;
    FixedPointConfig fixed_point;
    NoiseConfig noise;
    McConfig mc;
    std::optional<std::uint64_t> optimizer_seed;
    std::optional<std::uint64_t> fixed_point_seed;
    std::optional<std::uint64_t> mc_seed;
    std::uint64_t seed = 1;
    std::string output;
    double gap_tolerance = 0.3;
    int region_points = 9;
    bool timing = false;

    // Missing fields keep their defaults; unknown fields are rejected.
    static ExperimentSpec from_json(const nlohmann::json& j);
    void validate() const;
    // Copy with every derived seed filled in.
    ExperimentSpec resolved() const;
};

std::vector<WeichselbergerModel> load_models(const ExperimentSpec& spec);

// WSR problem at one SNR with users sorted by nonincreasing weight.
// order[i] is the original label of sorted user i.
struct PreparedProblem {
    WsrProblem problem;
    std::vector<int> order;
};

PreparedProblem build_problem(const ExperimentSpec& spec, const std::vector<WeichselbergerModel>& models,
                              double snr_db, const std::vector<double>& weights);

enum class Method { FAP, NP, GP, EXACT_MC, ASY };
std::string method_name(Method m);
Method parse_method(const std::string& name);

// Precoders of a design method. FAP runs the optimizer; its trace length is
// reported through iterations.
std::vector<PrecoderFactors> design_precoders(const WsrProblem& problem, const OptimizerConfig& cfg, Method method,
                                              int* iterations = nullptr);

// Σ_k Δ_k I(A_k) by exact Monte Carlo; std_err combines the per-set errors.
McEstimate exact_wsr_mc(const WsrProblem& problem, const std::vector<CMatrix>& precoders, const McConfig& cfg);

struct SweepRow {
    double snr_db = 0.0;
    Method method = Method::ASY;
    Method precoder = Method::NP;
    double wsr_bits = 0.0;
    double std_err = 0.0;
    int iterations = 0;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    std::string status = "ok";
};

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> run_sweep(const ExperimentSpec& spec);

struct ConvergenceRow {
    double snr_db = 0.0;
    int restart = 0;
    int iteration = 0;  // 1-based
    double wsr_bits = 0.0;
    bool selected = false;
    bool converged = false;
};

std::string convergence_csv(const std::vector<ConvergenceRow>& rows);
std::vector<ConvergenceRow> run_convergence(const ExperimentSpec& spec, const std::vector<double>& snr_list);

struct RegionPoint {
    std::vector<double> mu;     // original user labels
    Method method = Method::NP;
    std::vector<double> rates;  // original user labels
    double wsr_bits = 0.0;
};

std::string region_csv(const std::vector<RegionPoint>& points);
// Weight vectors use original user labels and need not be sorted.
std::vector<RegionPoint> run_rate_region(const ExperimentSpec& spec, double snr_db,
                                         const std::vector<std::vector<double>>& weight_grid);
// (cos θ, sin θ) for θ evenly spaced on [0, π/2].
std::vector<std::vector<double>> quarter_circle_weights(int points);

struct ValidationRow {
    double snr_db = 0.0;
    Method precoder = Method::NP;
    double asymptotic_bits = 0.0;
    double exact_bits = 0.0;
    double gap_bits = 0.0;
    double std_err = 0.0;
    bool pass = false;
};

struct ValidationReport {
    std::vector<ValidationRow> rows;
    double max_gap = 0.0;
    double max_std_err = 0.0;
    bool pass = false;
};

std::string validation_csv(const ValidationReport& report);
// Sum-rate comparison for the NP and FAP designs among the config's methods
// (both when neither is listed).
ValidationReport run_validation(const ExperimentSpec& spec);

}  // namespace famac
