#include "famac/harness.hpp"

#include "famac/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace famac {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw std::invalid_argument("unknown field '" + it.key() + "' in " + where);
    }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void read_if(const json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<double> parse_snr(const json& j) {
    if (j.is_array()) return j.get<std::vector<double>>();
    if (j.is_number()) return {j.get<double>()};
    if (j.is_object()) {
        reject_unknown(j, {"start", "stop", "step"}, "snr_db");
        const double start = j.at("start").get<double>();
        const double stop = j.at("stop").get<double>();
        const double step = j.at("step").get<double>();
        if (!(step > 0.0)) throw std::invalid_argument("snr_db.step must be positive");
        std::vector<double> out;
        const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
        for (long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
        return out;
    }
    throw std::invalid_argument("snr_db must be a number, a list or {start, stop, step}");
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const json& j) {
    reject_unknown(j, {"scenario", "model", "modulation", "snr_db", "weights", "methods", "exact_mc", "optimizer",
                       "fixed_point", "noise", "mc", "seed", "output", "gap_tolerance", "region_points"},
                   "experiment config");
    ExperimentSpec s;
    read_if(j, "scenario", s.scenario);
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, {"file", "users", "n_t", "n_r", "seed"}, "model");
        read_if(m, "file", s.model.file);
        read_if(m, "users", s.model.users);
        read_if(m, "n_t", s.model.n_t);
        read_if(m, "n_r", s.model.n_r);
        read_if(m, "seed", s.model.seed);
    }
    read_if(j, "modulation", s.modulation);
    if (j.contains("snr_db")) s.snr_db = parse_snr(j.at("snr_db"));
    read_if(j, "weights", s.weights);
    read_if(j, "methods", s.methods);
    read_if(j, "exact_mc", s.exact_mc);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        reject_unknown(o, {"theta", "omega", "wsr_tol", "max_iters", "restarts", "seed"}, "optimizer");
        read_if(o, "theta", s.optimizer.theta);
        read_if(o, "omega", s.optimizer.omega);
        read_if(o, "wsr_tol", s.optimizer.wsr_tol);
        read_if(o, "max_iters", s.optimizer.max_iters);
        read_if(o, "restarts", s.optimizer.restarts);
        read_if(o, "seed", s.optimizer_seed);
    }
    if (j.contains("fixed_point")) {
        const json& f = j.at("fixed_point");
        reject_unknown(f, {"tol", "max_iter", "damping", "n_starts", "seed"}, "fixed_point");
        read_if(f, "tol", s.fixed_point.tol);
        read_if(f, "max_iter", s.fixed_point.max_iter);
        read_if(f, "damping", s.fixed_point.damping);
        read_if(f, "n_starts", s.fixed_point.n_starts);
        read_if(f, "seed", s.fixed_point_seed);
    }
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        reject_unknown(n, {"samples", "quadrature_points", "seed"}, "noise");
        read_if(n, "samples", s.noise.samples);
        read_if(n, "quadrature_points", s.noise.quadrature_points);
        read_if(n, "seed", s.noise.seed);
    }
    if (j.contains("mc")) {
        const json& m = j.at("mc");
        reject_unknown(m, {"n_channels", "n_noise", "seed", "alphabet_cap", "batches"}, "mc");
        read_if(m, "n_channels", s.mc.n_channels);
        read_if(m, "n_noise", s.mc.n_noise);
        read_if(m, "alphabet_cap", s.mc.alphabet_cap);
        read_if(m, "batches", s.mc.batches);
        read_if(m, "seed", s.mc_seed);
    }
    read_if(j, "seed", s.seed);
    read_if(j, "output", s.output);
    read_if(j, "gap_tolerance", s.gap_tolerance);
    read_if(j, "region_points", s.region_points);
    s.validate();
    return s;
}

void ExperimentSpec::validate() const {
    if (model.file.empty()) {
        if (model.users < 1 || model.n_t < 1 || model.n_r < 1) throw std::invalid_argument("model dimensions must be positive");
    } else if (!std::filesystem::exists(model.file)) {
        throw std::invalid_argument("model file '" + model.file + "' does not exist");
    }
    (void)parse_modulation(modulation);
    for (std::size_t i = 1; i < snr_db.size(); ++i) {
        if (!(snr_db[i] > snr_db[i - 1])) throw std::invalid_argument("SNR grid must be strictly increasing");
    }
    for (const auto& m : methods) {
        const Method parsed = parse_method(m);
        if (parsed == Method::EXACT_MC || parsed == Method::ASY)
            throw std::invalid_argument("methods lists designs (FAP, NP, GP); use exact_mc for Monte Carlo rows");
    }
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
    }
    if (!weights.empty() && std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; }))
        throw std::invalid_argument("at least one weight must be positive");
    optimizer.validate();
    if (noise.samples < 1) throw std::invalid_argument("noise.samples must be positive");
    if (noise.quadrature_points < 0) throw std::invalid_argument("noise.quadrature_points must be nonnegative");
    if (!(gap_tolerance >= 0.0)) throw std::invalid_argument("gap_tolerance must be nonnegative");
    if (region_points < 2) throw std::invalid_argument("region_points must be at least 2");
}

ExperimentSpec ExperimentSpec::resolved() const {
    ExperimentSpec s = *this;
    if (!s.model.seed) s.model.seed = derive_seed(seed, {1});
    if (!s.noise.seed) s.noise.seed = derive_seed(seed, {2});
    if (!s.optimizer_seed) s.optimizer_seed = derive_seed(seed, {3});
    if (!s.fixed_point_seed) s.fixed_point_seed = derive_seed(seed, {4});
    if (!s.mc_seed) s.mc_seed = derive_seed(seed, {5});
    s.optimizer.seed = *s.optimizer_seed;
    s.fixed_point.seed = *s.fixed_point_seed;
    s.mc.seed = *s.mc_seed;
    return s;
}

std::vector<WeichselbergerModel> load_models(const ExperimentSpec& spec) {
    const ExperimentSpec s = spec.resolved();
    if (!s.model.file.empty()) {
        std::vector<WeichselbergerModel> models = models_from_json(read_json_file(s.model.file));
        for (auto& m : models) m = normalize_coupling(m);
        return models;
    }
    std::vector<WeichselbergerModel> models;
    for (int k = 0; k < s.model.users; ++k) {
        models.push_back(random_model(s.model.n_r, s.model.n_t, derive_seed(*s.model.seed, {static_cast<std::uint64_t>(k)})));
    }
    return models;
}

PreparedProblem build_problem(const ExperimentSpec& spec, const std::vector<WeichselbergerModel>& models,
                              double snr_db, const std::vector<double>& weights) {
    const ExperimentSpec s = spec.resolved();
    if (weights.size() != models.size()) throw std::invalid_argument("one weight per user is required");
    const int n_t = models.front().n_t;
    for (const auto& m : models) {
        if (m.n_t != n_t) throw std::invalid_argument("all users must share n_t");
    }
    PreparedProblem out;
    out.order.resize(models.size());
    std::iota(out.order.begin(), out.order.end(), 0);
    std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) { return weights[a] > weights[b]; });
    const Constellation c = parse_modulation(s.modulation);
    WsrProblem& p = out.problem;
    const auto k = static_cast<Eigen::Index>(models.size());
    p.weights_mu.resize(k);
    p.powers.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const int src = out.order[static_cast<std::size_t>(i)];
        p.models.push_back(models[static_cast<std::size_t>(src)]);
        p.weights_mu(i) = weights[static_cast<std::size_t>(src)];
        p.powers(i) = snr_to_power(snr_db, models[static_cast<std::size_t>(src)]);
        p.alphabets.emplace_back(c, n_t);
    }
    p.noise = s.noise.quadrature_points > 0 ? NoiseEnsemble::gauss_hermite(n_t, s.noise.quadrature_points)
                                            : NoiseEnsemble::monte_carlo(n_t, s.noise.samples, *s.noise.seed);
    p.fixed_point = s.fixed_point;
    return out;
}

std::string method_name(Method m) {
    switch (m) {
        case Method::FAP: return "FAP";
        case Method::NP: return "NP";
        case Method::GP: return "GP";
        case Method::EXACT_MC: return "EXACT_MC";
        case Method::ASY: return "ASY";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    if (s == "FAP") return Method::FAP;
    if (s == "NP") return Method::NP;
    if (s == "GP") return Method::GP;
    if (s == "EXACT_MC") return Method::EXACT_MC;
    if (s == "ASY") return Method::ASY;
    throw std::invalid_argument("unknown method '" + name + "'");
}

std::vector<PrecoderFactors> design_precoders(const WsrProblem& problem, const OptimizerConfig& cfg, Method method,
                                              int* iterations) {
    if (iterations != nullptr) *iterations = 0;
    switch (method) {
        case Method::NP: return no_precoding_baseline(problem);
        case Method::GP: return gaussian_waterfilling_baseline(problem);
        case Method::FAP: {
            OptimizeResult r = optimize(problem, cfg);
            if (iterations != nullptr) *iterations = static_cast<int>(r.trace.wsr.size());
            return std::move(r.precoders);
        }
        default: throw std::invalid_argument("not a precoder design: " + method_name(method));
    }
}

McEstimate exact_wsr_mc(const WsrProblem& problem, const std::vector<CMatrix>& precoders, const McConfig& cfg) {
    const RVector d = problem.deltas();
    McEstimate total;
    double var = 0.0;
    for (int k = 1; k <= problem.users(); ++k) {
        if (!(d(k - 1) > 0.0)) continue;
        std::vector<int> subset(static_cast<std::size_t>(k));
        std::iota(subset.begin(), subset.end(), 0);
        const McEstimate e = exact_conditional_mi_mc(problem.models, precoders, subset, problem.alphabets, cfg);
        total.value_bits += d(k - 1) * e.value_bits;
        var += d(k - 1) * d(k - 1) * e.std_err * e.std_err;
    }
    total.std_err = std::sqrt(var);
    return total;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "# famac sweep v1\n";
    os << "snr_db,method,precoder,wsr_bits,std_err,iterations,wall_time_s,seed,status\n";
    for (const auto& r : rows) {
        os << format_double(r.snr_db) << ',' << method_name(r.method) << ',' << method_name(r.precoder) << ','
           << format_double(r.wsr_bits) << ',' << format_double(r.std_err) << ',' << r.iterations << ','
           << format_double(r.wall_time_s) << ',' << r.seed << ',' << r.status << '\n';
    }
    return os.str();
}

std::vector<SweepRow> run_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const ExperimentSpec s = spec.resolved();
    const std::vector<WeichselbergerModel> models = load_models(s);
    const std::vector<double> weights = s.weights.empty() ? ones(models.size()) : s.weights;
    std::vector<SweepRow> rows;
    for (double snr : s.snr_db) {
        const PreparedProblem prepared = build_problem(s, models, snr, weights);
        const WsrProblem& p = prepared.problem;
        for (const auto& name : s.methods) {
            const Method method = parse_method(name);
            const auto t0 = std::chrono::steady_clock::now();
            SweepRow row;
            row.snr_db = snr;
            row.method = method;
            row.precoder = method;
            row.seed = s.seed;
            const std::vector<PrecoderFactors> f = design_precoders(p, s.optimizer, method, &row.iterations);
            const std::vector<CMatrix> b = precoder_matrices(f);
            row.wsr_bits =
                asymptotic_wsr(p.models, b, p.weights_mu, p.alphabets, p.fixed_point, p.noise).value_bits;
            if (s.timing) row.wall_time_s = seconds_since(t0);
            rows.push_back(row);
            if (s.exact_mc) {
                const auto t1 = std::chrono::steady_clock::now();
                SweepRow ex;
                ex.snr_db = snr;
                ex.method = Method::EXACT_MC;
                ex.precoder = method;
                ex.seed = s.seed;
                try {
                    const McEstimate e = exact_wsr_mc(p, b, s.mc);
                    ex.wsr_bits = e.value_bits;
                    ex.std_err = e.std_err;
                } catch (const ResourceLimitError&) {
                    ex.status = "skipped-cap";
                }
                if (s.timing) ex.wall_time_s = seconds_since(t1);
                rows.push_back(ex);
            }
        }
    }
    return rows;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
    std::ostringstream os;
    os << "# famac convergence v1\n";
    os << "snr_db,restart,iteration,wsr_bits,selected,converged\n";
    for (const auto& r : rows) {
        os << format_double(r.snr_db) << ',' << r.restart << ',' << r.iteration << ',' << format_double(r.wsr_bits)
           << ',' << (r.selected ? 1 : 0) << ',' << (r.converged ? 1 : 0) << '\n';
    }
    return os.str();
}

std::vector<ConvergenceRow> run_convergence(const ExperimentSpec& spec, const std::vector<double>& snr_list) {
    spec.validate();
    const ExperimentSpec s = spec.resolved();
    const std::vector<WeichselbergerModel> models = load_models(s);
    const std::vector<double> weights = s.weights.empty() ? ones(models.size()) : s.weights;
    std::vector<ConvergenceRow> rows;
    for (double snr : snr_list) {
        const PreparedProblem prepared = build_problem(s, models, snr, weights);
        const OptimizeResult r = optimize(prepared.problem, s.optimizer);
        for (std::size_t restart = 0; restart < r.trace.restart_wsr.size(); ++restart) {
            const auto& tr = r.trace.restart_wsr[restart];
            const bool selected = static_cast<int>(restart) == r.trace.restart;
            for (std::size_t i = 0; i < tr.size(); ++i) {
                rows.push_back({snr, static_cast<int>(restart), static_cast<int>(i + 1), tr[i], selected,
                                selected && r.trace.converged});
            }
        }
    }
    return rows;
}

std::string region_csv(const std::vector<RegionPoint>& points) {
    std::ostringstream os;
    os << "# famac region v1\n";
    const std::size_t k = points.empty() ? 2 : points.front().mu.size();
    os << "method";
    for (std::size_t i = 0; i < k; ++i) os << ",mu" << i + 1;
    for (std::size_t i = 0; i < k; ++i) os << ",r" << i + 1 << "_bits";
    os << ",wsr_bits\n";
    for (const auto& p : points) {
        os << method_name(p.method);
        for (double m : p.mu) os << ',' << format_double(m);
        for (double r : p.rates) os << ',' << format_double(r);
        os << ',' << format_double(p.wsr_bits) << '\n';
    }
    return os.str();
}

std::vector<std::vector<double>> quarter_circle_weights(int points) {
    if (points < 2) throw std::invalid_argument("need at least two weight points");
    std::vector<std::vector<double>> out;
    for (int i = 0; i < points; ++i) {
        const double theta = std::numbers::pi / 2.0 * i / (points - 1);
        double c = std::cos(theta);
        double s = std::sin(theta);
        if (i == 0) s = 0.0;
        if (i == points - 1) c = 0.0;
        out.push_back({c, s});
    }
    return out;
}

std::vector<RegionPoint> run_rate_region(const ExperimentSpec& spec, double snr_db,
                                         const std::vector<std::vector<double>>& weight_grid) {
    spec.validate();
    const ExperimentSpec s = spec.resolved();
    const std::vector<WeichselbergerModel> models = load_models(s);
    std::vector<RegionPoint> out;
    for (const auto& mu : weight_grid) {
        const PreparedProblem prepared = build_problem(s, models, snr_db, mu);
        const WsrProblem& p = prepared.problem;
        for (const auto& name : s.methods) {
            const Method method = parse_method(name);
            const std::vector<CMatrix> b = precoder_matrices(design_precoders(p, s.optimizer, method));
            const WsrEvaluation ev = asymptotic_wsr(p.models, b, p.weights_mu, p.alphabets, p.fixed_point, p.noise, true);
            RegionPoint pt;
            pt.mu = mu;
            pt.method = method;
            pt.rates.assign(mu.size(), 0.0);
            double prev = 0.0;
            for (std::size_t i = 0; i < mu.size(); ++i) {
                const double cur = ev.rates[i]->value_bits;
                pt.rates[static_cast<std::size_t>(prepared.order[i])] = cur - prev;
                prev = cur;
            }
            pt.wsr_bits = ev.value_bits;
            out.push_back(std::move(pt));
        }
    }
    return out;
}

std::string validation_csv(const ValidationReport& report) {
    std::ostringstream os;
    os << "# famac validation v1\n";
    os << "snr_db,precoder,asymptotic_bits,exact_bits,gap_bits,std_err,pass\n";
    for (const auto& r : report.rows) {
        os << format_double(r.snr_db) << ',' << method_name(r.precoder) << ',' << format_double(r.asymptotic_bits)
           << ',' << format_double(r.exact_bits) << ',' << format_double(r.gap_bits) << ','
           << format_double(r.std_err) << ',' << (r.pass ? 1 : 0) << '\n';
    }
    os << "# max_gap=" << format_double(report.max_gap) << " max_std_err=" << format_double(report.max_std_err)
       << " pass=" << (report.pass ? 1 : 0) << '\n';
    return os.str();
}

ValidationReport run_validation(const ExperimentSpec& spec) {
    spec.validate();
    const ExperimentSpec s = spec.resolved();
    const std::vector<WeichselbergerModel> models = load_models(s);
    const Constellation c = parse_modulation(s.modulation);
    std::size_t joint = 1;
    for (const auto& m : models) {
        const std::size_t mk = VectorAlphabet(c, m.n_t).size();
        if (joint > s.mc.alphabet_cap / mk)
            throw ResourceLimitError("joint alphabet of all users exceeds the cap of " + std::to_string(s.mc.alphabet_cap));
        joint *= mk;
    }
    std::vector<Method> designs;
    for (const auto& name : s.methods) {
        const Method m = parse_method(name);
        if (m == Method::NP || m == Method::FAP) designs.push_back(m);
    }
    if (designs.empty()) designs = {Method::NP, Method::FAP};

    ValidationReport report;
    report.pass = true;
    for (double snr : s.snr_db) {
        const PreparedProblem prepared = build_problem(s, models, snr, ones(models.size()));
        const WsrProblem& p = prepared.problem;
        for (Method design : designs) {
            const std::vector<CMatrix> b = precoder_matrices(design_precoders(p, s.optimizer, design));
            ValidationRow row;
            row.snr_db = snr;
            row.precoder = design;
            row.asymptotic_bits =
                asymptotic_wsr(p.models, b, p.weights_mu, p.alphabets, p.fixed_point, p.noise).value_bits;
            const McEstimate e = exact_wsr_mc(p, b, s.mc);
            row.exact_bits = e.value_bits;
            row.std_err = e.std_err;
            row.gap_bits = std::abs(row.asymptotic_bits - row.exact_bits);
            row.pass = row.gap_bits <= s.gap_tolerance;
            report.max_gap = std::max(report.max_gap, row.gap_bits);
            report.max_std_err = std::max(report.max_std_err, row.std_err);
            report.pass = report.pass && row.pass;
            report.rows.push_back(row);
        }
    }
    return report;
}

}  // namespace famac
