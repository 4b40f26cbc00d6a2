// famac: precoder design for the finite-alphabet MIMO multiple access channel.
//
// Exit codes: 0 success, 1 usage or input error, 2 validation failure,
// 3 resource cap exceeded, 4 fixed-point convergence failure.

#include "famac/harness.hpp"
#include "famac/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace famac;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 0;
    bool timing = false;
    std::string model_file;
    std::optional<int> users;
    std::optional<int> n_t;
    std::optional<int> n_r;
    std::string modulation;
    std::vector<double> snr;
    std::vector<std::string> methods;
    std::vector<double> weights;
    std::optional<std::size_t> noise_samples;
    std::optional<int> restarts;
    std::optional<int> max_iters;
    std::optional<std::size_t> mc_channels;
    bool exact_mc = false;
};

ExperimentSpec make_spec(const Overrides& o) {
    ExperimentSpec s;
    if (!o.config.empty()) s = ExperimentSpec::from_json(read_json_file(o.config));
    if (o.seed) s.seed = *o.seed;
    if (!o.out.empty()) s.output = o.out;
    if (!o.model_file.empty()) s.model.file = o.model_file;
    if (o.users) s.model.users = *o.users;
    if (o.n_t) s.model.n_t = *o.n_t;
    if (o.n_r) s.model.n_r = *o.n_r;
    if (!o.modulation.empty()) s.modulation = o.modulation;
    if (!o.snr.empty()) s.snr_db = o.snr;
    if (!o.methods.empty()) s.methods = o.methods;
    if (!o.weights.empty()) s.weights = o.weights;
    if (o.noise_samples) s.noise.samples = *o.noise_samples;
    if (o.restarts) s.optimizer.restarts = *o.restarts;
    if (o.max_iters) s.optimizer.max_iters = *o.max_iters;
    if (o.mc_channels) s.mc.n_channels = *o.mc_channels;
    if (o.exact_mc) s.exact_mc = true;
    s.timing = o.timing;
    s.validate();
    return s;
}

void emit(const ExperimentSpec& s, const std::string& text) {
    if (s.output.empty()) {
        std::cout << text;
    } else {
        write_text_file(s.output, text);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weighted-sum-rate precoder design for finite-alphabet MIMO multiple access channels"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--out", o.out, "Output file (default: stdout)");
    app.add_option("--threads", o.threads, "Worker threads (0: all cores)");
    app.add_flag("--timing", o.timing, "Record wall-clock times in CSV output");
    app.add_option("--model", o.model_file, "Channel model file")->check(CLI::ExistingFile);
    app.add_option("--users", o.users, "Users of a generated model");
    app.add_option("--nt", o.n_t, "Transmit antennas of a generated model");
    app.add_option("--nr", o.n_r, "Receive antennas of a generated model");
    app.add_option("--modulation", o.modulation, "bpsk, qpsk, 8psk, 16qam, ...");
    app.add_option("--snr", o.snr, "SNR values in dB");
    app.add_option("--methods", o.methods, "Designs: FAP, NP, GP");
    app.add_option("--weights", o.weights, "Rate weights, one per user");
    app.add_option("--noise-samples", o.noise_samples, "Noise ensemble size");
    app.add_option("--restarts", o.restarts, "Optimizer restarts");
    app.add_option("--max-iters", o.max_iters, "Optimizer iteration budget");
    app.add_option("--mc-channels", o.mc_channels, "Channel draws for exact Monte Carlo");
    app.add_flag("--exact-mc", o.exact_mc, "Add exact Monte Carlo rows to sweeps");

    auto* gen = app.add_subcommand("gen-channel", "Generate a random Weichselberger model");
    auto* opt = app.add_subcommand("optimize", "Optimize precoders at one SNR and write them as JSON");
    auto* sweep = app.add_subcommand("sweep", "WSR of each design over the SNR grid (CSV)");
    auto* conv = app.add_subcommand("convergence", "Optimizer traces per SNR (CSV)");
    auto* region = app.add_subcommand("region", "Rate-region boundary points (CSV)");
    int region_points = 0;
    region->add_option("--points", region_points, "Weight directions on the quarter circle");
    auto* validate = app.add_subcommand("validate", "Asymptotic vs exact Monte Carlo sum rate (CSV)");
    auto* count = app.add_subcommand("count-additions", "Additions per MI evaluation");
    std::string mode = "per_user";
    std::vector<int> orders;
    int count_nt = 0;
    count->add_option("--mode", mode, "per_user or joint")->check(CLI::IsMember({"per_user", "joint"}));
    count->add_option("--orders", orders, "Constellation order of each user")->required()->delimiter(',');
    count->add_option("--count-nt", count_nt, "Transmit antennas (defaults to --nt)");

    CLI11_PARSE(app, argc, argv);
    set_thread_count(o.threads);

    try {
        if (count->parsed()) {
            const int n_t = count_nt > 0 ? count_nt : o.n_t.value_or(0);
            const auto n = count_additions(mode == "joint" ? AdditionMode::Joint : AdditionMode::PerUser, orders, n_t);
            std::ostringstream os;
            os << n.str() << '\n';
            if (o.out.empty()) {
                std::cout << os.str();
            } else {
                write_text_file(o.out, os.str());
            }
            return 0;
        }
        const ExperimentSpec spec = make_spec(o);
        if (gen->parsed()) {
            emit(spec, models_to_json(load_models(spec)).dump(2) + "\n");
        } else if (opt->parsed()) {
            const ExperimentSpec s = spec.resolved();
            const auto models = load_models(s);
            const double snr = s.snr_db.front();
            const std::vector<double> w = s.weights.empty() ? std::vector<double>(models.size(), 1.0) : s.weights;
            const PreparedProblem prepared = build_problem(s, models, snr, w);
            const OptimizeResult r = optimize(prepared.problem, s.optimizer);
            std::vector<PrecoderFactors> relabeled(r.precoders.size());
            for (std::size_t i = 0; i < r.precoders.size(); ++i)
                relabeled[static_cast<std::size_t>(prepared.order[i])] = r.precoders[i];
            nlohmann::json j = precoders_to_json(relabeled);
            j["snr_db"] = snr;
            j["wsr_bits"] = r.evaluation.value_bits;
            j["trace"] = r.trace.wsr;
            j["restart"] = r.trace.restart;
            j["converged"] = r.trace.converged;
            emit(s, j.dump(2) + "\n");
        } else if (sweep->parsed()) {
            emit(spec, sweep_csv(run_sweep(spec)));
        } else if (conv->parsed()) {
            emit(spec, convergence_csv(run_convergence(spec, spec.snr_db)));
        } else if (region->parsed()) {
            const int pts = region_points > 0 ? region_points : spec.region_points;
            emit(spec, region_csv(run_rate_region(spec, spec.snr_db.front(), quarter_circle_weights(pts))));
        } else if (validate->parsed()) {
            const ValidationReport report = run_validation(spec);
            emit(spec, validation_csv(report));
            if (!report.pass) {
                std::cerr << "validation failed: max gap " << report.max_gap << " bits exceeds "
                          << spec.gap_tolerance << '\n';
                return 2;
            }
        }
    } catch (const ResourceLimitError& e) {
        std::cerr << "resource limit: " << e.what() << '\n';
        return 3;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
