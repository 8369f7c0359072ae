// mbpetc: certify constants, run experiment batches, compare traces and run
// the acceptance battery.
//
// Exit codes: 0 success, 1 check failure, 2 configuration error.

#include "mbpetc/acceptance.hpp"
#include "mbpetc/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifndef MBPETC_BENCHMARK_MANIFEST
#define MBPETC_BENCHMARK_MANIFEST "data/pendulum_benchmark.manifest"
#endif

namespace fs = std::filesystem;
using namespace mbpetc;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kConfigError = 2;

std::string default_out() {
    const char* env = std::getenv("MBPETC_OUT");
    return env && *env ? env : "out";
}

int cmd_certify(const std::string& model_name, double c, double sigma, std::size_t grid, const std::string& method,
                const std::string& out_dir) {
    const SystemModel model = make_model(model_name);
    EstimationOptions opts;
    opts.grid_resolution = grid;
    const CertifiedConstants k = certify(model, make_level_set(model, c), sigma, opts, parse_gamma_method(method));
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / (model_name + ".constants");
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_constants(out, k);
    const SigmaMasp m = k.masp();
    std::cout << "L1c = " << format_double(k.L1c) << "\nL2c = " << format_double(k.L2c)
              << "\nmu_c = " << format_double(k.mu_c) << "\nM_max_c = " << format_double(k.M_max_c)
              << "\ngamma_rate = " << format_double(k.gamma_rate) << " (" << to_string(k.gamma_method) << ")"
              << "\nh_sigma_masp = " << format_double(k.h_sigma_masp) << "\nactive term: " << to_string(m.active)
              << " (convergence " << format_double(m.convergence_term) << ", lipschitz "
              << format_double(m.lipschitz_term) << ")\nwrote " << path.string() << "\n";
    return kOk;
}

int cmd_run(const std::string& spec_path, const std::string& out_override, bool unsafe) {
    ExperimentSpec spec = read_experiment_file(spec_path);
    if (!out_override.empty()) spec.out_dir = out_override;
    const BatchResult res = run_batch(spec, unsafe);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& s : res.scenarios) {
        const TraceSummary sum = s.trace.summary();
        std::cout << s.name << ": " << sum.transmissions << " transmissions, mean gap "
                  << format_double(sum.mean_gap) << " s -> " << s.csv_path.string() << "\n";
        for (const auto& rep : s.checks) std::cout << rep.to_string();
    }
    if (res.comparison) std::cout << res.comparison->to_table();
    return res.passed() ? kOk : kCheckFailure;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& out_dir) {
    std::vector<SimTrace> traces;
    for (const auto& f : files) traces.push_back(read_trace_csv_file(f));
    const ComparisonReport rep = compare(traces);
    std::cout << rep.to_table();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "comparison.csv") << rep.to_table();
    }
    return kOk;
}

int cmd_accept(const std::vector<std::string>& only, const std::string& constants, const std::string& benchmark) {
    AcceptanceOptions opts;
    opts.benchmark_path = benchmark;
    opts.constants_path = constants;
    opts.only.insert(only.begin(), only.end());
    const AcceptanceReport rep = run_acceptance(opts, &std::cout);
    return rep.passed() ? kOk : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-based periodic event-triggered control toolkit"};
    app.require_subcommand(1);

    std::string model = "pendulum", method = "norm_comparison", out, spec, constants;
    std::string benchmark = MBPETC_BENCHMARK_MANIFEST;
    double c = 0.258, sigma = 0.35;
    std::size_t grid = 200;
    bool unsafe = false;
    std::vector<std::string> only, files;

    auto* certify_cmd = app.add_subcommand("certify", "estimate the certified constants and the sigma-MASP");
    certify_cmd->add_option("model_name", model, "registered model")->capture_default_str();
    certify_cmd->add_option("--model", model, "registered model")->capture_default_str();
    certify_cmd->add_option("--c", c, "level set V <= c")->capture_default_str();
    certify_cmd->add_option("--sigma", sigma, "decay fraction in (0, 1)")->capture_default_str();
    certify_cmd->add_option("--grid", grid, "grid points per axis")->capture_default_str();
    certify_cmd->add_option("--gamma-method", method, "direct or norm_comparison")->capture_default_str();
    certify_cmd->add_option("--out", out, "output directory (default $MBPETC_OUT or ./out)");

    auto* run_cmd = app.add_subcommand("run", "run an experiment spec");
    run_cmd->add_option("--spec", spec, "experiment file")->required();
    run_cmd->add_option("--out", out, "output directory (overrides the spec)");
    run_cmd->add_flag("--unsafe-h-override", unsafe, "allow h above the certified sigma-MASP");

    auto* compare_cmd = app.add_subcommand("compare", "compare trace CSV files");
    compare_cmd->add_option("traces", files, "trace CSV files")->required();
    compare_cmd->add_option("--out", out, "write comparison.csv here");

    auto* accept_cmd = app.add_subcommand("accept", "run the acceptance battery");
    accept_cmd->add_option("--only", only, "criterion ids, e.g. A3");
    accept_cmd->add_option("--constants", constants, "constants manifest to use instead of certifying");
    accept_cmd->add_option("--benchmark", benchmark, "benchmark manifest")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*certify_cmd) return cmd_certify(model, c, sigma, grid, method, out.empty() ? default_out() : out);
        if (*run_cmd) return cmd_run(spec, out, unsafe);
        if (*compare_cmd) return cmd_compare(files, out);
        if (*accept_cmd) return cmd_accept(only, constants, benchmark);
    } catch (const CertificationError& e) {
        std::cerr << "certification failed: " << e.what() << "\n  offending point: " << format_vector(e.offending_point)
                  << "\n";
        return kCheckFailure;
    } catch (const SimulationAbort& e) {
        std::cerr << "simulation aborted: " << e.what() << "\n";
        return kCheckFailure;
    } catch (const InputError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
    return kOk;
}
