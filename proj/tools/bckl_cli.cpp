#include "bckl/error.hpp"
#include "bckl/io.hpp"
#include "bckl/mcmc.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <boost/version.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kSolver = 3 };

int cmd_synth(const std::string& out, std::uint64_t seed, long n1, long n2, double noise_var) {
    const bckl::SpatioTensor y = bckl::generate_synthetic(n1, n2, noise_var, seed);
    bckl::write_tensor(out, y);
    return kOk;
}

int cmd_mask(const std::string& in, const std::string& scenario, double rate, std::uint64_t seed,
             const std::string& train, const std::string& test_mask) {
    const bckl::SpatioTensor y = bckl::read_tensor(in);
    const bckl::MissingScenario sc{bckl::parse_missing_kind(scenario), rate};
    const bckl::MissingResult r = bckl::apply_missing(y, sc, seed);
    bckl::write_tensor(train, r.train);
    bckl::write_mask(test_mask, y.dims(), r.test_mask);
    std::cerr << json{{"scenario", scenario}, {"achieved_rate", r.achieved_rate}}.dump() << "\n";
    return kOk;
}

int cmd_fit(const std::string& config_path, bool quiet) {
    bckl::RunConfig rc = bckl::load_run_config(config_path);
    const bckl::SpatioTensor data = bckl::load_input(rc);
    fs::create_directories(rc.output_dir);
    const fs::path dir(rc.output_dir);

    std::ofstream sweeps(dir / "sweeps.jsonl");
    bckl::McmcObserver obs;
    obs.on_sweep = [&](const bckl::SweepRecord& r) {
        const std::string line = bckl::sweep_json_line(r);
        sweeps << line << '\n';
        if (!quiet) std::cerr << line << '\n';
    };
    obs.on_warning = [](const std::string& msg) {
        std::cerr << json{{"level", "warning"}, {"message", msg}}.dump() << '\n';
    };
    const bckl::McmcResult res = bckl::run_mcmc(data, rc.mcmc, &obs);

    const bckl::PosteriorSummary s = bckl::summarize(res.samples, rc.mcmc.level);
    bckl::write_summary(rc.output_dir, data.dims(), s);
    res.samples.save((dir / "samples.bcks").string());
    bckl::write_trace_csv((dir / "trace.csv").string(), res.trace, rc.mcmc.rank, rc.mcmc.local_components);

    json manifest;
    manifest["config_hash"] = bckl::content_hash(rc.canonical_json);
    manifest["config"] = json::parse(rc.canonical_json);
    manifest["seed"] = rc.mcmc.seed;
    manifest["versions"] = {{"bckl", BCKL_VERSION},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"boost", BOOST_LIB_VERSION}};
    manifest["dims"] = {data.dims().m, data.dims().t, data.dims().p};
    manifest["observed"] = data.num_observed();
    manifest["sweeps"] = rc.mcmc.burn_in + rc.mcmc.samples;
    manifest["solver_failures"] = res.solver_failures;
    manifest["final_tau"] = res.tau;
    manifest["quantiles"] = res.samples.exact() ? "exact" : "sketch";
    manifest["files"] = {"mean.bckl", "std.bckl", "lower.bckl", "upper.bckl", "trace.csv", "sweeps.jsonl",
                         "samples.bcks"};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    return kOk;
}

int cmd_summarize(const std::string& run, std::optional<double> level) {
    const fs::path dir(run);
    const bckl::PosteriorSamples samples = bckl::PosteriorSamples::load((dir / "samples.bcks").string());
    const bckl::PosteriorSummary s = bckl::summarize(samples, level.value_or(samples.level()));
    bckl::write_summary(run, samples.dims(), s);
    return kOk;
}

int cmd_eval(const std::string& run, const std::string& truth_path, const std::string& mask_path, double alpha,
             std::optional<double> psnr_max, const std::string& out) {
    bckl::Dims dims;
    const bckl::PosteriorSummary s = bckl::read_summary(run, &dims);
    const bckl::SpatioTensor truth = bckl::read_tensor(truth_path);
    bckl::Dims mask_dims;
    const auto mask = bckl::read_mask(mask_path, &mask_dims);
    if (!(truth.dims() == dims) || !(mask_dims == dims)) {
        throw bckl::DataError("truth, test mask and run outputs have different dims");
    }
    const std::string report = bckl::score_json(bckl::evaluate(s, truth, mask, alpha, psnr_max));
    std::ofstream(out.empty() ? (fs::path(run) / "score.json").string() : out) << report;
    std::cout << report;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian complementary kernelized tensor completion"};
    app.require_subcommand(1);

    std::string out, in, scenario, train, test_mask, config, run, truth, score_out;
    std::uint64_t seed = 0;
    long n1 = 100, n2 = 100;
    double noise_var = 0.01, rate = 0.5, alpha = 0.05;
    bool quiet = false;
    std::optional<double> level, psnr_max;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic 2-D test field");
    synth->add_option("--out", out, "Output tensor file")->required();
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--n1", n1, "Grid points along the first dimension")->check(CLI::Range(2L, 1L << 20));
    synth->add_option("--n2", n2, "Grid points along the second dimension")->check(CLI::Range(2L, 1L << 20));
    synth->add_option("--noise-var", noise_var, "Variance of the added Gaussian noise")->check(CLI::NonNegativeNumber);

    auto* mask = app.add_subcommand("mask", "Hold out entries under a missing-data scenario");
    mask->add_option("--in", in, "Complete tensor file")->required();
    mask->add_option("--scenario", scenario, "rm, nm, sbm or quadrant")
        ->required()
        ->check(CLI::IsMember({"rm", "nm", "sbm", "quadrant"}));
    mask->add_option("--rate", rate, "Missing rate in (0, 1); ignored for quadrant");
    mask->add_option("--seed", seed, "Random seed");
    mask->add_option("--train", train, "Output training tensor")->required();
    mask->add_option("--test-mask", test_mask, "Output held-out mask")->required();

    auto* fit = app.add_subcommand("fit", "Run the sampler");
    fit->add_option("--config", config, "Run configuration (JSON)")->required();
    fit->add_flag("--quiet", quiet, "Do not echo per-sweep progress");

    auto* summarize = app.add_subcommand("summarize", "Rebuild per-entry summaries from stored samples");
    summarize->add_option("--run", run, "Run directory")->required();
    summarize->add_option("--level", level, "Central interval level");

    auto* eval = app.add_subcommand("eval", "Score held-out entries");
    eval->add_option("--run", run, "Run directory")->required();
    eval->add_option("--truth", truth, "Complete tensor file")->required();
    eval->add_option("--test-mask", test_mask, "Held-out mask")->required();
    eval->add_option("--alpha", alpha, "Interval score level");
    eval->add_option("--psnr-max", psnr_max, "Peak value for PSNR (default: maximum of the truth)");
    eval->add_option("--out", score_out, "Report path (default RUN/score.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return cmd_synth(out, seed, n1, n2, noise_var);
        if (*mask) return cmd_mask(in, scenario, rate, seed, train, test_mask);
        if (*fit) return cmd_fit(config, quiet);
        if (*summarize) return cmd_summarize(run, level);
        if (*eval) return cmd_eval(run, truth, test_mask, alpha, psnr_max, score_out);
    } catch (const bckl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const bckl::ParameterError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const bckl::SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return kData;
    } catch (const bckl::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const bckl::DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const bckl::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kSolver;
    } catch (const bckl::FactorizationError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
