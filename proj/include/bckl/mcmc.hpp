#pragma once

#include "bckl/distributions.hpp"
#include "bckl/global_sampler.hpp"
#include "bckl/kernels.hpp"
#include "bckl/linalg.hpp"
#include "bckl/local_sampler.hpp"
#include "bckl/model.hpp"
#include "bckl/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bckl {

inline constexpr Index kDefaultExactStoreLimit = 100'000'000;

struct McmcConfig {
    Index rank = 10;               // D
    Index local_components = 2;    // Q
    Index burn_in = 1000;          // K1
    Index samples = 500;           // K2
    std::uint64_t seed = 0;

    KernelSpec space_kernel;       // global factor kernels; families only
    KernelSpec time_kernel;
    Eigen::VectorXd space_coords;  // empty: 0..M-1
    Eigen::VectorXd time_coords;
    std::optional<Eigen::MatrixXd> space_precomputed;
    std::optional<Eigen::MatrixXd> time_precomputed;

    KernelFamily local_space_family = KernelFamily::SquaredExponential;
    KernelFamily local_time_family = KernelFamily::SquaredExponential;
    TaperSpec space_taper{TaperFamily::Bohman, 10.0};
    TaperSpec time_taper{TaperFamily::Bohman, 10.0};
    K3Mode k3_mode = K3Mode::Full;

    HyperPriors priors;
    PcgOptions pcg;
    double jitter = kDefaultJitter;
    double tau_imag = 1e-6;
    int max_shrink = kDefaultMaxShrink;

    bool interval_includes_noise = true;
    double level = 0.95;
    Index exact_store_limit = kDefaultExactStoreLimit;
    /// Fraction of sweeps allowed to end with a failed PCG solve before the run aborts.
    double max_solver_failure_fraction = 0.01;

    /// Keep length-scales, Lambda_w and K3 at their initial values.
    bool freeze_hyperparameters = false;
    /// Hold tau fixed instead of sampling it.
    std::optional<double> fixed_tau;
    /// Starting tau; default 1 / var(y_Omega).
    std::optional<double> initial_tau;

    /// Throws ConfigError on invalid settings.
    void validate() const;
    [[nodiscard]] GlobalSamplerOptions global_options() const;
    [[nodiscard]] LocalSamplerOptions local_options() const;
};

/// Hyperparameters and solver statistics of one sweep (length-scales on the log scale).
struct SweepRecord {
    Index iteration = 0;
    double tau = 0.0;
    Eigen::VectorXd log_phi;
    Eigen::VectorXd log_delta;
    Eigen::VectorXd log_theta1;
    Eigen::VectorXd log_theta2;
    Eigen::VectorXd tau_q;  // diagonal K3 mode; empty otherwise
    int pcg_iterations = 0;
    bool pcg_converged = true;
};

/// One elementary update, for instrumented runs: step is one of phi, delta, u, v, w,
/// lambda_w, theta1, theta2, k3, prior_draw, correct, assemble, tau, collect.
struct SweepEvent {
    Index iteration = 0;
    std::string step;
    Index index = -1;  // d or q where applicable
};

/// Per-entry summary of the retained reconstructions.
struct PosteriorSummary {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double level = 0.95;
};

/// Streaming reduction of retained samples: running moments plus either the exact sample
/// store or, per entry, bounded heaps of the extreme values (P-square for very long runs).
class PosteriorSamples {
public:
    PosteriorSamples();
    PosteriorSamples(Dims dims, Index expected_samples, double level, bool includes_noise,
                     Index exact_store_limit = kDefaultExactStoreLimit);
    PosteriorSamples(PosteriorSamples&&) noexcept;
    PosteriorSamples& operator=(PosteriorSamples&&) noexcept;
    ~PosteriorSamples();

    /// Adds one retained reconstruction; `noisy` (clean plus observation noise) feeds the
    /// spread and quantiles when the samples include noise.
    void add(const Eigen::VectorXd& clean, const Eigen::VectorXd* noisy = nullptr);

    [[nodiscard]] const Dims& dims() const { return dims_; }
    [[nodiscard]] Index count() const { return count_; }
    [[nodiscard]] bool exact() const { return exact_; }
    [[nodiscard]] bool includes_noise() const { return includes_noise_; }
    [[nodiscard]] double level() const { return level_; }
    [[nodiscard]] Eigen::VectorXd mean() const;
    /// Population (denominator n) standard deviation of the spread samples.
    [[nodiscard]] Eigen::VectorXd std() const;
    /// Central interval at `level`; the sketch only supports the construction-time level.
    void interval(double level, Eigen::VectorXd& lower, Eigen::VectorXd& upper) const;
    /// Bytes held by the reduction (moments plus quantile storage).
    [[nodiscard]] std::size_t memory_bytes() const;

    /// Stored values of entry i (exact mode).
    [[nodiscard]] std::vector<double> entry_values(Index i) const;

    /// Binary round trip of the reduction ("BCKS" file). Sketch state is saved as its
    /// current quantile estimates.
    void save(const std::string& path) const;
    static PosteriorSamples load(const std::string& path);

private:
    struct Sketch;
    Dims dims_;
    Index count_ = 0;
    double level_ = 0.95;
    bool includes_noise_ = true;
    bool exact_ = true;
    Eigen::VectorXd sum_;
    Eigen::VectorXd spread_sum_;
    Eigen::VectorXd spread_sumsq_;
    std::vector<double> store_;  // exact mode: count x size, sample-major
    std::unique_ptr<Sketch> sketch_;
    // Frozen quantiles of a loaded sketch.
    Eigen::VectorXd frozen_lower_;
    Eigen::VectorXd frozen_upper_;
};

[[nodiscard]] PosteriorSummary summarize(const PosteriorSamples& samples, double level = 0.95);

/// tau ~ Gamma(a0 + |Omega| / 2, b0 + ||residual||^2 / 2) for the residual on Omega.
[[nodiscard]] double sample_tau(const Eigen::VectorXd& residual_omega, double a0, double b0, Rng& rng);

struct McmcObserver {
    std::function<void(const SweepEvent&)> on_event;
    std::function<void(const SweepRecord&)> on_sweep;
    std::function<void(const std::string&)> on_warning;
};

struct McmcResult {
    PosteriorSamples samples;
    std::vector<SweepRecord> trace;
    GlobalState global;
    std::vector<LocalComponent> local;
    double tau = 0.0;
    Index solver_failures = 0;
};

/// Runs burn_in + samples Gibbs sweeps on the observed entries of `data`.
[[nodiscard]] McmcResult run_mcmc(const SpatioTensor& data, const McmcConfig& cfg,
                                  const McmcObserver* observer = nullptr);

}  // namespace bckl
