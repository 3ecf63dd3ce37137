#pragma once

#include "bckl/distributions.hpp"
#include "bckl/kernels.hpp"
#include "bckl/linalg.hpp"
#include "bckl/model.hpp"
#include "bckl/tensor.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace bckl {

enum class FactorMode { U, V, W };

/// Global (low-rank) component: CP factors, their kernel length-scales and Lambda_w,
/// plus cached unit-variance covariances K_u^d, K_v^d and their Cholesky factors.
struct GlobalState {
    CPFactors factors;
    Eigen::VectorXd log_phi;    // per-column log length-scale of u_d
    Eigen::VectorXd log_delta;  // per-column log length-scale of v_d
    Eigen::MatrixXd lambda_w;   // P x P precision of the w_d prior
    std::vector<Eigen::MatrixXd> ku;
    std::vector<Eigen::MatrixXd> ku_chol;
    std::vector<Eigen::MatrixXd> kv;
    std::vector<Eigen::MatrixXd> kv_chol;
};

/// Sufficient statistics of a factor conditional: with H = O_k((b ⊗ a) ⊗ I),
/// gram = diag(H^T H) and linear = H^T (y_d)_Omega.
struct FactorConditional {
    Eigen::VectorXd gram;
    Eigen::VectorXd linear;
    double yty = 0.0;
    Index n_obs = 0;
};

/// Gaussian conditional N(mean, precision^{-1}) of one factor column.
struct FactorPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd precision;
};

struct GlobalSamplerOptions {
    KernelSpec space_kernel;  // family only; length-scale is sampled
    KernelSpec time_kernel;
    Eigen::VectorXd space_coords;
    Eigen::VectorXd time_coords;
    std::optional<Eigen::MatrixXd> space_precomputed;
    std::optional<Eigen::MatrixXd> time_precomputed;
    HyperPriors priors;
    double jitter = kDefaultJitter;
    double slice_scale = std::log(10.0);
    int max_shrink = kDefaultMaxShrink;
};

/// Gibbs and slice updates of the global component.
class GlobalSampler {
public:
    GlobalSampler(Dims dims, GlobalSamplerOptions opts);

    [[nodiscard]] const GlobalSamplerOptions& options() const { return opts_; }
    [[nodiscard]] const Dims& dims() const { return dims_; }

    /// Factors from N(0, 1), length-scales 1, Lambda_w = I; caches built.
    [[nodiscard]] GlobalState initial_state(Index rank, Rng& rng) const;

    /// Whether length-scales of this mode are sampled (false for precomputed/white kernels).
    [[nodiscard]] bool samples_lengthscale(FactorMode mode) const;
    /// Unit-variance factor covariance at a log length-scale.
    [[nodiscard]] Eigen::MatrixXd covariance(FactorMode mode, double log_lengthscale) const;
    /// Recomputes K and its Cholesky factor for column d of mode U or V.
    void refresh_cache(GlobalState& s, FactorMode mode, Index d) const;

    /// Gathers H^T H and H^T y for column d from the residual y_d = Y - R - sum_{h != d} x_h
    /// (full vector, only Omega is read).
    [[nodiscard]] FactorConditional conditional(FactorMode mode, Index d, const GlobalState& s,
                                                const Eigen::VectorXd& residual, const OmegaIndex& omega) const;
    /// Explicit (mean, precision) of the column conditional; uses K^{-1} so it is meant for
    /// diagnostics and tests, not for the sampler path.
    [[nodiscard]] FactorPosterior posterior(FactorMode mode, Index d, const GlobalState& s,
                                            const Eigen::VectorXd& residual, const OmegaIndex& omega,
                                            double tau) const;

    /// Draws column d of the given mode from its Gaussian conditional.
    void sample_factor(FactorMode mode, Index d, GlobalState& s, const Eigen::VectorXd& residual,
                       const OmegaIndex& omega, double tau, Rng& rng) const;

    /// log N((y_d)_Omega | 0, H K H^T + tau^{-1} I) + log prior, for a proposed log length-scale.
    /// Returns -inf when the covariance cannot be factorized.
    [[nodiscard]] double lengthscale_logmarginal(FactorMode mode, Index d, double log_lengthscale,
                                                 const GlobalState& s, const Eigen::VectorXd& residual,
                                                 const OmegaIndex& omega, double tau) const;
    /// Same, with the O(|Omega|) statistics precomputed.
    [[nodiscard]] double lengthscale_logmarginal(FactorMode mode, double log_lengthscale,
                                                 const FactorConditional& stats, double tau) const;

    /// Slice-samples phi_d then delta_d; caches are refreshed on change.
    void update_lengthscales(Index d, GlobalState& s, const Eigen::VectorXd& residual, const OmegaIndex& omega,
                             double tau, Rng& rng) const;
    /// Slice-samples one length-scale (mode U: phi_d, mode V: delta_d).
    void update_lengthscale(FactorMode mode, Index d, GlobalState& s, const Eigen::VectorXd& residual,
                            const OmegaIndex& omega, double tau, Rng& rng) const;

    /// Lambda_w ~ Wishart(Psi*, nu0 + D), (Psi*)^{-1} = W W^T + Psi0^{-1}.
    [[nodiscard]] Eigen::MatrixXd sample_lambda_w(const Eigen::MatrixXd& w, Rng& rng) const;

private:
    Dims dims_;
    GlobalSamplerOptions opts_;
};

/// Lambda_w posterior parameters (scale Psi*, dof nu*).
[[nodiscard]] WishartPosterior lambda_w_posterior(const Eigen::MatrixXd& w, const Eigen::MatrixXd& psi0, double nu0);
[[nodiscard]] Eigen::MatrixXd sample_lambda_w(const Eigen::MatrixXd& w, const Eigen::MatrixXd& psi0, double nu0,
                                              Rng& rng);

}  // namespace bckl
