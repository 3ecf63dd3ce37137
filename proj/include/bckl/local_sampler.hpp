#pragma once

#include "bckl/distributions.hpp"
#include "bckl/kernels.hpp"
#include "bckl/linalg.hpp"
#include "bckl/model.hpp"
#include "bckl/tensor.hpp"

#include <Eigen/Dense>

#include <vector>

namespace bckl {

/// One short-scale component r_q ~ N(0, K3 ⊗ K2 ⊗ K1) with tapered K1, K2.
struct LocalComponent {
    Eigen::VectorXd r;
    double log_theta1 = 0.0;
    double log_theta2 = 0.0;
    Eigen::MatrixXd k3;  // full mode
    double tau_q = 1.0;  // diagonal mode: K3 = I / tau_q

    // Caches, rebuilt by LocalSampler::refresh_*.
    SparseSym k1;
    SparseSym k2;
    SparseChol a1;
    SparseChol a2;
    Eigen::MatrixXd a3;  // full mode lower Cholesky factor of k3
};

struct LocalSamplerOptions {
    KernelFamily space_family = KernelFamily::SquaredExponential;
    KernelFamily time_family = KernelFamily::SquaredExponential;
    Eigen::VectorXd space_coords;
    Eigen::VectorXd time_coords;
    TaperSpec space_taper;
    TaperSpec time_taper;
    HyperPriors priors;
    K3Mode k3_mode = K3Mode::Full;
    double jitter = kDefaultJitter;
    double tau_imag = 1e-6;
    PcgOptions pcg;
    double slice_scale = std::log(10.0);
    int max_shrink = kDefaultMaxShrink;
};

struct CorrectionResult {
    bool converged = true;
    int pcg_iterations = 0;
    double relative_residual = 0.0;
};

/// Updates of the local component: prior draws, the PCG-based conditional correction,
/// whitened length-scale moves and the variable covariance K3.
class LocalSampler {
public:
    static constexpr Index kMaxFullP = 16;

    LocalSampler(Dims dims, LocalSamplerOptions opts);

    [[nodiscard]] const LocalSamplerOptions& options() const { return opts_; }
    [[nodiscard]] const Dims& dims() const { return dims_; }

    /// r_q ~ N(0, 1) entrywise, length-scales 1, K3 = I (tau_q = 1).
    [[nodiscard]] std::vector<LocalComponent> initial_state(Index q, Rng& rng) const;

    [[nodiscard]] SparseSym space_covariance(double log_theta) const;
    [[nodiscard]] SparseSym time_covariance(double log_theta) const;
    void refresh_space(LocalComponent& c) const;
    void refresh_time(LocalComponent& c) const;
    void refresh_variable(LocalComponent& c) const;

    /// Kronecker operands of the component covariance.
    [[nodiscard]] MatrixLike k3_operand(const LocalComponent& c) const;
    [[nodiscard]] FactorLike a3_factor(const LocalComponent& c) const;
    /// (K3 ⊗ K2 ⊗ K1) x.
    [[nodiscard]] Eigen::VectorXd covariance_apply(const LocalComponent& c, const Eigen::VectorXd& x) const;
    /// Dense K3 ⊗ K2 ⊗ K1 (tests only).
    [[nodiscard]] Eigen::MatrixXd dense_covariance(const LocalComponent& c) const;

    /// r~ = (A3 ⊗ A2 ⊗ A1) z, a draw from the prior of the component.
    [[nodiscard]] Eigen::VectorXd draw_prior(const LocalComponent& c, Rng& rng) const;

    /// Given prior draws r~_q, replaces each r_q by a draw from its conditional given the
    /// residual y - X on Omega. One PCG solve is shared by all components. On PCG failure
    /// the components are left unchanged.
    CorrectionResult correct(std::vector<LocalComponent>& comps, const std::vector<Eigen::VectorXd>& r_tilde,
                             const Eigen::VectorXd& y_minus_x, const OmegaIndex& omega, double tau, Rng& rng) const;
    /// Prior draws for every component followed by correct().
    CorrectionResult conditional_correct(std::vector<LocalComponent>& comps, const Eigen::VectorXd& y_minus_x,
                                         const OmegaIndex& omega, double tau, Rng& rng) const;

    /// (y - X - sum_{l != q} r_l) on Omega.
    [[nodiscard]] Eigen::VectorXd component_residual(const std::vector<LocalComponent>& comps, std::size_t q,
                                                     const Eigen::VectorXd& y_minus_x, const OmegaIndex& omega) const;

    /// Whitened log-target of a local length-scale (dim 1: space, dim 2: time).
    /// -inf when the proposal cannot be factorized.
    [[nodiscard]] double lengthscale_logtarget(const LocalComponent& c, int dim, double log_theta,
                                               const Eigen::VectorXd& whitened,
                                               const Eigen::VectorXd& residual_omega, const OmegaIndex& omega,
                                               double tau) const;
    /// Slice-samples one length-scale with G = (A3 ⊗ A2 ⊗ A1)^{-1} r held fixed; r moves with it.
    void update_lengthscale(LocalComponent& c, int dim, const Eigen::VectorXd& residual_omega,
                            const OmegaIndex& omega, double tau, Rng& rng) const;

    /// Full mode: K3 ~ IW(Psi*, nu0 + N_omega). Diagonal mode: whitened slice move of log tau_q.
    void sample_variable_covariance(LocalComponent& c, const Eigen::VectorXd& residual_omega,
                                    const OmegaIndex& omega, double tau, Rng& rng) const;
    /// Parameters of the full-mode inverse-Wishart conditional.
    [[nodiscard]] WishartPosterior k3_posterior(const LocalComponent& c, const OmegaIndex& omega) const;
    /// log prior of x = log tau_q: Gamma(nu0 / 2, rate psi / 2) with psi = trace(Psi0^{-1}) / P.
    [[nodiscard]] double log_tau_q_prior(double x) const;

    /// Jacobi preconditioner E'^{-1/2}: sqrt(tau) on Omega, sqrt(tau_I) elsewhere.
    [[nodiscard]] Eigen::VectorXd preconditioner(const OmegaIndex& omega, double tau) const;

private:
    Dims dims_;
    LocalSamplerOptions opts_;
};

}  // namespace bckl
