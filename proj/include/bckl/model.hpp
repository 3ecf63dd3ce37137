#pragma once

#include "bckl/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

namespace bckl {

/// Hyper-prior parameters shared by the global and local samplers.
///
/// Length-scales carry log-normal priors: log(l) ~ N(mu, 1 / tau). The noise precision has
/// a Gamma(a0, b0) prior (shape/rate), Lambda_w ~ Wishart(psi0, nu0) and the full
/// variable covariance K3 ~ InvWishart(psi0^{-1}, nu0). psi0 defaults to I_P and nu0 to P.
struct HyperPriors {
    double mu_phi = std::log(10.0);
    double tau_phi = 1.0;
    double mu_delta = std::log(10.0);
    double tau_delta = 1.0;
    double mu_theta = 0.0;
    double tau_theta = 1.0;
    double a0 = 1e-6;
    double b0 = 1e-6;
    std::optional<Eigen::MatrixXd> psi0;
    std::optional<double> nu0;

    [[nodiscard]] Eigen::MatrixXd psi0_or_identity(Index p) const;
    [[nodiscard]] double nu0_or_default(Index p) const;
};

enum class K3Mode { Full, Diagonal };

/// Decoded coordinates of the observed entries, in increasing linear-index order.
struct OmegaIndex {
    Dims dims;
    std::vector<Index> linear;
    std::vector<Index> m;
    std::vector<Index> t;
    std::vector<Index> p;

    OmegaIndex() = default;
    explicit OmegaIndex(const SpatioTensor& data);
    OmegaIndex(const Dims& dims, const std::vector<std::uint8_t>& mask);

    [[nodiscard]] Index size() const { return static_cast<Index>(linear.size()); }
};

}  // namespace bckl
