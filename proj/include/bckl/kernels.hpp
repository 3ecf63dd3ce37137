#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <optional>
#include <span>
#include <string>

namespace bckl {

enum class KernelFamily {
    SquaredExponential,
    Matern32,
    Precomputed,  // user-supplied covariance matrix
    White,        // identity covariance; reproduces the BPTF baseline
};

struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    double lengthscale = 1.0;
    double variance = 1.0;
};

enum class TaperFamily { Bohman, Wendland };

struct TaperSpec {
    TaperFamily family = TaperFamily::Bohman;
    double range = 1.0;
};

/// Symmetric sparse matrix with both triangles stored.
using SparseSym = Eigen::SparseMatrix<double>;

inline constexpr double kDefaultJitter = 1e-6;

[[nodiscard]] KernelFamily parse_kernel_family(const std::string& name);
[[nodiscard]] std::string to_string(KernelFamily f);
[[nodiscard]] TaperFamily parse_taper_family(const std::string& name);
[[nodiscard]] std::string to_string(TaperFamily f);

/// Stationary kernel value at distance h. Throws ParameterError for a nonpositive
/// length-scale or variance; not defined for the precomputed family.
[[nodiscard]] double kernel_eval(const KernelSpec& spec, double h);

/// Compactly supported correlation; exactly 0 for delta >= range.
[[nodiscard]] double taper_eval(const TaperSpec& spec, double delta);

/// Dense prior covariance of a factor column over 1-D coordinates, plus jitter on the
/// diagonal. For the precomputed family `precomputed` must be a symmetric n x n matrix.
[[nodiscard]] Eigen::MatrixXd build_factor_covariance(std::span<const double> coords, const KernelSpec& spec,
                                                      double jitter = kDefaultJitter,
                                                      const Eigen::MatrixXd* precomputed = nullptr);

/// Sparse covariance k(h) * taper(h) over 1-D coordinates. Pairs with distance >= range are
/// structurally absent, so the sparsity pattern depends only on coordinates and range.
[[nodiscard]] SparseSym build_tapered_covariance(std::span<const double> coords, const KernelSpec& base,
                                                 const TaperSpec& taper, double jitter = 0.0);

/// 0, 1, ..., n-1.
[[nodiscard]] Eigen::VectorXd default_coords(Eigen::Index n);

}  // namespace bckl
