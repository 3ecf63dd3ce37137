#include "bckl/kernels.hpp"

#include "bckl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace bckl {

KernelFamily parse_kernel_family(const std::string& name) {
    if (name == "se" || name == "squared_exponential") return KernelFamily::SquaredExponential;
    if (name == "matern32" || name == "matern-3/2") return KernelFamily::Matern32;
    if (name == "precomputed") return KernelFamily::Precomputed;
    if (name == "white") return KernelFamily::White;
    throw ParameterError("unknown kernel family '" + name + "'");
}

std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::SquaredExponential: return "se";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::Precomputed: return "precomputed";
        case KernelFamily::White: return "white";
    }
    return "?";
}

TaperFamily parse_taper_family(const std::string& name) {
    if (name == "bohman") return TaperFamily::Bohman;
    if (name == "wendland") return TaperFamily::Wendland;
    throw ParameterError("unknown taper family '" + name + "'");
}

std::string to_string(TaperFamily f) { return f == TaperFamily::Bohman ? "bohman" : "wendland"; }

double kernel_eval(const KernelSpec& spec, double h) {
    if (!(spec.variance > 0.0)) throw ParameterError("kernel variance must be positive");
    switch (spec.family) {
        case KernelFamily::SquaredExponential: {
            if (!(spec.lengthscale > 0.0)) throw ParameterError("kernel length-scale must be positive");
            const double r = h / spec.lengthscale;
            return spec.variance * std::exp(-0.5 * r * r);
        }
        case KernelFamily::Matern32: {
            if (!(spec.lengthscale > 0.0)) throw ParameterError("kernel length-scale must be positive");
            const double r = std::numbers::sqrt3 * h / spec.lengthscale;
            return spec.variance * (1.0 + r) * std::exp(-r);
        }
        case KernelFamily::White:
            return h == 0.0 ? spec.variance : 0.0;
        case KernelFamily::Precomputed:
            break;
    }
    throw ParameterError("kernel_eval is not defined for precomputed covariances");
}

double taper_eval(const TaperSpec& spec, double delta) {
    if (!(spec.range > 0.0)) throw ParameterError("taper range must be positive");
    const double x = delta / spec.range;
    if (x >= 1.0) return 0.0;
    switch (spec.family) {
        case TaperFamily::Bohman: {
            const double px = std::numbers::pi * x;
            return (1.0 - x) * std::cos(px) + std::sin(px) / std::numbers::pi;
        }
        case TaperFamily::Wendland: {
            const double a = 1.0 - x;
            return a * a * a * a * (1.0 + 4.0 * x);
        }
    }
    return 0.0;
}

Eigen::MatrixXd build_factor_covariance(std::span<const double> coords, const KernelSpec& spec, double jitter,
                                        const Eigen::MatrixXd* precomputed) {
    const auto n = static_cast<Eigen::Index>(coords.size());
    Eigen::MatrixXd k(n, n);
    switch (spec.family) {
        case KernelFamily::Precomputed: {
            if (precomputed == nullptr) throw ParameterError("precomputed kernel requires a covariance matrix");
            if (precomputed->rows() != n || precomputed->cols() != n) {
                throw DimensionError("precomputed covariance must be " + std::to_string(n) + "x" + std::to_string(n));
            }
            const double scale = std::max(1.0, precomputed->cwiseAbs().maxCoeff());
            if ((*precomputed - precomputed->transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
                throw DataError("precomputed covariance is not symmetric");
            }
            k = 0.5 * (*precomputed + precomputed->transpose());
            break;
        }
        case KernelFamily::White:
            k.setIdentity();
            break;
        default:
            for (Eigen::Index j = 0; j < n; ++j) {
                k(j, j) = kernel_eval(spec, 0.0);
                for (Eigen::Index i = j + 1; i < n; ++i) {
                    k(i, j) = k(j, i) = kernel_eval(spec, std::abs(coords[static_cast<std::size_t>(i)] -
                                                                  coords[static_cast<std::size_t>(j)]));
                }
            }
    }
    k.diagonal().array() += jitter;
    return k;
}

SparseSym build_tapered_covariance(std::span<const double> coords, const KernelSpec& base, const TaperSpec& taper,
                                   double jitter) {
    if (!(taper.range > 0.0)) throw ParameterError("taper range must be positive");
    const auto n = static_cast<Eigen::Index>(coords.size());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return coords[static_cast<std::size_t>(a)] < coords[static_cast<std::size_t>(b)];
    });

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n) * 4);
    const double diag = kernel_eval(base, 0.0) + jitter;
    for (Eigen::Index a = 0; a < n; ++a) {
        const Eigen::Index i = order[static_cast<std::size_t>(a)];
        const double ci = coords[static_cast<std::size_t>(i)];
        trips.emplace_back(i, i, diag);
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const Eigen::Index j = order[static_cast<std::size_t>(b)];
            const double h = coords[static_cast<std::size_t>(j)] - ci;
            if (h >= taper.range) break;
            const double value = kernel_eval(base, h) * taper_eval(taper, h);
            trips.emplace_back(i, j, value);
            trips.emplace_back(j, i, value);
        }
    }
    SparseSym k(n, n);
    k.setFromTriplets(trips.begin(), trips.end());
    k.makeCompressed();
    return k;
}

Eigen::VectorXd default_coords(Eigen::Index n) { return Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1)); }

}  // namespace bckl
