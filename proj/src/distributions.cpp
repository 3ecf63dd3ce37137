#include "bckl/distributions.hpp"

#include "bckl/error.hpp"
#include "bckl/linalg.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace bckl {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
}

Rng Rng::substream(std::uint64_t seed, std::string_view name) {
    Rng r;
    const std::uint64_t h = fnv1a(name);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    r.engine_.seed(seq);
    return r;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() { return normal_(engine_); }

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
}

double Rng::gamma(double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(engine_);
}

Eigen::VectorXd sample_mvn_precision(const Eigen::VectorXd& eta, const Eigen::MatrixXd& precision, Rng& rng) {
    if (precision.rows() != eta.size() || precision.cols() != eta.size()) {
        throw DimensionError("sample_mvn_precision: precision size does not match eta");
    }
    const Eigen::MatrixXd l = dense_cholesky(precision);
    // mean = L^{-T} L^{-1} eta; noise = L^{-T} z has covariance (L L^T)^{-1}.
    Eigen::VectorXd x = l.triangularView<Eigen::Lower>().solve(eta);
    x += rng.normal_vector(eta.size());
    l.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

double sample_gamma(double shape, double rate, Rng& rng) {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
        throw ParameterError("Gamma shape and rate must be positive and finite");
    }
    double g = rng.gamma(shape, rate);
    // Extremely small shapes can underflow to zero.
    if (!(g > 0.0)) g = std::numeric_limits<double>::min();
    return g;
}

Eigen::MatrixXd sample_wishart(const Eigen::MatrixXd& scale, double dof, Rng& rng) {
    const Eigen::Index p = scale.rows();
    if (scale.cols() != p) throw DimensionError("Wishart scale must be square");
    if (!(dof > static_cast<double>(p) - 1.0)) throw ParameterError("Wishart degrees of freedom must exceed order - 1");
    const Eigen::MatrixXd l = dense_cholesky(0.5 * (scale + scale.transpose()));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        // chi-square with dof - i degrees of freedom.
        a(i, i) = std::sqrt(2.0 * sample_gamma(0.5 * (dof - static_cast<double>(i)), 1.0, rng));
        for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd la = l * a;
    Eigen::MatrixXd w = la * la.transpose();
    return 0.5 * (w + w.transpose());
}

Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double dof, Rng& rng) {
    const Eigen::Index p = scale.rows();
    const Eigen::MatrixXd sym = 0.5 * (scale + scale.transpose());
    const Eigen::MatrixXd scale_inv = sym.llt().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd w = sample_wishart(scale_inv, dof, rng);
    Eigen::MatrixXd out = w.llt().solve(Eigen::MatrixXd::Identity(p, p));
    return 0.5 * (out + out.transpose());
}

SliceResult slice_sample_1d(const std::function<double(double)>& log_density, double x0, double scale, Rng& rng,
                            int max_shrink) {
    const double f0 = log_density(x0);
    if (!std::isfinite(f0)) throw ParameterError("slice_sample_1d: log-density is not finite at the current point");
    SliceResult r = slice_sample_1d(log_density, x0, f0, scale, rng, max_shrink);
    ++r.evaluations;
    return r;
}

SliceResult slice_sample_1d(const std::function<double(double)>& log_density, double x0, double log_density_x0,
                            double scale, Rng& rng, int max_shrink) {
    if (!(scale > 0.0)) throw ParameterError("slice sampling scale must be positive");
    const double gamma = rng.uniform(0.0, scale);
    double lo = x0 - gamma;
    double hi = lo + scale;
    const double log_eta = std::log(rng.uniform());
    SliceResult r;
    for (int k = 0; k < max_shrink; ++k) {
        const double proposal = rng.uniform(lo, hi);
        const double f = log_density(proposal);
        ++r.evaluations;
        if (std::isfinite(f) && f - log_density_x0 > log_eta) {
            r.value = proposal;
            return r;
        }
        if (proposal < x0) {
            lo = proposal;
        } else {
            hi = proposal;
        }
    }
    r.value = x0;
    r.accepted = false;
    return r;
}

double normal_logpdf(double x, double mean, double precision) {
    const double d = x - mean;
    return 0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * d * d;
}

}  // namespace bckl
