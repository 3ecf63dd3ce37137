#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace bckl {

/// Seedable generator state. One owner at a time; parallel consumers get their own
/// substream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);
    /// Independent stream derived from (seed, name); the same pair always yields the same stream.
    static Rng substream(std::uint64_t seed, std::string_view name);

    double uniform();                          // U[0, 1)
    double uniform(double lo, double hi);      // U[lo, hi)
    double normal();                           // N(0, 1)
    Eigen::VectorXd normal_vector(Eigen::Index n);
    /// Gamma with shape a and rate b (mean a / b).
    double gamma(double shape, double rate);
    std::uint64_t next_u64() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Draw from N(Lambda^{-1} eta, Lambda^{-1}) using the Cholesky factor of the precision.
[[nodiscard]] Eigen::VectorXd sample_mvn_precision(const Eigen::VectorXd& eta, const Eigen::MatrixXd& precision,
                                                   Rng& rng);

/// Gamma(shape, rate) with parameter validation.
[[nodiscard]] double sample_gamma(double shape, double rate, Rng& rng);

/// Wishart(scale, dof) by the Bartlett decomposition; mean dof * scale. dof > order - 1.
[[nodiscard]] Eigen::MatrixXd sample_wishart(const Eigen::MatrixXd& scale, double dof, Rng& rng);

/// (Inverse-)Wishart parameters.
struct WishartPosterior {
    Eigen::MatrixXd scale;
    double dof = 0.0;
};

/// Inverse-Wishart(scale, dof): the inverse of a Wishart(scale^{-1}, dof) draw.
/// Mean scale / (dof - order - 1).
[[nodiscard]] Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double dof, Rng& rng);

struct SliceResult {
    double value = 0.0;
    int evaluations = 0;
    bool accepted = true;  // false when max_shrink was exhausted and x0 is returned
};

inline constexpr int kDefaultMaxShrink = 100;

/// One-dimensional slice sampling with a randomly placed bracket of width `scale` and
/// shrinkage toward x0.
///
/// gamma ~ U(0, scale) places the bracket [x0 - gamma, x0 - gamma + scale]; a single
/// eta ~ U(0, 1) sets the slice level. Proposals are uniform in the bracket; one is accepted
/// when f(x') / f(x0) > eta, otherwise the bracket end on the proposal's side of x0 moves to
/// the proposal. Non-finite log-densities count as rejections.
[[nodiscard]] SliceResult slice_sample_1d(const std::function<double(double)>& log_density, double x0, double scale,
                                          Rng& rng, int max_shrink = kDefaultMaxShrink);

/// Same as above with the log-density at x0 already known.
[[nodiscard]] SliceResult slice_sample_1d(const std::function<double(double)>& log_density, double x0,
                                          double log_density_x0, double scale, Rng& rng,
                                          int max_shrink = kDefaultMaxShrink);

/// log N(x | mean, 1 / precision).
[[nodiscard]] double normal_logpdf(double x, double mean, double precision);

}  // namespace bckl
