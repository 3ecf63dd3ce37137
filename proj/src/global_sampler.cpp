#include "bckl/global_sampler.hpp"

#include "bckl/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace bckl {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

GlobalSampler::GlobalSampler(Dims dims, GlobalSamplerOptions opts) : dims_(dims), opts_(std::move(opts)) {
    if (opts_.space_coords.size() == 0) opts_.space_coords = default_coords(dims_.m);
    if (opts_.time_coords.size() == 0) opts_.time_coords = default_coords(dims_.t);
    if (opts_.space_coords.size() != dims_.m || opts_.time_coords.size() != dims_.t) {
        throw DimensionError("factor coordinates must have length M (space) and T (time)");
    }
    if (opts_.space_kernel.family == KernelFamily::Precomputed && !opts_.space_precomputed) {
        throw ConfigError("space factor kernel is 'precomputed' but no matrix was supplied");
    }
    if (opts_.time_kernel.family == KernelFamily::Precomputed && !opts_.time_precomputed) {
        throw ConfigError("time factor kernel is 'precomputed' but no matrix was supplied");
    }
}

bool GlobalSampler::samples_lengthscale(FactorMode mode) const {
    if (mode == FactorMode::W) return false;
    const KernelFamily f = mode == FactorMode::U ? opts_.space_kernel.family : opts_.time_kernel.family;
    return f == KernelFamily::SquaredExponential || f == KernelFamily::Matern32;
}

Eigen::MatrixXd GlobalSampler::covariance(FactorMode mode, double log_lengthscale) const {
    if (mode == FactorMode::W) throw ParameterError("w_d has a Wishart-precision prior, not a kernel");
    const bool space = mode == FactorMode::U;
    KernelSpec spec = space ? opts_.space_kernel : opts_.time_kernel;
    spec.lengthscale = std::exp(log_lengthscale);
    spec.variance = 1.0;
    const auto& pre = space ? opts_.space_precomputed : opts_.time_precomputed;
    return build_factor_covariance(as_span(space ? opts_.space_coords : opts_.time_coords), spec, opts_.jitter,
                                   pre ? &*pre : nullptr);
}

void GlobalSampler::refresh_cache(GlobalState& s, FactorMode mode, Index d) const {
    const auto k = static_cast<std::size_t>(d);
    if (mode == FactorMode::U) {
        s.ku[k] = covariance(mode, s.log_phi[d]);
        s.ku_chol[k] = dense_cholesky(s.ku[k]);
    } else if (mode == FactorMode::V) {
        s.kv[k] = covariance(mode, s.log_delta[d]);
        s.kv_chol[k] = dense_cholesky(s.kv[k]);
    }
}

GlobalState GlobalSampler::initial_state(Index rank, Rng& rng) const {
    GlobalState s;
    s.factors.u.resize(dims_.m, rank);
    s.factors.v.resize(dims_.t, rank);
    s.factors.w.resize(dims_.p, rank);
    for (Index d = 0; d < rank; ++d) s.factors.u.col(d) = rng.normal_vector(dims_.m);
    for (Index d = 0; d < rank; ++d) s.factors.v.col(d) = rng.normal_vector(dims_.t);
    for (Index d = 0; d < rank; ++d) s.factors.w.col(d) = rng.normal_vector(dims_.p);
    s.log_phi = Eigen::VectorXd::Zero(rank);
    s.log_delta = Eigen::VectorXd::Zero(rank);
    s.lambda_w = Eigen::MatrixXd::Identity(dims_.p, dims_.p);
    s.ku.resize(static_cast<std::size_t>(rank));
    s.ku_chol.resize(static_cast<std::size_t>(rank));
    s.kv.resize(static_cast<std::size_t>(rank));
    s.kv_chol.resize(static_cast<std::size_t>(rank));
    for (Index d = 0; d < rank; ++d) {
        refresh_cache(s, FactorMode::U, d);
        refresh_cache(s, FactorMode::V, d);
    }
    return s;
}

FactorConditional GlobalSampler::conditional(FactorMode mode, Index d, const GlobalState& s,
                                             const Eigen::VectorXd& residual, const OmegaIndex& omega) const {
    if (residual.size() != dims_.size()) throw DimensionError("residual length must equal M*T*P");
    const auto u = s.factors.u.col(d);
    const auto v = s.factors.v.col(d);
    const auto w = s.factors.w.col(d);
    const Index n_small = mode == FactorMode::U ? dims_.m : (mode == FactorMode::V ? dims_.t : dims_.p);
    FactorConditional c;
    c.gram = Eigen::VectorXd::Zero(n_small);
    c.linear = Eigen::VectorXd::Zero(n_small);
    c.n_obs = omega.size();
    for (std::size_t k = 0; k < omega.linear.size(); ++k) {
        const double y = residual[omega.linear[k]];
        double coef = 0.0;
        Index col = 0;
        switch (mode) {
            case FactorMode::U:
                coef = v[omega.t[k]] * w[omega.p[k]];
                col = omega.m[k];
                break;
            case FactorMode::V:
                coef = u[omega.m[k]] * w[omega.p[k]];
                col = omega.t[k];
                break;
            case FactorMode::W:
                coef = u[omega.m[k]] * v[omega.t[k]];
                col = omega.p[k];
                break;
        }
        c.gram[col] += coef * coef;
        c.linear[col] += coef * y;
        c.yty += y * y;
    }
    return c;
}

FactorPosterior GlobalSampler::posterior(FactorMode mode, Index d, const GlobalState& s,
                                         const Eigen::VectorXd& residual, const OmegaIndex& omega,
                                         double tau) const {
    const FactorConditional c = conditional(mode, d, s, residual, omega);
    FactorPosterior post;
    Eigen::MatrixXd prior_precision;
    if (mode == FactorMode::W) {
        prior_precision = s.lambda_w;
    } else {
        const Eigen::MatrixXd& k = mode == FactorMode::U ? s.ku[static_cast<std::size_t>(d)]
                                                         : s.kv[static_cast<std::size_t>(d)];
        prior_precision = k.llt().solve(Eigen::MatrixXd::Identity(k.rows(), k.cols()));
    }
    post.precision = prior_precision;
    post.precision.diagonal() += tau * c.gram;
    post.mean = post.precision.llt().solve(tau * c.linear);
    return post;
}

void GlobalSampler::sample_factor(FactorMode mode, Index d, GlobalState& s, const Eigen::VectorXd& residual,
                                  const OmegaIndex& omega, double tau, Rng& rng) const {
    const FactorConditional c = conditional(mode, d, s, residual, omega);
    if (mode == FactorMode::W) {
        Eigen::MatrixXd precision = s.lambda_w;
        precision.diagonal() += tau * c.gram;
        s.factors.w.col(d) = sample_mvn_precision(tau * c.linear, precision, rng);
        return;
    }
    // Covariance form: (K^{-1} + tau G)^{-1} = L B^{-1} L^T with B = I + tau L^T G L.
    const Eigen::MatrixXd& l = mode == FactorMode::U ? s.ku_chol[static_cast<std::size_t>(d)]
                                                     : s.kv_chol[static_cast<std::size_t>(d)];
    const WoodburyFactor f = woodbury_factor(l, c.gram, tau);
    Eigen::VectorXd draw = woodbury_inner_solve(f, tau * c.linear);
    Eigen::VectorXd z = rng.normal_vector(l.rows());
    f.b_chol.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
    draw.noalias() += l * z;
    if (mode == FactorMode::U) {
        s.factors.u.col(d) = draw;
    } else {
        s.factors.v.col(d) = draw;
    }
}

double GlobalSampler::lengthscale_logmarginal(FactorMode mode, double log_lengthscale, const FactorConditional& c,
                                              double tau) const {
    if (mode == FactorMode::W) throw ParameterError("w_d has no length-scale");
    const double mu = mode == FactorMode::U ? opts_.priors.mu_phi : opts_.priors.mu_delta;
    const double prec = mode == FactorMode::U ? opts_.priors.tau_phi : opts_.priors.tau_delta;
    const double log_prior = normal_logpdf(log_lengthscale, mu, prec);
    if (!std::isfinite(log_lengthscale)) return -std::numeric_limits<double>::infinity();
    if (c.n_obs == 0) return log_prior;
    try {
        const Eigen::MatrixXd l = dense_cholesky(covariance(mode, log_lengthscale));
        const WoodburyFactor f = woodbury_factor(l, c.gram, tau);
        const double quad = tau * c.yty - tau * tau * c.linear.dot(woodbury_inner_solve(f, c.linear));
        const double n = static_cast<double>(c.n_obs);
        const double logdet = f.logdet_b - n * std::log(tau);
        return -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi) + log_prior;
    } catch (const FactorizationError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

double GlobalSampler::lengthscale_logmarginal(FactorMode mode, Index d, double log_lengthscale, const GlobalState& s,
                                              const Eigen::VectorXd& residual, const OmegaIndex& omega,
                                              double tau) const {
    return lengthscale_logmarginal(mode, log_lengthscale, conditional(mode, d, s, residual, omega), tau);
}

void GlobalSampler::update_lengthscale(FactorMode mode, Index d, GlobalState& s, const Eigen::VectorXd& residual,
                                       const OmegaIndex& omega, double tau, Rng& rng) const {
    if (!samples_lengthscale(mode)) return;
    const FactorConditional c = conditional(mode, d, s, residual, omega);
    double& current = mode == FactorMode::U ? s.log_phi[d] : s.log_delta[d];
    const auto target = [&](double x) { return lengthscale_logmarginal(mode, x, c, tau); };
    const SliceResult r = slice_sample_1d(target, current, opts_.slice_scale, rng, opts_.max_shrink);
    if (r.value != current) {
        current = r.value;
        refresh_cache(s, mode, d);
    }
}

void GlobalSampler::update_lengthscales(Index d, GlobalState& s, const Eigen::VectorXd& residual,
                                        const OmegaIndex& omega, double tau, Rng& rng) const {
    update_lengthscale(FactorMode::U, d, s, residual, omega, tau, rng);
    update_lengthscale(FactorMode::V, d, s, residual, omega, tau, rng);
}

Eigen::MatrixXd GlobalSampler::sample_lambda_w(const Eigen::MatrixXd& w, Rng& rng) const {
    return bckl::sample_lambda_w(w, opts_.priors.psi0_or_identity(dims_.p), opts_.priors.nu0_or_default(dims_.p), rng);
}

WishartPosterior lambda_w_posterior(const Eigen::MatrixXd& w, const Eigen::MatrixXd& psi0, double nu0) {
    const Index p = psi0.rows();
    if (w.rows() != p) throw DimensionError("W must have P rows");
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
    Eigen::MatrixXd scale_inv = w * w.transpose() + psi0.llt().solve(eye);
    scale_inv = 0.5 * (scale_inv + scale_inv.transpose());
    Eigen::MatrixXd scale = scale_inv.llt().solve(eye);
    return {0.5 * (scale + scale.transpose()), nu0 + static_cast<double>(w.cols())};
}

Eigen::MatrixXd sample_lambda_w(const Eigen::MatrixXd& w, const Eigen::MatrixXd& psi0, double nu0, Rng& rng) {
    const WishartPosterior post = lambda_w_posterior(w, psi0, nu0);
    return sample_wishart(post.scale, post.dof, rng);
}

}  // namespace bckl
