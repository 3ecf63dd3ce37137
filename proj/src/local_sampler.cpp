#include "bckl/local_sampler.hpp"

#include "bckl/error.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace bckl {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

double omega_sse(const Eigen::VectorXd& residual_omega, const Eigen::VectorXd& r, const OmegaIndex& omega) {
    double s = 0.0;
    for (std::size_t k = 0; k < omega.linear.size(); ++k) {
        const double e = residual_omega[static_cast<Index>(k)] - r[omega.linear[k]];
        s += e * e;
    }
    return s;
}

}  // namespace

LocalSampler::LocalSampler(Dims dims, LocalSamplerOptions opts) : dims_(dims), opts_(std::move(opts)) {
    if (opts_.space_coords.size() == 0) opts_.space_coords = default_coords(dims_.m);
    if (opts_.time_coords.size() == 0) opts_.time_coords = default_coords(dims_.t);
    if (opts_.space_coords.size() != dims_.m || opts_.time_coords.size() != dims_.t) {
        throw DimensionError("local coordinates must have length M (space) and T (time)");
    }
    for (KernelFamily f : {opts_.space_family, opts_.time_family}) {
        if (f != KernelFamily::SquaredExponential && f != KernelFamily::Matern32) {
            throw ConfigError("local kernels must be 'se' or 'matern32'");
        }
    }
    if (!(opts_.space_taper.range > 0.0) || !(opts_.time_taper.range > 0.0)) {
        throw ConfigError("taper ranges must be positive");
    }
    if (!(opts_.tau_imag > 0.0)) throw ConfigError("tau_imag must be positive");
    if (opts_.k3_mode == K3Mode::Full && dims_.p > kMaxFullP) {
        throw ConfigError("full K3 mode requires P <= 16; use the diagonal mode");
    }
}

SparseSym LocalSampler::space_covariance(double log_theta) const {
    const KernelSpec spec{opts_.space_family, std::exp(log_theta), 1.0};
    return build_tapered_covariance(as_span(opts_.space_coords), spec, opts_.space_taper, opts_.jitter);
}

SparseSym LocalSampler::time_covariance(double log_theta) const {
    const KernelSpec spec{opts_.time_family, std::exp(log_theta), 1.0};
    return build_tapered_covariance(as_span(opts_.time_coords), spec, opts_.time_taper, opts_.jitter);
}

void LocalSampler::refresh_space(LocalComponent& c) const {
    c.k1 = space_covariance(c.log_theta1);
    c.a1 = sparse_cholesky(c.k1);
}

void LocalSampler::refresh_time(LocalComponent& c) const {
    c.k2 = time_covariance(c.log_theta2);
    c.a2 = sparse_cholesky(c.k2);
}

void LocalSampler::refresh_variable(LocalComponent& c) const {
    if (opts_.k3_mode == K3Mode::Full) c.a3 = dense_cholesky(c.k3);
}

std::vector<LocalComponent> LocalSampler::initial_state(Index q, Rng& rng) const {
    std::vector<LocalComponent> comps(static_cast<std::size_t>(q));
    for (auto& c : comps) {
        c.r = rng.normal_vector(dims_.size());
        c.k3 = Eigen::MatrixXd::Identity(dims_.p, dims_.p);
        c.tau_q = 1.0;
        refresh_space(c);
        refresh_time(c);
        refresh_variable(c);
    }
    return comps;
}

MatrixLike LocalSampler::k3_operand(const LocalComponent& c) const {
    if (opts_.k3_mode == K3Mode::Diagonal) return Diagonal{Eigen::VectorXd::Constant(dims_.p, 1.0 / c.tau_q)};
    return c.k3;
}

FactorLike LocalSampler::a3_factor(const LocalComponent& c) const {
    if (opts_.k3_mode == K3Mode::Diagonal) return ScaledIdentity{dims_.p, 1.0 / std::sqrt(c.tau_q)};
    return c.a3;
}

Eigen::VectorXd LocalSampler::covariance_apply(const LocalComponent& c, const Eigen::VectorXd& x) const {
    return kron_matvec(c.k1, c.k2, k3_operand(c), x);
}

Eigen::MatrixXd LocalSampler::dense_covariance(const LocalComponent& c) const {
    const Eigen::MatrixXd k1 = Eigen::MatrixXd(c.k1);
    const Eigen::MatrixXd k2 = Eigen::MatrixXd(c.k2);
    const Eigen::MatrixXd k3 = opts_.k3_mode == K3Mode::Diagonal
                                   ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(dims_.p, dims_.p) / c.tau_q)
                                   : c.k3;
    const Index n = dims_.size();
    Eigen::MatrixXd k(n, n);
    for (Index j = 0; j < n; ++j) {
        const Index mj = j % dims_.m, tj = (j / dims_.m) % dims_.t, pj = j / (dims_.m * dims_.t);
        for (Index i = 0; i < n; ++i) {
            const Index mi = i % dims_.m, ti = (i / dims_.m) % dims_.t, pi = i / (dims_.m * dims_.t);
            k(i, j) = k1(mi, mj) * k2(ti, tj) * k3(pi, pj);
        }
    }
    return k;
}

Eigen::VectorXd LocalSampler::draw_prior(const LocalComponent& c, Rng& rng) const {
    if (c.a1.size() != dims_.m || c.a2.size() != dims_.t) throw Error("local component caches are stale");
    return kron_factor_apply(c.a1, c.a2, a3_factor(c), rng.normal_vector(dims_.size()));
}

Eigen::VectorXd LocalSampler::preconditioner(const OmegaIndex& omega, double tau) const {
    Eigen::VectorXd inv_sqrt = Eigen::VectorXd::Constant(dims_.size(), std::sqrt(opts_.tau_imag));
    const double s = std::sqrt(tau);
    for (Index i : omega.linear) inv_sqrt[i] = s;
    return inv_sqrt;
}

CorrectionResult LocalSampler::correct(std::vector<LocalComponent>& comps, const std::vector<Eigen::VectorXd>& r_tilde,
                                       const Eigen::VectorXd& y_minus_x, const OmegaIndex& omega, double tau,
                                       Rng& rng) const {
    CorrectionResult out;
    if (comps.empty()) return out;
    if (r_tilde.size() != comps.size()) throw DimensionError("one prior draw per local component is required");
    const Index n = dims_.size();
    if (y_minus_x.size() != n) throw DimensionError("residual length must equal M*T*P");

    // y~ = sum_q r~_q + z with z ~ N(0, 1/tau) on the full grid.
    Eigen::VectorXd y_tilde = rng.normal_vector(n) / std::sqrt(tau);
    for (const auto& r : r_tilde) y_tilde += r;
    Eigen::VectorXd y_prime = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd e_prime = Eigen::VectorXd::Constant(n, 1.0 / opts_.tau_imag);
    for (Index i : omega.linear) {
        y_prime[i] = y_tilde[i] - y_minus_x[i];
        e_prime[i] = 1.0 / tau;
    }

    std::vector<MatrixLike> k3s;
    k3s.reserve(comps.size());
    for (const auto& c : comps) k3s.push_back(k3_operand(c));
    const auto apply = [&](const Eigen::VectorXd& s) {
        Eigen::VectorXd v = e_prime.cwiseProduct(s);
        for (std::size_t q = 0; q < comps.size(); ++q) v += kron_matvec(comps[q].k1, comps[q].k2, k3s[q], s);
        return v;
    };
    const PcgResult sol = pcg_solve(apply, y_prime, preconditioner(omega, tau), opts_.pcg);
    out.converged = sol.converged;
    out.pcg_iterations = sol.iterations;
    out.relative_residual = sol.relative_residual;
    if (!sol.converged) return out;
    for (std::size_t q = 0; q < comps.size(); ++q) {
        comps[q].r = r_tilde[q] - kron_matvec(comps[q].k1, comps[q].k2, k3s[q], sol.x);
    }
    return out;
}

CorrectionResult LocalSampler::conditional_correct(std::vector<LocalComponent>& comps,
                                                   const Eigen::VectorXd& y_minus_x, const OmegaIndex& omega,
                                                   double tau, Rng& rng) const {
    std::vector<Eigen::VectorXd> r_tilde;
    r_tilde.reserve(comps.size());
    for (const auto& c : comps) r_tilde.push_back(draw_prior(c, rng));
    return correct(comps, r_tilde, y_minus_x, omega, tau, rng);
}

Eigen::VectorXd LocalSampler::component_residual(const std::vector<LocalComponent>& comps, std::size_t q,
                                                 const Eigen::VectorXd& y_minus_x, const OmegaIndex& omega) const {
    Eigen::VectorXd res(omega.size());
    for (std::size_t k = 0; k < omega.linear.size(); ++k) {
        const Index i = omega.linear[k];
        double v = y_minus_x[i];
        for (std::size_t l = 0; l < comps.size(); ++l) {
            if (l != q) v -= comps[l].r[i];
        }
        res[static_cast<Index>(k)] = v;
    }
    return res;
}

double LocalSampler::lengthscale_logtarget(const LocalComponent& c, int dim, double log_theta,
                                           const Eigen::VectorXd& whitened, const Eigen::VectorXd& residual_omega,
                                           const OmegaIndex& omega, double tau) const {
    if (!std::isfinite(log_theta)) return -std::numeric_limits<double>::infinity();
    const double log_prior = normal_logpdf(log_theta, opts_.priors.mu_theta, opts_.priors.tau_theta);
    try {
        const SparseChol a = sparse_cholesky(dim == 1 ? space_covariance(log_theta) : time_covariance(log_theta));
        const Eigen::VectorXd r = dim == 1 ? kron_factor_apply(a, c.a2, a3_factor(c), whitened)
                                           : kron_factor_apply(c.a1, a, a3_factor(c), whitened);
        return -0.5 * tau * omega_sse(residual_omega, r, omega) + log_prior;
    } catch (const FactorizationError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

void LocalSampler::update_lengthscale(LocalComponent& c, int dim, const Eigen::VectorXd& residual_omega,
                                      const OmegaIndex& omega, double tau, Rng& rng) const {
    if (dim != 1 && dim != 2) throw ParameterError("local length-scale dimension must be 1 or 2");
    const FactorLike a3 = a3_factor(c);
    const Eigen::VectorXd g = kron_factor_solve(c.a1, c.a2, a3, c.r);

    // The accepted proposal is always the last one evaluated; keep its factor and r.
    struct Last {
        double x = 0.0;
        SparseSym k;
        SparseChol a;
        Eigen::VectorXd r;
    };
    std::optional<Last> last;
    const auto target = [&](double x) {
        if (!std::isfinite(x)) return -std::numeric_limits<double>::infinity();
        try {
            Last l;
            l.x = x;
            l.k = dim == 1 ? space_covariance(x) : time_covariance(x);
            l.a = sparse_cholesky(l.k);
            l.r = dim == 1 ? kron_factor_apply(l.a, c.a2, a3, g) : kron_factor_apply(c.a1, l.a, a3, g);
            const double v = -0.5 * tau * omega_sse(residual_omega, l.r, omega) +
                             normal_logpdf(x, opts_.priors.mu_theta, opts_.priors.tau_theta);
            last = std::move(l);
            return v;
        } catch (const FactorizationError&) {
            last.reset();
            return -std::numeric_limits<double>::infinity();
        }
    };
    double& current = dim == 1 ? c.log_theta1 : c.log_theta2;
    const double f0 = -0.5 * tau * omega_sse(residual_omega, c.r, omega) +
                      normal_logpdf(current, opts_.priors.mu_theta, opts_.priors.tau_theta);
    const SliceResult res = slice_sample_1d(target, current, f0, opts_.slice_scale, rng, opts_.max_shrink);
    if (!res.accepted || res.value == current) return;
    if (!last || last->x != res.value) {
        target(res.value);
        if (!last) return;
    }
    current = res.value;
    if (dim == 1) {
        c.k1 = std::move(last->k);
        c.a1 = std::move(last->a);
    } else {
        c.k2 = std::move(last->k);
        c.a2 = std::move(last->a);
    }
    c.r = std::move(last->r);
}

double LocalSampler::log_tau_q_prior(double x) const {
    const Index p = dims_.p;
    const Eigen::MatrixXd psi0 = opts_.priors.psi0_or_identity(p);
    const double psi = psi0.llt().solve(Eigen::MatrixXd::Identity(p, p)).trace() / static_cast<double>(p);
    const double nu0 = opts_.priors.nu0_or_default(p);
    return 0.5 * nu0 * x - 0.5 * psi * std::exp(x);
}

WishartPosterior LocalSampler::k3_posterior(const LocalComponent& c, const OmegaIndex& omega) const {
    const Index mt = dims_.m * dims_.t;
    const Index p = dims_.p;
    // omega: (m, t) positions observed for at least one variable.
    std::vector<Index> pos(static_cast<std::size_t>(mt), -1);
    for (Index i : omega.linear) pos[static_cast<std::size_t>(i % mt)] = 0;
    std::vector<Index> cells;
    for (Index j = 0; j < mt; ++j) {
        if (pos[static_cast<std::size_t>(j)] < 0) continue;
        pos[static_cast<std::size_t>(j)] = static_cast<Index>(cells.size());
        cells.push_back(j);
    }
    const auto n_omega = static_cast<Index>(cells.size());
    const Eigen::MatrixXd psi0 = opts_.priors.psi0_or_identity(p);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
    Eigen::MatrixXd scale = psi0.llt().solve(eye);
    if (n_omega > 0) {
        Eigen::MatrixXd r_omega(n_omega, p);  // R_omega^T
        for (Index j = 0; j < n_omega; ++j) {
            for (Index pp = 0; pp < p; ++pp) r_omega(j, pp) = c.r[cells[static_cast<std::size_t>(j)] + mt * pp];
        }
        std::vector<Eigen::Triplet<double>> trip;
        for (Index j = 0; j < n_omega; ++j) {
            const Index cell = cells[static_cast<std::size_t>(j)];
            const Index m = cell % dims_.m, t = cell / dims_.m;
            for (SparseSym::InnerIterator i2(c.k2, t); i2; ++i2) {
                for (SparseSym::InnerIterator i1(c.k1, m); i1; ++i1) {
                    const Index other = pos[static_cast<std::size_t>(i1.row() + dims_.m * i2.row())];
                    if (other >= 0) trip.emplace_back(other, j, i1.value() * i2.value());
                }
            }
        }
        SparseSym k_omega(n_omega, n_omega);
        k_omega.setFromTriplets(trip.begin(), trip.end());
        const SparseChol chol = sparse_cholesky(k_omega);
        scale += r_omega.transpose() * chol.solve(r_omega);
    }
    scale = 0.5 * (scale + scale.transpose());
    return {scale, opts_.priors.nu0_or_default(p) + static_cast<double>(n_omega)};
}

void LocalSampler::sample_variable_covariance(LocalComponent& c, const Eigen::VectorXd& residual_omega,
                                              const OmegaIndex& omega, double tau, Rng& rng) const {
    if (opts_.k3_mode == K3Mode::Full) {
        const WishartPosterior post = k3_posterior(c, omega);
        c.k3 = sample_inverse_wishart(post.scale, post.dof, rng);
        refresh_variable(c);
        return;
    }
    // r = r0 * exp((x0 - x) / 2) keeps the whitened draw fixed; the fit term is a quadratic in that scale.
    double a = 0.0, b = 0.0, cc = 0.0;
    for (std::size_t k = 0; k < omega.linear.size(); ++k) {
        const double y = residual_omega[static_cast<Index>(k)];
        const double r = c.r[omega.linear[k]];
        a += y * y;
        b += y * r;
        cc += r * r;
    }
    const double x0 = std::log(c.tau_q);
    const auto target = [&](double x) {
        if (!std::isfinite(x)) return -std::numeric_limits<double>::infinity();
        const double s = std::exp(0.5 * (x0 - x));
        return -0.5 * tau * (a - 2.0 * s * b + s * s * cc) + log_tau_q_prior(x);
    };
    const SliceResult res = slice_sample_1d(target, x0, opts_.slice_scale, rng, opts_.max_shrink);
    if (res.value == x0) return;
    c.r *= std::exp(0.5 * (x0 - res.value));
    c.tau_q = std::exp(res.value);
}

}  // namespace bckl
