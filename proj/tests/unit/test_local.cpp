#include "bckl/error.hpp"
#include "bckl/local_sampler.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace bckl;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LocalSamplerOptions local_opts(double range, K3Mode mode = K3Mode::Full) {
    LocalSamplerOptions o;
    o.space_taper = {TaperFamily::Bohman, range};
    o.time_taper = {TaperFamily::Wendland, range};
    o.k3_mode = mode;
    o.pcg = {1e-12, 500};
    return o;
}

std::vector<std::uint8_t> random_mask(Index n, double p_obs, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::bernoulli_distribution b(p_obs);
    std::vector<std::uint8_t> m(static_cast<std::size_t>(n));
    for (auto& v : m) v = b(gen) ? 1 : 0;
    return m;
}

std::vector<LocalComponent> two_components(const LocalSampler& ls, Rng& rng) {
    auto comps = ls.initial_state(2, rng);
    comps[0].log_theta1 = std::log(1.5);
    comps[0].log_theta2 = std::log(0.8);
    comps[1].log_theta1 = std::log(0.5);
    comps[1].log_theta2 = std::log(2.0);
    const Index p = ls.dims().p;
    MatrixXd b(p, p);
    for (Index i = 0; i < p * p; ++i) b(i) = rng.uniform(-1.0, 1.0);
    comps[0].k3 = b * b.transpose() + 0.5 * MatrixXd::Identity(p, p);
    comps[1].k3 = 0.7 * MatrixXd::Identity(p, p);
    comps[1].tau_q = 2.0;
    for (auto& c : comps) {
        ls.refresh_space(c);
        ls.refresh_time(c);
        ls.refresh_variable(c);
    }
    return comps;
}

}  // namespace

TEST_CASE("prior draws have the Kronecker covariance") {
    const Dims dims{3, 2, 2};
    for (K3Mode mode : {K3Mode::Full, K3Mode::Diagonal}) {
        const LocalSampler ls(dims, local_opts(3.0, mode));
        Rng rng(4);
        auto comps = two_components(ls, rng);
        const MatrixXd k = ls.dense_covariance(comps[0]);
        const MatrixXd k3 = mode == K3Mode::Full ? comps[0].k3 : MatrixXd(MatrixXd::Identity(2, 2) / comps[0].tau_q);
        CHECK((k - oracle::kron3(k3, MatrixXd(comps[0].k2), MatrixXd(comps[0].k1))).norm() < 1e-14);
        oracle::Moments m;
        for (int i = 0; i < 20000; ++i) m.add(ls.draw_prior(comps[0], rng));
        const MatrixXd cse = m.covariance_se();
        const VectorXd se = m.mean_se();
        for (Index i = 0; i < 12; ++i) {
            CHECK(std::abs(m.mean()[i]) < 4.0 * se[i]);
            for (Index j = 0; j < 12; ++j) CHECK(std::abs(m.covariance()(i, j) - k(i, j)) < 4.0 * cse(i, j) + 1e-12);
        }
    }
}

TEST_CASE("corrected draws follow the exact joint conditional of the components") {
    const Dims dims{3, 2, 2};
    const LocalSampler ls(dims, local_opts(3.0));
    // 180 simultaneous 3-SE comparisons; the seed is fixed so the check is reproducible.
    Rng rng(1);
    auto comps = two_components(ls, rng);
    const double tau = 4.0;
    const std::vector<std::uint8_t> mask = random_mask(12, 0.6, 7);
    const OmegaIndex omega(dims, mask);
    REQUIRE(omega.size() > 0);
    const VectorXd y = rng.normal_vector(12) * 1.5;

    const MatrixXd o = oracle::selection(mask);
    const MatrixXd k0 = oracle::kron3(comps[0].k3, MatrixXd(comps[0].k2), MatrixXd(comps[0].k1));
    const MatrixXd k1 = oracle::kron3(comps[1].k3, MatrixXd(comps[1].k2), MatrixXd(comps[1].k1));
    const MatrixXd s = o * (k0 + k1) * o.transpose() + MatrixXd::Identity(o.rows(), o.rows()) / tau;
    const Eigen::LDLT<MatrixXd> sl(s);
    const VectorXd yo = o * y;

    oracle::Moments m0, m1;
    for (int i = 0; i < 20000; ++i) {
        const CorrectionResult r = ls.conditional_correct(comps, y, omega, tau, rng);
        REQUIRE(r.converged);
        m0.add(comps[0].r);
        m1.add(comps[1].r);
    }
    int checked = 0;
    double worst_z = 0.0;
    for (int q = 0; q < 2; ++q) {
        const MatrixXd& k = q == 0 ? k0 : k1;
        const oracle::Moments& m = q == 0 ? m0 : m1;
        const VectorXd mean = k * o.transpose() * sl.solve(yo);
        const MatrixXd cov = k - k * o.transpose() * sl.solve(o * k);
        const VectorXd se = m.mean_se();
        const MatrixXd cse = m.covariance_se();
        const VectorXd mm = m.mean();
        const MatrixXd mc = m.covariance();
        for (Index i = 0; i < 12; ++i) {
            CHECK(std::abs(mm[i] - mean[i]) <= 3.0 * se[i]);
            worst_z = std::max(worst_z, std::abs(mm[i] - mean[i]) / se[i]);
            ++checked;
            for (Index j = 0; j <= i; ++j) {
                CHECK(std::abs(mc(i, j) - cov(i, j)) <= 3.0 * cse(i, j) + 1e-12);
                worst_z = std::max(worst_z, std::abs(mc(i, j) - cov(i, j)) / (cse(i, j) + 1e-300));
                ++checked;
            }
        }
    }
    MESSAGE("moment comparisons: " << checked << ", largest |z| " << worst_z);
}

TEST_CASE("with nothing observed the correction returns the prior draws") {
    const Dims dims{3, 2, 2};
    const LocalSampler ls(dims, local_opts(3.0));
    Rng rng(1);
    auto comps = two_components(ls, rng);
    const OmegaIndex omega(dims, std::vector<std::uint8_t>(12, 0));
    const std::vector<VectorXd> tilde{ls.draw_prior(comps[0], rng), ls.draw_prior(comps[1], rng)};
    const CorrectionResult r = ls.correct(comps, tilde, rng.normal_vector(12), omega, 4.0, rng);
    CHECK(r.converged);
    CHECK((comps[0].r - tilde[0]).norm() == 0.0);
    CHECK((comps[1].r - tilde[1]).norm() == 0.0);
}

TEST_CASE("the imaginary-observation precision barely moves the correction") {
    const Dims dims{4, 3, 2};
    const std::vector<std::uint8_t> mask = random_mask(dims.size(), 0.5, 3);
    const OmegaIndex omega(dims, mask);
    std::vector<VectorXd> results;
    for (double tau_i : {1e-6, 1e-9}) {
        LocalSamplerOptions o = local_opts(3.0);
        o.tau_imag = tau_i;
        const LocalSampler ls(dims, o);
        Rng rng(10);
        auto comps = two_components(ls, rng);
        const VectorXd y = rng.normal_vector(dims.size());
        REQUIRE(ls.conditional_correct(comps, y, omega, 4.0, rng).converged);
        results.push_back(comps[0].r + comps[1].r);
    }
    CHECK((results[0] - results[1]).norm() <= 1e-4 * results[1].norm());
}

TEST_CASE("large noise precision makes the local component interpolate the residual") {
    const Dims dims{4, 3, 1};
    const LocalSampler ls(dims, local_opts(3.0));
    Rng rng(6);
    auto comps = ls.initial_state(1, rng);
    const std::vector<std::uint8_t> mask = random_mask(dims.size(), 0.7, 1);
    const OmegaIndex omega(dims, mask);
    const VectorXd y = rng.normal_vector(dims.size());
    REQUIRE(ls.conditional_correct(comps, y, omega, 1e8, rng).converged);
    double worst = 0.0;
    for (Index i : omega.linear) worst = std::max(worst, std::abs(comps[0].r[i] - y[i]));
    CHECK(worst < 1e-2);
}

TEST_CASE("residual assembly excludes only the component being updated") {
    const Dims dims{3, 2, 2};
    const LocalSampler ls(dims, local_opts(3.0));
    Rng rng(3);
    auto comps = ls.initial_state(3, rng);
    const std::vector<std::uint8_t> mask = random_mask(12, 0.5, 9);
    const OmegaIndex omega(dims, mask);
    const VectorXd y = rng.normal_vector(12);
    const VectorXd res = ls.component_residual(comps, 1, y, omega);
    const VectorXd expect = oracle::selection(mask) * (y - comps[0].r - comps[2].r);
    CHECK((res - expect).norm() < 1e-14);
}

TEST_CASE("whitened length-scale moves keep the whitened draw fixed") {
    const Dims dims{6, 5, 2};
    for (K3Mode mode : {K3Mode::Full, K3Mode::Diagonal}) {
        const LocalSampler ls(dims, local_opts(4.0, mode));
        Rng rng(8);
        auto comps = two_components(ls, rng);
        LocalComponent& c = comps[0];
        c.r = ls.draw_prior(c, rng);
        const VectorXd g0 = kron_factor_solve(c.a1, c.a2, ls.a3_factor(c), c.r);
        CHECK((kron_factor_apply(c.a1, c.a2, ls.a3_factor(c), g0) - c.r).norm() < 1e-10 * c.r.norm());
        const std::vector<std::uint8_t> mask = random_mask(dims.size(), 0.6, 4);
        const OmegaIndex omega(dims, mask);
        const VectorXd res = rng.normal_vector(omega.size());
        int moved = 0;
        for (int it = 0; it < 20; ++it) {
            const double before = c.log_theta1 + c.log_theta2;
            ls.update_lengthscale(c, 1 + it % 2, res, omega, 2.0, rng);
            if (c.log_theta1 + c.log_theta2 != before) ++moved;
            // The caches follow the accepted length-scales.
            CHECK((MatrixXd(c.k1) - MatrixXd(ls.space_covariance(c.log_theta1))).norm() == 0.0);
            CHECK((MatrixXd(c.k2) - MatrixXd(ls.time_covariance(c.log_theta2))).norm() == 0.0);
            const VectorXd g = kron_factor_solve(c.a1, c.a2, ls.a3_factor(c), c.r);
            CHECK((g - g0).norm() < 1e-8 * g0.norm());
        }
        CHECK(moved > 0);
        CHECK_THROWS_AS(ls.update_lengthscale(c, 3, res, omega, 2.0, rng), ParameterError);
    }
}

TEST_CASE("whitened log-target is the Gaussian fit plus the log-normal prior") {
    const Dims dims{4, 3, 1};
    const LocalSampler ls(dims, local_opts(3.0));
    Rng rng(12);
    auto comps = ls.initial_state(1, rng);
    const LocalComponent& c = comps[0];
    const std::vector<std::uint8_t> mask = random_mask(dims.size(), 0.6, 2);
    const OmegaIndex omega(dims, mask);
    const VectorXd g = rng.normal_vector(dims.size());
    const VectorXd res = rng.normal_vector(omega.size());
    const double x = 0.3;
    const MatrixXd a1 = sparse_cholesky(ls.space_covariance(x)).dense_factor();
    const MatrixXd a = oracle::kron3(MatrixXd::Identity(1, 1), c.a2.dense_factor(), a1);
    const VectorXd r = oracle::selection(mask) * (a * g);
    const HyperPriors& hp = ls.options().priors;
    const double expect = -0.5 * 3.0 * (res - r).squaredNorm() + normal_logpdf(x, hp.mu_theta, hp.tau_theta);
    CHECK(ls.lengthscale_logtarget(c, 1, x, g, res, omega, 3.0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("K3 conditional matches the dense restricted quadratic form") {
    const Dims dims{2, 2, 3};
    LocalSamplerOptions o = local_opts(3.0);
    Eigen::Matrix3d psi0;
    psi0 << 2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 1.5;
    o.priors.psi0 = MatrixXd(psi0);
    o.priors.nu0 = 4.0;
    const LocalSampler ls(dims, o);
    Rng rng(5);
    auto comps = ls.initial_state(1, rng);
    LocalComponent& c = comps[0];
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::vector<std::uint8_t> mask = random_mask(dims.size(), 0.4, seed);
        const OmegaIndex omega(dims, mask);
        std::vector<Index> cells;
        for (Index j = 0; j < 4; ++j) {
            for (Index p = 0; p < 3; ++p) {
                if (mask[static_cast<std::size_t>(j + 4 * p)]) {
                    cells.push_back(j);
                    break;
                }
            }
        }
        const MatrixXd kfull = oracle::kron(MatrixXd(c.k2), MatrixXd(c.k1));
        const auto n_om = static_cast<Index>(cells.size());
        MatrixXd kom(n_om, n_om), rom(3, n_om);
        for (Index a = 0; a < n_om; ++a) {
            for (Index b = 0; b < n_om; ++b) kom(a, b) = kfull(cells[a], cells[b]);
            for (Index p = 0; p < 3; ++p) rom(p, a) = c.r[cells[a] + 4 * p];
        }
        MatrixXd expect = psi0.inverse();
        if (n_om > 0) expect += rom * kom.inverse() * rom.transpose();
        const WishartPosterior post = ls.k3_posterior(c, omega);
        CHECK((post.scale - expect).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + expect.cwiseAbs().maxCoeff()));
        CHECK(post.dof == 4.0 + static_cast<double>(n_om));
    }
    // A zero component leaves the prior scale.
    c.r.setZero();
    const OmegaIndex all(dims, std::vector<std::uint8_t>(12, 1));
    const WishartPosterior post = ls.k3_posterior(c, all);
    CHECK((post.scale - MatrixXd(psi0.inverse())).norm() < 1e-12);
    CHECK(post.dof == 8.0);
}

TEST_CASE("local covariances have compact support") {
    const Dims dims{30, 20, 1};
    const LocalSampler ls(dims, local_opts(4.0));
    const SparseSym k1 = ls.space_covariance(std::log(3.0));
    for (int col = 0; col < k1.outerSize(); ++col) {
        for (SparseSym::InnerIterator it(k1, col); it; ++it) CHECK(std::abs(it.row() - col) < 4);
    }
    CHECK(k1.nonZeros() == 30 + 2 * (29 + 28 + 27));
}

TEST_CASE("full and diagonal K3 modes agree when there is one variable") {
    // With P = 1 both updates target the same posterior of the component scale.
    const Dims dims{5, 4, 1};
    const std::vector<std::uint8_t> mask = random_mask(dims.size(), 0.7, 21);
    const OmegaIndex omega(dims, mask);
    Rng data_rng(77);
    const VectorXd y = 0.8 * data_rng.normal_vector(dims.size());
    const double tau = 10.0;
    std::vector<double> means;
    std::vector<double> ses;
    for (K3Mode mode : {K3Mode::Full, K3Mode::Diagonal}) {
        LocalSamplerOptions o = local_opts(3.0, mode);
        o.priors.nu0 = 3.0;
        const LocalSampler ls(dims, o);
        Rng rng(mode == K3Mode::Full ? 101 : 202);
        auto comps = ls.initial_state(1, rng);
        const int burn = 500, n = 8000, batch = 200;
        std::vector<double> batch_means;
        double acc = 0.0;
        for (int it = 0; it < burn + n; ++it) {
            const VectorXd res = ls.component_residual(comps, 0, y, omega);
            ls.sample_variable_covariance(comps[0], res, omega, tau, rng);
            REQUIRE(ls.conditional_correct(comps, y, omega, tau, rng).converged);
            if (it < burn) continue;
            // log of the component variance
            acc += mode == K3Mode::Full ? std::log(comps[0].k3(0, 0)) : -std::log(comps[0].tau_q);
            if ((it - burn + 1) % batch == 0) {
                batch_means.push_back(acc / batch);
                acc = 0.0;
            }
        }
        double mean = 0.0;
        for (double b : batch_means) mean += b;
        mean /= static_cast<double>(batch_means.size());
        double var = 0.0;
        for (double b : batch_means) var += (b - mean) * (b - mean);
        var /= static_cast<double>(batch_means.size() - 1);
        means.push_back(mean);
        ses.push_back(std::sqrt(var / static_cast<double>(batch_means.size())));
    }
    MESSAGE("log variance: full " << means[0] << " +- " << ses[0] << ", diagonal " << means[1] << " +- " << ses[1]);
    CHECK(std::abs(means[0] - means[1]) < 4.0 * std::hypot(ses[0], ses[1]));
}

TEST_CASE("local sampler rejects invalid settings") {
    CHECK_THROWS_AS(LocalSampler(Dims{2, 2, 17}, local_opts(3.0)), ConfigError);
    CHECK_NOTHROW(LocalSampler(Dims{2, 2, 17}, local_opts(3.0, K3Mode::Diagonal)));
    CHECK_THROWS_AS(LocalSampler(Dims{2, 2, 1}, local_opts(0.0)), ConfigError);
    LocalSamplerOptions o = local_opts(3.0);
    o.space_family = KernelFamily::White;
    CHECK_THROWS_AS(LocalSampler(Dims{2, 2, 1}, o), ConfigError);
    o = local_opts(3.0);
    o.tau_imag = 0.0;
    CHECK_THROWS_AS(LocalSampler(Dims{2, 2, 1}, o), ConfigError);
}
