#include "bckl/error.hpp"
#include "bckl/mcmc.hpp"
#include "bckl/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

using namespace bckl;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

McmcConfig small_config(Index d, Index q, Index burn, Index keep, std::uint64_t seed) {
    McmcConfig c;
    c.rank = d;
    c.local_components = q;
    c.burn_in = burn;
    c.samples = keep;
    c.seed = seed;
    c.space_taper = {TaperFamily::Bohman, 3.0};
    c.time_taper = {TaperFamily::Bohman, 3.0};
    return c;
}

SpatioTensor masked_noise(const Dims& d, double p_obs, std::uint64_t seed) {
    Rng rng(seed);
    VectorXd v = rng.normal_vector(d.size());
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(d.size()));
    for (auto& m : mask) m = rng.uniform() < p_obs ? 1 : 0;
    mask[0] = 1;
    return SpatioTensor(d, v, mask);
}

double log_mvn(const VectorXd& x, const MatrixXd& s) { return oracle::gaussian_logpdf(x, s); }

// Exact posterior moments of the (2,2,1) micro-model y = u v^T w + r + noise with fixed
// hyperparameters, by integrating (v, w) on a grid and u, r analytically.
struct MicroMoments {
    VectorXd y_mean = VectorXd::Zero(4);
    VectorXd y_sq = VectorXd::Zero(4);
    MatrixXd uu = MatrixXd::Zero(2, 2);
    MatrixXd vv = MatrixXd::Zero(2, 2);
    double ww = 0.0;
};

MicroMoments micro_oracle(const MatrixXd& ku, const MatrixXd& kv, double lambda_w, const MatrixXd& kr,
                          const std::vector<std::uint8_t>& mask, const VectorXd& y, double tau) {
    const MatrixXd o = oracle::selection(mask);
    const VectorXd yo = o * y;
    const Index no = o.rows();
    const int g = 81;
    const double half = 6.0;
    const double h = 2.0 * half / (g - 1);
    const Eigen::LLT<MatrixXd> kv_llt(kv);
    const MatrixXd kv_l = kv_llt.matrixL();
    const MatrixXd ku_inv = ku.inverse();
    MicroMoments acc;
    double wsum = 0.0;
    std::vector<double> logw;
    std::vector<MicroMoments> parts;
    double max_lw = -std::numeric_limits<double>::infinity();
    // Grid in whitened v coordinates: v = L_v a, with a on a square grid.
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            for (int k = 0; k < g; ++k) {
                const Eigen::Vector2d a(-half + h * i, -half + h * j);
                const VectorXd v = kv_l * a;
                const double w = (-half + h * k) / std::sqrt(lambda_w);
                MatrixXd amat = MatrixXd::Zero(4, 2);
                for (Index t = 0; t < 2; ++t) {
                    for (Index m = 0; m < 2; ++m) amat(m + 2 * t, m) = w * v[t];
                }
                const MatrixXd c = amat * ku * amat.transpose() + kr;
                const MatrixXd s = o * c * o.transpose() + MatrixXd::Identity(no, no) / tau;
                const double lw = -0.5 * a.squaredNorm() - 0.5 * lambda_w * w * w + log_mvn(yo, s);
                const Eigen::LDLT<MatrixXd> sl(s);
                const VectorXd mean = c * o.transpose() * sl.solve(yo);
                const MatrixXd var = c - c * o.transpose() * sl.solve(o * c);
                MicroMoments p;
                p.y_mean = mean;
                p.y_sq = var.diagonal() + mean.cwiseProduct(mean);
                const MatrixXd noise = o * kr * o.transpose() + MatrixXd::Identity(no, no) / tau;
                const MatrixXd hu = o * amat;
                const MatrixXd prec = ku_inv + hu.transpose() * noise.ldlt().solve(hu);
                const MatrixXd ucov = prec.inverse();
                const VectorXd umean = ucov * hu.transpose() * noise.ldlt().solve(yo);
                p.uu = ucov + umean * umean.transpose();
                p.vv = v * v.transpose();
                p.ww = w * w;
                logw.push_back(lw);
                parts.push_back(std::move(p));
                max_lw = std::max(max_lw, lw);
            }
        }
    }
    for (std::size_t n = 0; n < parts.size(); ++n) {
        const double wt = std::exp(logw[n] - max_lw);
        wsum += wt;
        acc.y_mean += wt * parts[n].y_mean;
        acc.y_sq += wt * parts[n].y_sq;
        acc.uu += wt * parts[n].uu;
        acc.vv += wt * parts[n].vv;
        acc.ww += wt * parts[n].ww;
    }
    acc.y_mean /= wsum;
    acc.y_sq /= wsum;
    acc.uu /= wsum;
    acc.vv /= wsum;
    acc.ww /= wsum;
    return acc;
}

// Batch-means standard error of a scalar chain.
double batch_se(const std::vector<double>& x, std::size_t batches = 50) {
    const std::size_t len = x.size() / batches;
    std::vector<double> means(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t i = 0; i < len; ++i) means[b] += x[b * len + i];
        means[b] /= static_cast<double>(len);
    }
    double m = 0.0;
    for (double v : means) m += v;
    m /= static_cast<double>(batches);
    double var = 0.0;
    for (double v : means) var += (v - m) * (v - m);
    return std::sqrt(var / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

double average(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("noise precision draws") {
    Rng rng(1);
    // Zero residual on 100 entries: Gamma(50 + 1e-6, 1e-6).
    double s = 0.0;
    for (int i = 0; i < 2000; ++i) s += sample_tau(VectorXd::Zero(100), 1e-6, 1e-6, rng);
    CHECK(s / 2000 == doctest::Approx(50.000001 / 1e-6).epsilon(0.02));
    // Unit residuals on 200 entries: mean (a0 + 100) / (b0 + 100) ~ 1.
    s = 0.0;
    for (int i = 0; i < 20000; ++i) s += sample_tau(VectorXd::Ones(200), 1e-6, 1e-6, rng);
    CHECK(s / 20000 == doctest::Approx(1.0).epsilon(0.005));
    // No data: the prior.
    s = 0.0;
    for (int i = 0; i < 20000; ++i) s += sample_tau(VectorXd(), 2.0, 4.0, rng);
    CHECK(s / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("summaries of retained samples") {
    PosteriorSamples two(Dims{1, 1, 1}, 2, 0.95, false);
    two.add(VectorXd::Constant(1, 0.0));
    two.add(VectorXd::Constant(1, 2.0));
    const PosteriorSummary s = summarize(two);
    CHECK(s.mean[0] == 1.0);
    CHECK(s.std[0] == 1.0);
    CHECK(s.lower[0] == doctest::Approx(0.05));
    CHECK(s.upper[0] == doctest::Approx(1.95));

    PosteriorSamples constant(Dims{2, 1, 1}, 5, 0.9, false);
    for (int i = 0; i < 5; ++i) constant.add(VectorXd::Constant(2, 3.5));
    const PosteriorSummary c = summarize(constant, 0.9);
    CHECK(c.std.maxCoeff() == 0.0);
    CHECK(c.lower == VectorXd::Constant(2, 3.5));
    CHECK(c.upper == VectorXd::Constant(2, 3.5));

    // With noise the spread comes from the noisy copies and the mean from the clean ones.
    PosteriorSamples noisy(Dims{1, 1, 1}, 2, 0.95, true);
    const VectorXd n0 = VectorXd::Constant(1, -1.0), n1 = VectorXd::Constant(1, 3.0);
    noisy.add(VectorXd::Constant(1, 0.0), &n0);
    noisy.add(VectorXd::Constant(1, 2.0), &n1);
    CHECK(noisy.mean()[0] == 1.0);
    CHECK(noisy.std()[0] == 2.0);
    CHECK_THROWS_AS(noisy.add(VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("quantile sketch stays within one rank of the exact quantiles") {
    const Index entries = 20;
    PosteriorSamples exact(Dims{entries, 1, 1}, 400, 0.95, false);
    PosteriorSamples sketch(Dims{entries, 1, 1}, 400, 0.95, false, 0);
    REQUIRE(exact.exact());
    REQUIRE_FALSE(sketch.exact());
    Rng rng(3);
    for (int k = 0; k < 400; ++k) {
        VectorXd x = rng.normal_vector(entries);
        for (Index i = 0; i < entries; ++i) x[i] = x[i] * (1.0 + static_cast<double>(i) * 0.1) + static_cast<double>(i);
        exact.add(x);
        sketch.add(x);
    }
    VectorXd el, eu, sl, su;
    exact.interval(0.95, el, eu);
    sketch.interval(0.95, sl, su);
    CHECK((exact.mean() - sketch.mean()).norm() == 0.0);
    for (Index i = 0; i < entries; ++i) {
        std::vector<double> v = exact.entry_values(i);
        std::sort(v.begin(), v.end());
        const auto rank_of = [&](double q) {
            return static_cast<double>(std::lower_bound(v.begin(), v.end(), q) - v.begin());
        };
        // Type-7 positions 0.025 * 399 and 0.975 * 399.
        CHECK(std::abs(rank_of(sl[i]) - 0.025 * 399.0) <= 1.0);
        CHECK(std::abs(rank_of(su[i]) - 0.975 * 399.0) <= 1.0);
        CHECK(sl[i] == doctest::Approx(el[i]).epsilon(1e-14));
        CHECK(su[i] == doctest::Approx(eu[i]).epsilon(1e-14));
        CHECK(sl[i] >= v[8]);
        CHECK(sl[i] <= v[11]);
        CHECK(su[i] >= v[388]);
        CHECK(su[i] <= v[391]);
    }
    CHECK_THROWS_AS(sketch.interval(0.9, sl, su), ParameterError);
}

TEST_CASE("sketch memory does not grow with the number of retained samples") {
    const Dims d{50, 40, 1};
    const auto per_entry = [&](const PosteriorSamples& s) {
        return static_cast<double>(s.memory_bytes()) / static_cast<double>(d.size());
    };
    Rng rng(1);
    // Tail heaps sized for the expected count, fixed once allocated.
    PosteriorSamples tails(d, 1000, 0.95, true, 0);
    const std::size_t before = tails.memory_bytes();
    for (int k = 0; k < 300; ++k) tails.add(rng.normal_vector(d.size()));
    CHECK(tails.memory_bytes() == before);
    CHECK(per_entry(tails) <= (3 + 2 * 64) * sizeof(double));
    // Past the tail cap the footprint no longer depends on the run length at all.
    PosteriorSamples a(d, 5000, 0.95, true, 0), b(d, 500000, 0.95, true, 0);
    for (int k = 0; k < 20; ++k) a.add(rng.normal_vector(d.size()));
    for (int k = 0; k < 200; ++k) b.add(rng.normal_vector(d.size()));
    CHECK(a.memory_bytes() == b.memory_bytes());
    CHECK(per_entry(b) <= (3 + 2 * 64) * sizeof(double));
    PosteriorSamples e(d, 300, 0.95, true);
    REQUIRE(e.exact());
    for (int k = 0; k < 300; ++k) e.add(rng.normal_vector(d.size()));
    CHECK(e.memory_bytes() >= 300 * sizeof(double) * static_cast<std::size_t>(d.size()));
}

TEST_CASE("sample stores round-trip through files") {
    const auto dir = std::filesystem::temp_directory_path() / "bckl_samples_test";
    std::filesystem::create_directories(dir);
    for (Index limit : {kDefaultExactStoreLimit, Index{0}}) {
        PosteriorSamples s(Dims{3, 2, 1}, 30, 0.9, true, limit);
        Rng rng(2);
        for (int k = 0; k < 30; ++k) {
            const VectorXd c = rng.normal_vector(6), n = c + rng.normal_vector(6);
            s.add(c, &n);
        }
        const std::string path = (dir / "s.bcks").string();
        s.save(path);
        const PosteriorSamples r = PosteriorSamples::load(path);
        CHECK(r.count() == 30);
        CHECK(r.exact() == s.exact());
        const PosteriorSummary a = summarize(s, 0.9), b = summarize(r, 0.9);
        CHECK(a.mean == b.mean);
        CHECK(a.std == b.std);
        CHECK(a.lower == b.lower);
        CHECK(a.upper == b.upper);
    }
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS((void)PosteriorSamples::load("/nonexistent/s.bcks"), DataError);
}

TEST_CASE("configuration invariants") {
    McmcConfig c = small_config(0, 0, 1, 1, 0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config(1, 0, 1, 0, 0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config(1, 1, 1, 1, 0);
    c.level = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config(1, 1, 1, 1, 0);
    c.fixed_tau = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS((void)run_mcmc(masked_noise({2, 2, 1}, 1.0, 1), small_config(0, 0, 1, 1, 0)), ConfigError);
    CHECK_THROWS_AS((void)run_mcmc(SpatioTensor({2, 2, 1}, VectorXd::Zero(4), std::vector<std::uint8_t>(4, 0)),
                                   small_config(1, 0, 1, 1, 0)),
                    DataError);
}

TEST_CASE("sweeps follow the documented update order") {
    const SpatioTensor data = masked_noise({4, 3, 2}, 0.7, 5);
    std::vector<std::string> seen;
    McmcObserver obs;
    obs.on_event = [&](const SweepEvent& e) {
        seen.push_back(e.step + (e.index >= 0 ? std::to_string(e.index) : std::string()) + "@" +
                       std::to_string(e.iteration));
    };
    (void)run_mcmc(data, small_config(2, 2, 1, 1, 1), &obs);
    std::vector<std::string> expect;
    for (int it = 0; it < 2; ++it) {
        const std::string at = "@" + std::to_string(it);
        for (int d = 0; d < 2; ++d) {
            for (const char* s : {"phi", "delta", "u", "v", "w"}) expect.push_back(s + std::to_string(d) + at);
        }
        expect.push_back("lambda_w" + at);
        for (int q = 0; q < 2; ++q) {
            for (const char* s : {"theta1", "theta2", "k3", "prior_draw"}) expect.push_back(s + std::to_string(q) + at);
        }
        expect.push_back("correct" + at);
        expect.push_back("assemble" + at);
        expect.push_back("tau" + at);
        if (it == 1) expect.push_back("collect" + at);
    }
    CHECK(seen == expect);
}

TEST_CASE("runs are deterministic under a fixed seed") {
    const SpatioTensor data = masked_noise({5, 4, 2}, 0.6, 8);
    const McmcConfig cfg = small_config(2, 1, 5, 5, 42);
    const McmcResult a = run_mcmc(data, cfg);
    const McmcResult b = run_mcmc(data, cfg);
    REQUIRE(a.trace.size() == 10);
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].tau == b.trace[i].tau);
        CHECK(a.trace[i].log_phi == b.trace[i].log_phi);
        CHECK(a.trace[i].log_theta1 == b.trace[i].log_theta1);
    }
    CHECK(summarize(a.samples).mean == summarize(b.samples).mean);
    CHECK(summarize(a.samples).upper == summarize(b.samples).upper);
    const McmcResult c = run_mcmc(data, small_config(2, 1, 5, 5, 43));
    CHECK(c.trace.back().tau != a.trace.back().tau);
}

TEST_CASE("with no local components the local settings are never consulted") {
    const SpatioTensor data = masked_noise({5, 4, 2}, 0.6, 9);
    McmcConfig a = small_config(2, 0, 5, 5, 7);
    McmcConfig b = a;
    b.space_taper = {TaperFamily::Wendland, 2.0};
    b.local_space_family = KernelFamily::Matern32;
    b.k3_mode = K3Mode::Diagonal;
    b.pcg = {1e-3, 2};
    std::vector<std::string> steps;
    McmcObserver obs;
    obs.on_event = [&](const SweepEvent& e) { steps.push_back(e.step); };
    const McmcResult ra = run_mcmc(data, a);
    const McmcResult rb = run_mcmc(data, b, &obs);
    for (std::size_t i = 0; i < ra.trace.size(); ++i) {
        CHECK(ra.trace[i].tau == rb.trace[i].tau);
        CHECK(ra.trace[i].log_delta == rb.trace[i].log_delta);
        CHECK(ra.trace[i].pcg_iterations == 0);
    }
    CHECK(summarize(ra.samples).mean == summarize(rb.samples).mean);
    CHECK(rb.local.empty());
    for (const auto& s : steps) {
        CHECK(s != "theta1");
        CHECK(s != "correct");
    }
}

TEST_CASE("rank-one data is recovered") {
    const Dims d{10, 10, 3};
    Rng rng(4);
    const VectorXd u = VectorXd::LinSpaced(10, 0.0, 3.0).array().sin() + 1.5;
    const VectorXd v = VectorXd::LinSpaced(10, 0.0, 2.0).array().cos() + 0.5;
    const VectorXd w = Eigen::Vector3d(1.0, -0.5, 2.0);
    VectorXd y = VectorXd::Zero(d.size());
    add_outer(y, d, u, v, w);
    const SpatioTensor data(d, y);
    const McmcResult r = run_mcmc(data, small_config(1, 0, 200, 200, 5));
    const double sd = std::sqrt((y.array() - y.mean()).square().mean());
    CHECK(rmse(y, summarize(r.samples).mean) < 0.05 * sd);
}

TEST_CASE("repeated solver failure aborts the run") {
    const SpatioTensor data = masked_noise({6, 5, 2}, 0.5, 2);
    McmcConfig cfg = small_config(1, 1, 5, 5, 1);
    cfg.pcg = {1e-14, 1};
    CHECK_THROWS_AS((void)run_mcmc(data, cfg), SolverError);
    cfg.max_solver_failure_fraction = 1.0;
    int warnings = 0;
    McmcObserver obs;
    obs.on_warning = [&](const std::string&) { ++warnings; };
    const McmcResult r = run_mcmc(data, cfg, &obs);
    CHECK(r.solver_failures == 10);
    CHECK(warnings == 10);
}

TEST_CASE("global Gibbs chain matches the exact micro-model posterior") {
    const Dims d{2, 2, 1};
    const std::vector<std::uint8_t> mask{1, 1, 1, 0};
    const VectorXd y = Eigen::Vector4d(1.0, 0.6, -0.4, 0.0);
    const SpatioTensor data(d, y, mask);
    const OmegaIndex omega(data);
    const double tau = 4.0;
    GlobalSamplerOptions opts;
    const GlobalSampler g(d, opts);
    Rng rng(31);
    GlobalState s = g.initial_state(1, rng);
    const MicroMoments exact = micro_oracle(s.ku[0], s.kv[0], 1.0, MatrixXd::Zero(4, 4), mask, y, tau);

    std::vector<std::vector<double>> series(4 + 4 + 3 + 3 + 1);
    const VectorXd resid = data.zero_filled();
    for (int it = 0; it < 101000; ++it) {
        g.sample_factor(FactorMode::U, 0, s, resid, omega, tau, rng);
        g.sample_factor(FactorMode::V, 0, s, resid, omega, tau, rng);
        g.sample_factor(FactorMode::W, 0, s, resid, omega, tau, rng);
        if (it < 1000) continue;
        const VectorXd x = cp_reconstruct(s.factors);
        const VectorXd u = s.factors.u.col(0), v = s.factors.v.col(0);
        const double w = s.factors.w(0, 0);
        std::size_t k = 0;
        for (Index i = 0; i < 4; ++i) series[k++].push_back(x[i]);
        for (Index i = 0; i < 4; ++i) series[k++].push_back(x[i] * x[i]);
        series[k++].push_back(u[0] * u[0]);
        series[k++].push_back(u[0] * u[1]);
        series[k++].push_back(u[1] * u[1]);
        series[k++].push_back(v[0] * v[0]);
        series[k++].push_back(v[0] * v[1]);
        series[k++].push_back(v[1] * v[1]);
        series[k++].push_back(w * w);
    }
    // The (noise-free) reconstruction moments of the oracle.
    const MicroMoments& e = exact;
    std::vector<double> target;
    for (Index i = 0; i < 4; ++i) target.push_back(e.y_mean[i]);
    for (Index i = 0; i < 4; ++i) target.push_back(e.y_sq[i]);
    for (double t : {e.uu(0, 0), e.uu(0, 1), e.uu(1, 1), e.vv(0, 0), e.vv(0, 1), e.vv(1, 1), e.ww}) target.push_back(t);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double m = average(series[k]), se = batch_se(series[k]);
        INFO("moment " << k << ": chain " << m << " +- " << se << ", exact " << target[k]);
        CHECK(std::abs(m - target[k]) <= 3.0 * se);
    }
}

TEST_CASE("full engine with a local component matches the exact micro-model posterior") {
    const Dims d{2, 2, 1};
    const std::vector<std::uint8_t> mask{1, 0, 1, 1};
    const VectorXd y = Eigen::Vector4d(0.9, 0.0, -0.5, 0.4);
    const SpatioTensor data(d, y, mask);
    const double tau = 4.0;
    McmcConfig cfg;
    cfg.rank = 1;
    cfg.local_components = 1;
    cfg.burn_in = 500;
    cfg.samples = 5000;
    cfg.freeze_hyperparameters = true;
    cfg.fixed_tau = tau;
    cfg.interval_includes_noise = false;
    cfg.pcg.tol = 1e-12;

    const GlobalSampler g(d, cfg.global_options());
    const LocalSampler l(d, cfg.local_options());
    Rng rng(0);
    const GlobalState gs = g.initial_state(1, rng);
    const auto ls = l.initial_state(1, rng);
    const MicroMoments exact = micro_oracle(gs.ku[0], gs.kv[0], 1.0, l.dense_covariance(ls[0]), mask, y, tau);

    const int chains = 20;
    std::vector<std::vector<double>> stats(8);
    for (int c = 0; c < chains; ++c) {
        cfg.seed = 1000 + static_cast<std::uint64_t>(c);
        const PosteriorSummary s = summarize(run_mcmc(data, cfg).samples);
        for (Index i = 0; i < 4; ++i) {
            stats[static_cast<std::size_t>(i)].push_back(s.mean[i]);
            stats[static_cast<std::size_t>(4 + i)].push_back(s.std[i] * s.std[i] + s.mean[i] * s.mean[i]);
        }
    }
    for (std::size_t k = 0; k < 8; ++k) {
        const double m = average(stats[k]);
        double var = 0.0;
        for (double v : stats[k]) var += (v - m) * (v - m);
        const double se = std::sqrt(var / (chains - 1) / chains);
        const double target = k < 4 ? exact.y_mean[static_cast<Index>(k)] : exact.y_sq[static_cast<Index>(k - 4)];
        INFO("moment " << k << ": chains " << m << " +- " << se << ", exact " << target);
        CHECK(std::abs(m - target) <= 3.0 * se);
    }
}

TEST_CASE("local length-scales separate short and long generating scales") {
    const Dims d{20, 20, 1};
    // Moderate noise: with very precise data the whitened moves barely leave their first
    // sweep's values, which are set against the white-noise initial r.
    McmcConfig cfg = small_config(0, 1, 200, 200, 3);
    cfg.space_taper = {TaperFamily::Bohman, 15.0};
    cfg.time_taper = {TaperFamily::Bohman, 15.0};
    cfg.k3_mode = K3Mode::Diagonal;
    cfg.fixed_tau = 10.0;
    const LocalSampler gen(d, cfg.local_options());
    const auto median_theta = [&](double theta) {
        Rng rng(17);
        auto comps = gen.initial_state(1, rng);
        comps[0].log_theta1 = comps[0].log_theta2 = std::log(theta);
        gen.refresh_space(comps[0]);
        gen.refresh_time(comps[0]);
        gen.refresh_variable(comps[0]);
        const VectorXd y = gen.draw_prior(comps[0], rng) + rng.normal_vector(d.size()) / std::sqrt(10.0);
        const McmcResult r = run_mcmc(SpatioTensor(d, y), cfg);
        std::vector<double> t1, t2;
        for (std::size_t k = 200; k < r.trace.size(); ++k) {
            t1.push_back(r.trace[k].log_theta1[0]);
            t2.push_back(r.trace[k].log_theta2[0]);
        }
        std::nth_element(t1.begin(), t1.begin() + 100, t1.end());
        std::nth_element(t2.begin(), t2.begin() + 100, t2.end());
        return std::pair{std::exp(t1[100]), std::exp(t2[100])};
    };
    const auto [short1, short2] = median_theta(0.5);
    const auto [long1, long2] = median_theta(5.0);
    INFO("short " << short1 << ", " << short2 << "; long " << long1 << ", " << long2);
    CHECK(long1 / short1 > 3.0);
    CHECK(long2 / short2 > 3.0);
}
