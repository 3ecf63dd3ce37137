#include "bckl/error.hpp"
#include "bckl/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>

using namespace bckl;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
    VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

// CRPS by integrating (F(t) - 1{t >= y})^2 for F = N(yhat, sigma^2).
double crps_quadrature(double y, double yhat, double sigma) {
    using boost::math::quadrature::gauss_kronrod;
    const auto below = [&](double t) {
        const double f = oracle::normal_cdf((t - yhat) / sigma);
        return f * f;
    };
    const auto above = [&](double t) {
        const double f = 1.0 - oracle::normal_cdf((t - yhat) / sigma);
        return f * f;
    };
    const double inf = std::numeric_limits<double>::infinity();
    return gauss_kronrod<double, 61>::integrate(below, -inf, y, 15, 1e-14) +
           gauss_kronrod<double, 61>::integrate(above, y, inf, 15, 1e-14);
}

}  // namespace

TEST_CASE("absolute and squared error") {
    CHECK(mae(vec({0, 2}), vec({1, 1})) == 1.0);
    CHECK(rmse(vec({0, 2}), vec({1, 1})) == 1.0);
    CHECK(mae(vec({0, 4}), vec({0, 0})) == 2.0);
    CHECK(rmse(vec({0, 4}), vec({0, 0})) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));
    CHECK(mae(vec({3, 1}), vec({3, 1})) == 0.0);
    CHECK_THROWS_AS((void)mae(VectorXd(), VectorXd()), ParameterError);
    CHECK_THROWS_AS((void)rmse(vec({1}), vec({1, 2})), DimensionError);
}

TEST_CASE("printed CRPS form equals the standard closed form on a z grid") {
    double worst = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double z = -5.0 + 0.01 * i;
        const VectorXd y = vec({z}), yhat = vec({0.0}), s = vec({1.0});
        worst = std::max(worst, std::abs(crps_gaussian(y, yhat, s) - crps_gaussian_closed_form(y, yhat, s)));
        CHECK(crps_gaussian(z, 0.0, 1.0) >= 0.0);
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("CRPS reference values") {
    CHECK(std::abs(crps_gaussian(0.0, 0.0, 1.0) - 0.23370) <= 1e-5);
    CHECK(crps_gaussian(0.0, 0.0, 1.0) ==
          doctest::Approx(2.0 / std::sqrt(2.0 * std::numbers::pi) - 1.0 / std::sqrt(std::numbers::pi)).epsilon(1e-14));
    // z = 1, sigma = 1
    const double q = crps_quadrature(1.0, 0.0, 1.0);
    CHECK(crps_gaussian(1.0, 0.0, 1.0) == doctest::Approx(q).epsilon(1e-10));
    CHECK(crps_gaussian(1.0, 0.0, 1.0) == doctest::Approx(0.6024413576).epsilon(1e-9));
    for (double z : {-3.0, -0.4, 0.0, 2.2}) {
        for (double s : {0.3, 1.0, 4.0}) CHECK(crps_gaussian(z * s + 1.0, 1.0, s) == doctest::Approx(crps_quadrature(z * s + 1.0, 1.0, s)).epsilon(1e-9));
    }
    // Scale equivariance.
    CHECK(crps_gaussian(7.0 * 0.8, 7.0 * 0.1, 7.0 * 0.6) == doctest::Approx(7.0 * crps_gaussian(0.8, 0.1, 0.6)).epsilon(1e-13));
    CHECK_THROWS_AS((void)crps_gaussian(0.0, 0.0, 0.0), ParameterError);
    CHECK_THROWS_AS((void)crps_gaussian(vec({0}), vec({0}), vec({-1})), ParameterError);
}

TEST_CASE("interval score and coverage") {
    const VectorXd l = vec({0, 0, 0}), u = vec({1, 2, 1});
    CHECK(interval_score(vec({0.5, 1.0, 0.2}), l, u) == doctest::Approx(4.0 / 3.0));
    CHECK(coverage(vec({0.5, 1.0, 0.2}), l, u) == 1.0);
    // 0.1 below the lower bound adds 2 / 0.05 * 0.1 = 4 to that term.
    CHECK(interval_score(vec({-0.1, 1.0, 0.2}), l, u) == doctest::Approx((4.0 + 4.0) / 3.0));
    CHECK(interval_score(vec({0.5, 1.0, 1.5}), l, u, 0.1) == doctest::Approx((4.0 + 20.0 * 0.5) / 3.0));
    CHECK(coverage(vec({-0.1, 1.0, 1.5}), l, u) == doctest::Approx(1.0 / 3.0));
    // Boundary points are inside.
    CHECK(coverage(vec({0.0, 2.0, 1.0}), l, u) == 1.0);
    CHECK(interval_score(vec({0.0, 2.0, 1.0}), l, u) == doctest::Approx(4.0 / 3.0));
    CHECK_THROWS_AS((void)interval_score(vec({0}), vec({1}), vec({0})), ParameterError);
    CHECK_THROWS_AS((void)coverage(vec({0}), vec({1}), vec({0})), ParameterError);
}

TEST_CASE("peak signal-to-noise ratio") {
    CHECK(psnr(vec({0, 2}), vec({1, 1}), 255.0) == doctest::Approx(10.0 * std::log10(65025.0)));
    const double a = psnr(vec({0, 2}), vec({1, 1}), 10.0);
    const double b = psnr(vec({0, 2}), vec({1.0 / std::sqrt(2.0), 2.0 - 1.0 / std::sqrt(2.0)}), 10.0);
    CHECK(b - a == doctest::Approx(10.0 * std::log10(2.0)));
    CHECK(std::isinf(psnr(vec({1, 2}), vec({1, 2}), 2.0)));
    const ScoreReport r = score(vec({1, 2}), vec({1, 2}), vec({1, 1}), vec({0, 1}), vec({2, 3}));
    CHECK(r.psnr == kPsnrCap);
    CHECK(r.n == 2);
    CHECK(r.cvg == 1.0);
    CHECK(r.crps == doctest::Approx(crps_gaussian(0.0, 0.0, 1.0)));
}
