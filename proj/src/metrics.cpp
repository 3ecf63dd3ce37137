#include "bckl/metrics.hpp"

#include "bckl/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace bckl {

namespace {

void check_same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() == 0) throw ParameterError("metrics need at least one entry");
    if (a.size() != b.size()) throw DimensionError("metric inputs must have equal lengths");
}

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void check_sigma(const Eigen::VectorXd& sigma) {
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw ParameterError("CRPS needs positive standard deviations");
    }
}

}  // namespace

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    check_same(y, yhat);
    return (y - yhat).cwiseAbs().mean();
}

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    check_same(y, yhat);
    return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

double crps_gaussian(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, const Eigen::VectorXd& sigma) {
    check_same(y, yhat);
    check_same(y, sigma);
    check_sigma(sigma);
    const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double z = (y[i] - yhat[i]) / sigma[i];
        s += sigma[i] * (inv_sqrt_pi - 2.0 * std_normal_pdf(z) - z * (2.0 * std_normal_cdf(z) - 1.0));
    }
    return -s / static_cast<double>(y.size());
}

double crps_gaussian(double y, double yhat, double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("CRPS needs positive standard deviations");
    const double z = (y - yhat) / sigma;
    return sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

double crps_gaussian_closed_form(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, const Eigen::VectorXd& sigma) {
    check_same(y, yhat);
    check_same(y, sigma);
    check_sigma(sigma);
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += crps_gaussian(y[i], yhat[i], sigma[i]);
    return s / static_cast<double>(y.size());
}

double interval_score(const Eigen::VectorXd& y, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                      double alpha) {
    check_same(y, lower);
    check_same(y, upper);
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (lower[i] > upper[i]) throw ParameterError("interval bounds are crossed");
        s += upper[i] - lower[i];
        if (y[i] < lower[i]) s += 2.0 / alpha * (lower[i] - y[i]);
        if (y[i] > upper[i]) s += 2.0 / alpha * (y[i] - upper[i]);
    }
    return s / static_cast<double>(y.size());
}

double coverage(const Eigen::VectorXd& y, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    check_same(y, lower);
    check_same(y, upper);
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (lower[i] > upper[i]) throw ParameterError("interval bounds are crossed");
        if (y[i] >= lower[i] && y[i] <= upper[i]) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(y.size());
}

double psnr(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, double max_value) {
    check_same(y, yhat);
    if (!(max_value > 0.0)) throw ParameterError("PSNR peak value must be positive");
    const double mse = (y - yhat).squaredNorm() / static_cast<double>(y.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / mse);
}

ScoreReport score(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::VectorXd& std,
                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double alpha,
                  std::optional<double> psnr_max) {
    ScoreReport r;
    r.n = y.size();
    r.mae = mae(y, mean);
    r.rmse = rmse(y, mean);
    r.crps = crps_gaussian(y, mean, std);
    r.int_score = interval_score(y, lower, upper, alpha);
    r.cvg = coverage(y, lower, upper);
    const double peak = psnr_max ? *psnr_max : y.maxCoeff();
    r.psnr = peak > 0.0 ? std::min(psnr(y, mean, peak), kPsnrCap) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

}  // namespace bckl
