#pragma once

#include <Eigen/Dense>

#include <optional>

namespace bckl {

/// Scores of held-out entries.
struct ScoreReport {
    double mae = 0.0;
    double rmse = 0.0;
    double crps = 0.0;
    double int_score = 0.0;
    double cvg = 0.0;
    double psnr = 0.0;
    Eigen::Index n = 0;
};

inline constexpr double kPsnrCap = 99.0;

[[nodiscard]] double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);
[[nodiscard]] double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

/// Mean Gaussian CRPS written as -sigma [1/sqrt(pi) - 2 phi(z) - z (2 Phi(z) - 1)].
[[nodiscard]] double crps_gaussian(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                                   const Eigen::VectorXd& sigma);
/// Same score in the usual arrangement sigma [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)].
[[nodiscard]] double crps_gaussian_closed_form(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                                               const Eigen::VectorXd& sigma);
[[nodiscard]] double crps_gaussian(double y, double yhat, double sigma);

/// Mean width plus 2/alpha times the excursion outside the closed interval [l, u].
[[nodiscard]] double interval_score(const Eigen::VectorXd& y, const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper, double alpha = 0.05);
/// Fraction of y inside the closed interval.
[[nodiscard]] double coverage(const Eigen::VectorXd& y, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// 10 log10(max^2 / MSE); +inf when MSE = 0.
[[nodiscard]] double psnr(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, double max_value);

/// All scores at once; psnr defaults to the maximum of y and is capped at 99.
[[nodiscard]] ScoreReport score(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::VectorXd& std,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double alpha = 0.05,
                                std::optional<double> psnr_max = std::nullopt);

}  // namespace bckl
