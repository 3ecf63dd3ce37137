#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace bckl {

using Index = Eigen::Index;

/// Shape of a third-order (space x time x variable) tensor.
struct Dims {
    Index m = 0;
    Index t = 0;
    Index p = 0;

    [[nodiscard]] Index size() const { return m * t * p; }
    [[nodiscard]] Index extent(int mode) const;
    bool operator==(const Dims&) const = default;
};

/// Linear index of entry (m, t, p) in vectorized order: m varies fastest, then t, then p.
/// This is vec of the mode-1 unfolding and matches (K3 ⊗ K2 ⊗ K1) acting on vec.
inline Index linear_index(const Dims& d, Index m, Index t, Index p) { return m + d.m * (t + d.t * p); }

/// Dense third-order array with an observation mask.
///
/// Unobserved entries hold a quiet NaN; the mask is authoritative and inference never
/// reads values where the mask is false.
class SpatioTensor {
public:
    SpatioTensor() = default;
    /// Fully observed tensor from vectorized values.
    SpatioTensor(Dims dims, Eigen::VectorXd values);
    /// Values plus explicit mask; masked-out values are overwritten with NaN.
    SpatioTensor(Dims dims, Eigen::VectorXd values, std::vector<std::uint8_t> mask);

    /// Builds a tensor whose mask is derived from the NaN pattern of `values`.
    static SpatioTensor from_nan_pattern(Dims dims, Eigen::VectorXd values);

    [[nodiscard]] const Dims& dims() const { return dims_; }
    [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
    [[nodiscard]] const std::vector<std::uint8_t>& mask() const { return mask_; }
    /// Observed linear indices in increasing order (the set Ω).
    [[nodiscard]] const std::vector<Index>& observed() const { return observed_; }
    [[nodiscard]] Index num_observed() const { return static_cast<Index>(observed_.size()); }
    [[nodiscard]] bool is_observed(Index i) const { return mask_[static_cast<std::size_t>(i)] != 0; }
    [[nodiscard]] double operator()(Index m, Index t, Index p) const {
        return values_[linear_index(dims_, m, t, p)];
    }

    /// Observed values in Ω order.
    [[nodiscard]] Eigen::VectorXd observed_values() const;
    /// Values with unobserved entries replaced by zero.
    [[nodiscard]] Eigen::VectorXd zero_filled() const;

private:
    void rebuild_observed();

    Dims dims_;
    Eigen::VectorXd values_;
    std::vector<std::uint8_t> mask_;
    std::vector<Index> observed_;
};

/// Factor matrices of a rank-D CP decomposition: U (M x D), V (T x D), W (P x D).
struct CPFactors {
    Eigen::MatrixXd u;
    Eigen::MatrixXd v;
    Eigen::MatrixXd w;

    [[nodiscard]] Index rank() const { return u.cols(); }
    [[nodiscard]] Dims dims() const { return {u.rows(), v.rows(), w.rows()}; }
    void validate() const;
};

/// Mode-k unfolding (k = 1, 2, 3) of a vectorized tensor, Kolda-Bader column ordering.
[[nodiscard]] Eigen::MatrixXd unfold(std::span<const double> x, const Dims& dims, int mode);
[[nodiscard]] Eigen::MatrixXd unfold(const Eigen::VectorXd& x, const Dims& dims, int mode);
/// Inverse of unfold.
[[nodiscard]] Eigen::VectorXd fold(const Eigen::MatrixXd& unfolded, const Dims& dims, int mode);

/// Stacks the columns of the mode-1 unfolding; for our storage this is the identity copy.
[[nodiscard]] Eigen::VectorXd vectorize(const SpatioTensor& t);

/// Gathers the observed entries (mask order) of a full-length vector.
[[nodiscard]] Eigen::VectorXd project_omega(const Eigen::VectorXd& full, std::span<const Index> observed,
                                            Index full_size);
/// Places `sub` at the observed positions of a zero vector of length `full_size`.
[[nodiscard]] Eigen::VectorXd scatter_omega(const Eigen::VectorXd& sub, std::span<const Index> observed,
                                            Index full_size);

/// x(m,t,p) = sum_d U(m,d) V(t,d) W(p,d), vectorized.
[[nodiscard]] Eigen::VectorXd cp_reconstruct(const CPFactors& f);
/// Adds scale * (u ∘ v ∘ w) to a vectorized tensor in place.
void add_outer(Eigen::VectorXd& x, const Dims& dims, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
               const Eigen::VectorXd& w, double scale = 1.0);

}  // namespace bckl
