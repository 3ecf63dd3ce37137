#pragma once

#include "bckl/kernels.hpp"
#include "bckl/tensor.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace bckl {

/// Sparse Cholesky factorization with a fill-reducing (AMD) permutation.
///
/// Stores L and P with P K P^T = L L^T. The square-root factor exposed to samplers is
/// A = P^T L, so A A^T = K holds for the unpermuted matrix.
class SparseChol {
public:
    SparseChol() = default;

    [[nodiscard]] Index size() const { return l_.rows(); }
    [[nodiscard]] const Eigen::SparseMatrix<double>& factor() const { return l_; }
    [[nodiscard]] const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>& permutation() const {
        return perm_;
    }
    /// log|K| = 2 sum log diag(L).
    [[nodiscard]] double logdet() const { return logdet_; }
    /// Extra diagonal jitter that factorization needed (0 if none).
    [[nodiscard]] double jitter_added() const { return jitter_; }

    /// Left-multiplies the columns of x by A = P^T L.
    void apply_factor(Eigen::MatrixXd& x) const;
    /// Left-multiplies the columns of x by A^{-1} = L^{-1} P.
    void solve_factor(Eigen::MatrixXd& x) const;
    /// K^{-1} b.
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
    /// Dense A = P^T L (tests and small problems).
    [[nodiscard]] Eigen::MatrixXd dense_factor() const;

private:
    friend SparseChol sparse_cholesky(const SparseSym& s);
    Eigen::SparseMatrix<double> l_;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;
    double logdet_ = 0.0;
    double jitter_ = 0.0;
};

/// Factorizes a symmetric positive definite sparse matrix. On failure the diagonal is
/// escalated by 1e-6, 1e-5, 1e-4 before a FactorizationError is thrown.
[[nodiscard]] SparseChol sparse_cholesky(const SparseSym& s);

/// Dense lower Cholesky factor with the same jitter escalation policy.
[[nodiscard]] Eigen::MatrixXd dense_cholesky(const Eigen::MatrixXd& s, double* logdet = nullptr);

struct Diagonal {
    Eigen::VectorXd d;
};

/// A matrix operand of a Kronecker product: dense, sparse or diagonal.
using MatrixLike = std::variant<Eigen::MatrixXd, Eigen::SparseMatrix<double>, Diagonal>;

[[nodiscard]] Index operand_size(const MatrixLike& a);
/// x <- A x, column by column.
void left_multiply(const MatrixLike& a, Eigen::MatrixXd& x);

/// A square-root factor A with A A^T = K: sparse Cholesky, dense lower triangular,
/// or a scaled identity (diagonal K3 mode).
struct ScaledIdentity {
    Index n = 0;
    double scale = 1.0;
};
using FactorLike = std::variant<SparseChol, Eigen::MatrixXd, ScaledIdentity>;

[[nodiscard]] Index factor_size(const FactorLike& f);
void factor_apply(const FactorLike& f, Eigen::MatrixXd& x);
void factor_solve(const FactorLike& f, Eigen::MatrixXd& x);

/// Applies `op` (a left multiplication on a matrix of mode fibers) along one mode of a
/// vectorized tensor.
void mode_product(Eigen::VectorXd& x, const Dims& dims, int mode, const std::function<void(Eigen::MatrixXd&)>& op);

/// (K3 ⊗ K2 ⊗ K1) y via three mode products, never forming the Kronecker product.
[[nodiscard]] Eigen::VectorXd kron_matvec(const MatrixLike& k1, const MatrixLike& k2, const MatrixLike& k3,
                                          const Eigen::VectorXd& y);
/// (A3 ⊗ A2 ⊗ A1) z.
[[nodiscard]] Eigen::VectorXd kron_factor_apply(const FactorLike& a1, const FactorLike& a2, const FactorLike& a3,
                                                const Eigen::VectorXd& z);
/// (A3 ⊗ A2 ⊗ A1)^{-1} r.
[[nodiscard]] Eigen::VectorXd kron_factor_solve(const FactorLike& a1, const FactorLike& a2, const FactorLike& a3,
                                                const Eigen::VectorXd& r);

struct PcgResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    /// Relative residual after each iteration (entry 0 is the initial residual).
    std::vector<double> residual_history;
};

struct PcgOptions {
    double tol = 1e-8;
    int max_iter = 1000;
};

/// Preconditioned conjugate gradients for an SPD operator, starting from x = 0.
/// The preconditioner is diag(precond_inv_sqrt)^2, i.e. the symmetric split
/// C A C with C = diag(precond_inv_sqrt).
[[nodiscard]] PcgResult pcg_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_a,
                                  const Eigen::VectorXd& b, const Eigen::VectorXd& precond_inv_sqrt,
                                  PcgOptions opts = {});

/// Implicit |Omega| x n_small matrix with exactly one nonzero per row:
/// H(i, column[i]) = coef[i]. This is the shape of O_k((w ⊗ v) ⊗ I) in the factor updates.
struct RowSelector {
    Index n_small = 0;
    std::vector<Index> column;
    Eigen::VectorXd coef;

    [[nodiscard]] Index rows() const { return static_cast<Index>(column.size()); }
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;            // H x
    [[nodiscard]] Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const;  // H^T y
    [[nodiscard]] Eigen::VectorXd gram_diagonal() const;                            // diag(H^T H)
    [[nodiscard]] Eigen::MatrixXd dense() const;
};

/// Factorization of B = I + tau L^T diag(g) L where K = L L^T and g = diag(H^T H).
/// B carries everything the Woodbury identities need without ever inverting K.
struct WoodburyFactor {
    Eigen::MatrixXd k_chol;  // L
    Eigen::MatrixXd b_chol;  // chol(B)
    double tau = 1.0;
    double logdet_b = 0.0;  // log|K^{-1} + tau H^T H| + log|K|
};

[[nodiscard]] WoodburyFactor woodbury_factor(const Eigen::MatrixXd& k_chol, const Eigen::VectorXd& gram_diag,
                                             double tau);
/// (K^{-1} + tau H^T H)^{-1} x = L B^{-1} L^T x.
[[nodiscard]] Eigen::VectorXd woodbury_inner_solve(const WoodburyFactor& f, const Eigen::VectorXd& x);

/// (tau^{-1} I + H K H^T)^{-1} y = tau y - tau^2 H (K^{-1} + tau H^T H)^{-1} H^T y.
[[nodiscard]] Eigen::VectorXd woodbury_solve(const RowSelector& h, const Eigen::MatrixXd& k, double tau,
                                             const Eigen::VectorXd& y);
/// log|tau^{-1} I + H K H^T| = log|K^{-1} + tau H^T H| + log|K| - |Omega| log tau.
[[nodiscard]] double woodbury_logdet(const RowSelector& h, const Eigen::MatrixXd& k, double tau);

}  // namespace bckl
