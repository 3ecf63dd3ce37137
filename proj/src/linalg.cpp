#include "bckl/linalg.hpp"

#include "bckl/error.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>

namespace bckl {

namespace {

constexpr std::array<double, 4> kJitterLadder{0.0, 1e-6, 1e-5, 1e-4};

}  // namespace

// ---------------------------------------------------------------- factorizations

SparseChol sparse_cholesky(const SparseSym& s) {
    if (s.rows() != s.cols()) throw DimensionError("sparse_cholesky: matrix must be square");
    const Index n = s.rows();
    SparseSym eye(n, n);
    eye.setIdentity();
    for (double jitter : kJitterLadder) {
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
        if (jitter == 0.0) {
            llt.compute(s);
        } else {
            llt.compute(SparseSym(s + jitter * eye));
        }
        if (llt.info() != Eigen::Success) continue;
        SparseChol out;
        out.l_ = llt.matrixL();
        out.perm_ = llt.permutationP();
        out.jitter_ = jitter;
        double logdet = 0.0;
        for (Index j = 0; j < n; ++j) logdet += std::log(out.l_.coeff(j, j));
        out.logdet_ = 2.0 * logdet;
        return out;
    }
    throw FactorizationError("sparse Cholesky failed: matrix not positive definite after jitter escalation");
}

void SparseChol::apply_factor(Eigen::MatrixXd& x) const {
    Eigen::MatrixXd lx = l_ * x;
    x = perm_.transpose() * lx;
}

void SparseChol::solve_factor(Eigen::MatrixXd& x) const {
    x = perm_ * x;
    l_.triangularView<Eigen::Lower>().solveInPlace(x);
}

Eigen::MatrixXd SparseChol::solve(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd x = perm_ * b;
    l_.triangularView<Eigen::Lower>().solveInPlace(x);
    l_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return perm_.transpose() * x;
}

Eigen::MatrixXd SparseChol::dense_factor() const {
    Eigen::MatrixXd l = Eigen::MatrixXd(l_);
    return perm_.transpose() * l;
}

Eigen::MatrixXd dense_cholesky(const Eigen::MatrixXd& s, double* logdet) {
    if (s.rows() != s.cols()) throw DimensionError("dense_cholesky: matrix must be square");
    for (double jitter : kJitterLadder) {
        Eigen::LLT<Eigen::MatrixXd> llt;
        if (jitter == 0.0) {
            llt.compute(s);
        } else {
            Eigen::MatrixXd sj = s;
            sj.diagonal().array() += jitter;
            llt.compute(sj);
        }
        if (llt.info() != Eigen::Success) continue;
        Eigen::MatrixXd l = llt.matrixL();
        if (!l.diagonal().allFinite() || (l.diagonal().array() <= 0.0).any()) continue;
        if (logdet != nullptr) *logdet = 2.0 * l.diagonal().array().log().sum();
        return l;
    }
    throw FactorizationError("dense Cholesky failed: matrix not positive definite after jitter escalation");
}

// ---------------------------------------------------------------- matrix-like operands

Index operand_size(const MatrixLike& a) {
    return std::visit(
        [](const auto& m) -> Index {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Diagonal>) {
                return m.d.size();
            } else {
                if (m.rows() != m.cols()) throw DimensionError("Kronecker operand must be square");
                return m.rows();
            }
        },
        a);
}

void left_multiply(const MatrixLike& a, Eigen::MatrixXd& x) {
    std::visit(
        [&x](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Diagonal>) {
                x = m.d.asDiagonal() * x;
            } else {
                Eigen::MatrixXd tmp = m * x;
                x.swap(tmp);
            }
        },
        a);
}

Index factor_size(const FactorLike& f) {
    return std::visit(
        [](const auto& m) -> Index {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ScaledIdentity>) {
                return m.n;
            } else if constexpr (std::is_same_v<T, SparseChol>) {
                return m.size();
            } else {
                return m.rows();
            }
        },
        f);
}

void factor_apply(const FactorLike& f, Eigen::MatrixXd& x) {
    std::visit(
        [&x](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ScaledIdentity>) {
                x *= m.scale;
            } else if constexpr (std::is_same_v<T, SparseChol>) {
                m.apply_factor(x);
            } else {
                Eigen::MatrixXd tmp = m.template triangularView<Eigen::Lower>() * x;
                x.swap(tmp);
            }
        },
        f);
}

void factor_solve(const FactorLike& f, Eigen::MatrixXd& x) {
    std::visit(
        [&x](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ScaledIdentity>) {
                x /= m.scale;
            } else if constexpr (std::is_same_v<T, SparseChol>) {
                m.solve_factor(x);
            } else {
                m.template triangularView<Eigen::Lower>().solveInPlace(x);
            }
        },
        f);
}

// ---------------------------------------------------------------- Kronecker products

void mode_product(Eigen::VectorXd& x, const Dims& d, int mode, const std::function<void(Eigen::MatrixXd&)>& op) {
    if (x.size() != d.size()) throw DimensionError("mode_product: vector length does not match dims");
    if (mode == 1) {
        Eigen::MatrixXd slab = Eigen::Map<const Eigen::MatrixXd>(x.data(), d.m, d.t * d.p);
        op(slab);
        x = Eigen::Map<const Eigen::VectorXd>(slab.data(), slab.size());
        return;
    }
    Eigen::MatrixXd unfolded = unfold(x, d, mode);
    op(unfolded);
    x = fold(unfolded, d, mode);
}

namespace {

Dims kron_dims(Index n1, Index n2, Index n3, Index len) {
    if (n1 * n2 * n3 != len) throw DimensionError("Kronecker operand sizes do not match vector length");
    return {n1, n2, n3};
}

}  // namespace

Eigen::VectorXd kron_matvec(const MatrixLike& k1, const MatrixLike& k2, const MatrixLike& k3,
                            const Eigen::VectorXd& y) {
    const Dims d = kron_dims(operand_size(k1), operand_size(k2), operand_size(k3), y.size());
    Eigen::VectorXd x = y;
    mode_product(x, d, 1, [&](Eigen::MatrixXd& a) { left_multiply(k1, a); });
    mode_product(x, d, 2, [&](Eigen::MatrixXd& a) { left_multiply(k2, a); });
    if (const auto* diag = std::get_if<Diagonal>(&k3)) {
        // Diagonal variable covariance: scale each frontal slab.
        const Index slab = d.m * d.t;
        for (Index p = 0; p < d.p; ++p) x.segment(p * slab, slab) *= diag->d[p];
    } else {
        mode_product(x, d, 3, [&](Eigen::MatrixXd& a) { left_multiply(k3, a); });
    }
    return x;
}

Eigen::VectorXd kron_factor_apply(const FactorLike& a1, const FactorLike& a2, const FactorLike& a3,
                                  const Eigen::VectorXd& z) {
    const Dims d = kron_dims(factor_size(a1), factor_size(a2), factor_size(a3), z.size());
    Eigen::VectorXd x = z;
    mode_product(x, d, 1, [&](Eigen::MatrixXd& a) { factor_apply(a1, a); });
    mode_product(x, d, 2, [&](Eigen::MatrixXd& a) { factor_apply(a2, a); });
    if (const auto* s = std::get_if<ScaledIdentity>(&a3)) {
        if (s->scale != 1.0) x *= s->scale;
    } else {
        mode_product(x, d, 3, [&](Eigen::MatrixXd& a) { factor_apply(a3, a); });
    }
    return x;
}

Eigen::VectorXd kron_factor_solve(const FactorLike& a1, const FactorLike& a2, const FactorLike& a3,
                                  const Eigen::VectorXd& r) {
    const Dims d = kron_dims(factor_size(a1), factor_size(a2), factor_size(a3), r.size());
    Eigen::VectorXd x = r;
    mode_product(x, d, 1, [&](Eigen::MatrixXd& a) { factor_solve(a1, a); });
    mode_product(x, d, 2, [&](Eigen::MatrixXd& a) { factor_solve(a2, a); });
    if (const auto* s = std::get_if<ScaledIdentity>(&a3)) {
        if (s->scale != 1.0) x /= s->scale;
    } else {
        mode_product(x, d, 3, [&](Eigen::MatrixXd& a) { factor_solve(a3, a); });
    }
    return x;
}

// ---------------------------------------------------------------- PCG

PcgResult pcg_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_a, const Eigen::VectorXd& b,
                    const Eigen::VectorXd& precond_inv_sqrt, PcgOptions opts) {
    if (precond_inv_sqrt.size() != b.size()) throw DimensionError("pcg_solve: preconditioner length mismatch");
    const Eigen::VectorXd minv = precond_inv_sqrt.array().square();
    PcgResult res;
    res.x = Eigen::VectorXd::Zero(b.size());
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.converged = true;
        res.residual_history.push_back(0.0);
        return res;
    }
    Eigen::VectorXd r = b;
    Eigen::VectorXd z = minv.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    res.residual_history.push_back(1.0);
    for (int it = 1; it <= opts.max_iter; ++it) {
        const Eigen::VectorXd ap = apply_a(p);
        const double pap = p.dot(ap);
        if (!(pap > 0.0)) break;  // operator not SPD along p, or breakdown
        const double alpha = rz / pap;
        res.x.noalias() += alpha * p;
        r.noalias() -= alpha * ap;
        res.iterations = it;
        res.relative_residual = r.norm() / bnorm;
        res.residual_history.push_back(res.relative_residual);
        if (res.relative_residual <= opts.tol) {
            res.converged = true;
            return res;
        }
        z = minv.cwiseProduct(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    return res;
}

// ---------------------------------------------------------------- Woodbury

Eigen::VectorXd RowSelector::apply(const Eigen::VectorXd& x) const {
    if (x.size() != n_small) throw DimensionError("RowSelector::apply: length mismatch");
    Eigen::VectorXd out(rows());
    for (Index i = 0; i < rows(); ++i) out[i] = coef[i] * x[column[static_cast<std::size_t>(i)]];
    return out;
}

Eigen::VectorXd RowSelector::apply_transpose(const Eigen::VectorXd& y) const {
    if (y.size() != rows()) throw DimensionError("RowSelector::apply_transpose: length mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_small);
    for (Index i = 0; i < rows(); ++i) out[column[static_cast<std::size_t>(i)]] += coef[i] * y[i];
    return out;
}

Eigen::VectorXd RowSelector::gram_diagonal() const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_small);
    for (Index i = 0; i < rows(); ++i) g[column[static_cast<std::size_t>(i)]] += coef[i] * coef[i];
    return g;
}

Eigen::MatrixXd RowSelector::dense() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows(), n_small);
    for (Index i = 0; i < rows(); ++i) h(i, column[static_cast<std::size_t>(i)]) = coef[i];
    return h;
}

WoodburyFactor woodbury_factor(const Eigen::MatrixXd& k_chol, const Eigen::VectorXd& gram_diag, double tau) {
    if (gram_diag.size() != k_chol.rows()) throw DimensionError("woodbury_factor: size mismatch");
    WoodburyFactor f;
    f.k_chol = k_chol;
    f.tau = tau;
    const Eigen::MatrixXd scaled = (tau * gram_diag).cwiseSqrt().asDiagonal() * k_chol;
    Eigen::MatrixXd b = scaled.transpose() * scaled;
    b.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() != Eigen::Success) throw FactorizationError("Woodbury inner factorization failed");
    f.b_chol = llt.matrixL();
    f.logdet_b = 2.0 * f.b_chol.diagonal().array().log().sum();
    return f;
}

Eigen::VectorXd woodbury_inner_solve(const WoodburyFactor& f, const Eigen::VectorXd& x) {
    Eigen::VectorXd t = f.k_chol.transpose() * x;
    f.b_chol.triangularView<Eigen::Lower>().solveInPlace(t);
    f.b_chol.transpose().triangularView<Eigen::Upper>().solveInPlace(t);
    return f.k_chol * t;
}

Eigen::VectorXd woodbury_solve(const RowSelector& h, const Eigen::MatrixXd& k, double tau, const Eigen::VectorXd& y) {
    if (k.rows() != h.n_small) throw DimensionError("woodbury_solve: K size does not match H");
    const WoodburyFactor f = woodbury_factor(dense_cholesky(k), h.gram_diagonal(), tau);
    const Eigen::VectorXd inner = woodbury_inner_solve(f, h.apply_transpose(y));
    return tau * y - tau * tau * h.apply(inner);
}

double woodbury_logdet(const RowSelector& h, const Eigen::MatrixXd& k, double tau) {
    if (k.rows() != h.n_small) throw DimensionError("woodbury_logdet: K size does not match H");
    const WoodburyFactor f = woodbury_factor(dense_cholesky(k), h.gram_diagonal(), tau);
    return f.logdet_b - static_cast<double>(h.rows()) * std::log(tau);
}

}  // namespace bckl
