#include "bckl/tensor.hpp"

#include "bckl/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace bckl {

namespace {

void check_mode(int mode) {
    if (mode < 1 || mode > 3) throw DimensionError("unfolding mode must be 1, 2 or 3, got " + std::to_string(mode));
}

}  // namespace

Index Dims::extent(int mode) const {
    check_mode(mode);
    return mode == 1 ? m : (mode == 2 ? t : p);
}

SpatioTensor::SpatioTensor(Dims dims, Eigen::VectorXd values)
    : dims_(dims), values_(std::move(values)), mask_(static_cast<std::size_t>(dims.size()), 1) {
    if (values_.size() != dims_.size()) throw DimensionError("tensor payload length does not match dims");
    rebuild_observed();
}

SpatioTensor::SpatioTensor(Dims dims, Eigen::VectorXd values, std::vector<std::uint8_t> mask)
    : dims_(dims), values_(std::move(values)), mask_(std::move(mask)) {
    if (values_.size() != dims_.size() || static_cast<Index>(mask_.size()) != dims_.size()) {
        throw DimensionError("tensor payload or mask length does not match dims");
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Index i = 0; i < values_.size(); ++i) {
        if (!mask_[static_cast<std::size_t>(i)]) {
            values_[i] = nan;
        } else if (!std::isfinite(values_[i])) {
            throw DataError("observed entry " + std::to_string(i) + " is not finite");
        }
    }
    rebuild_observed();
}

SpatioTensor SpatioTensor::from_nan_pattern(Dims dims, Eigen::VectorXd values) {
    if (values.size() != dims.size()) throw DimensionError("tensor payload length does not match dims");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) mask[static_cast<std::size_t>(i)] = std::isnan(values[i]) ? 0 : 1;
    return SpatioTensor(dims, std::move(values), std::move(mask));
}

void SpatioTensor::rebuild_observed() {
    observed_.clear();
    for (Index i = 0; i < static_cast<Index>(mask_.size()); ++i) {
        if (mask_[static_cast<std::size_t>(i)]) observed_.push_back(i);
    }
}

Eigen::VectorXd SpatioTensor::observed_values() const {
    return project_omega(values_, observed_, dims_.size());
}

Eigen::VectorXd SpatioTensor::zero_filled() const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(values_.size());
    for (Index i : observed_) out[i] = values_[i];
    return out;
}

void CPFactors::validate() const {
    if (u.cols() != v.cols() || u.cols() != w.cols()) {
        throw DimensionError("CP factor matrices must share the same number of columns");
    }
}

Eigen::MatrixXd unfold(std::span<const double> x, const Dims& d, int mode) {
    check_mode(mode);
    if (static_cast<Index>(x.size()) != d.size()) throw DimensionError("unfold: vector length does not match dims");
    Eigen::Map<const Eigen::MatrixXd> slab(x.data(), d.m, d.t * d.p);  // mode-1 view
    switch (mode) {
        case 1:
            return slab;
        case 2: {
            Eigen::MatrixXd out(d.t, d.m * d.p);
            for (Index p = 0; p < d.p; ++p) {
                out.middleCols(p * d.m, d.m) = slab.middleCols(p * d.t, d.t).transpose();
            }
            return out;
        }
        default: {
            Eigen::Map<const Eigen::MatrixXd> flat(x.data(), d.m * d.t, d.p);
            return flat.transpose();
        }
    }
}

Eigen::MatrixXd unfold(const Eigen::VectorXd& x, const Dims& d, int mode) {
    return unfold(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), d, mode);
}

Eigen::VectorXd fold(const Eigen::MatrixXd& a, const Dims& d, int mode) {
    check_mode(mode);
    const Index rows = d.extent(mode);
    if (a.rows() != rows || a.cols() * rows != d.size()) throw DimensionError("fold: matrix shape does not match dims");
    Eigen::VectorXd out(d.size());
    switch (mode) {
        case 1:
            out = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
            break;
        case 2: {
            Eigen::Map<Eigen::MatrixXd> slab(out.data(), d.m, d.t * d.p);
            for (Index p = 0; p < d.p; ++p) {
                slab.middleCols(p * d.t, d.t) = a.middleCols(p * d.m, d.m).transpose();
            }
            break;
        }
        default: {
            Eigen::Map<Eigen::MatrixXd> flat(out.data(), d.m * d.t, d.p);
            flat = a.transpose();
        }
    }
    return out;
}

Eigen::VectorXd vectorize(const SpatioTensor& t) { return t.values(); }

Eigen::VectorXd project_omega(const Eigen::VectorXd& full, std::span<const Index> observed, Index full_size) {
    if (full.size() != full_size) throw DimensionError("project_omega: input length must equal M*T*P");
    Eigen::VectorXd out(static_cast<Index>(observed.size()));
    for (std::size_t k = 0; k < observed.size(); ++k) out[static_cast<Index>(k)] = full[observed[k]];
    return out;
}

Eigen::VectorXd scatter_omega(const Eigen::VectorXd& sub, std::span<const Index> observed, Index full_size) {
    if (sub.size() != static_cast<Index>(observed.size())) {
        throw DimensionError("scatter_omega: input length must equal |Omega|");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(full_size);
    for (std::size_t k = 0; k < observed.size(); ++k) out[observed[k]] = sub[static_cast<Index>(k)];
    return out;
}

void add_outer(Eigen::VectorXd& x, const Dims& d, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
               const Eigen::VectorXd& w, double scale) {
    if (u.size() != d.m || v.size() != d.t || w.size() != d.p || x.size() != d.size()) {
        throw DimensionError("add_outer: factor lengths do not match dims");
    }
    Index i = 0;
    for (Index p = 0; p < d.p; ++p) {
        for (Index t = 0; t < d.t; ++t) {
            const double c = scale * v[t] * w[p];
            x.segment(i, d.m) += c * u;
            i += d.m;
        }
    }
}

Eigen::VectorXd cp_reconstruct(const CPFactors& f) {
    f.validate();
    const Dims d = f.dims();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d.size());
    for (Index r = 0; r < f.rank(); ++r) add_outer(x, d, f.u.col(r), f.v.col(r), f.w.col(r));
    return x;
}

}  // namespace bckl
