#include "bckl/model.hpp"

#include "bckl/error.hpp"

namespace bckl {

Eigen::MatrixXd HyperPriors::psi0_or_identity(Index p) const {
    if (!psi0) return Eigen::MatrixXd::Identity(p, p);
    if (psi0->rows() != p || psi0->cols() != p) throw DimensionError("psi0 must be P x P");
    return *psi0;
}

double HyperPriors::nu0_or_default(Index p) const { return nu0.value_or(static_cast<double>(p)); }

OmegaIndex::OmegaIndex(const SpatioTensor& data) : OmegaIndex(data.dims(), data.mask()) {}

OmegaIndex::OmegaIndex(const Dims& d, const std::vector<std::uint8_t>& mask) : dims(d) {
    if (static_cast<Index>(mask.size()) != d.size()) throw DimensionError("mask length does not match dims");
    Index i = 0;
    for (Index pp = 0; pp < d.p; ++pp) {
        for (Index tt = 0; tt < d.t; ++tt) {
            for (Index mm = 0; mm < d.m; ++mm, ++i) {
                if (!mask[static_cast<std::size_t>(i)]) continue;
                linear.push_back(i);
                m.push_back(mm);
                t.push_back(tt);
                p.push_back(pp);
            }
        }
    }
}

}  // namespace bckl
