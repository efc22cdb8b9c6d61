#include "gmes/types.hpp"

#include "gmes/errors.hpp"

#include <limits>
#include <string>

namespace gmes {

DomainBox::DomainBox(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) { validate(); }

DomainBox DomainBox::unit(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return DomainBox(Vector::Zero(d), Vector::Ones(d));
}

bool DomainBox::contains(const Vector& x, double tol) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] < lower[j] - tol || x[j] > upper[j] + tol) return false;
    }
    return true;
}

Vector DomainBox::clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

void DomainBox::validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) {
        throw DomainError("domain box: lower/upper must be non-empty and of equal dimension");
    }
    for (Eigen::Index j = 0; j < lower.size(); ++j) {
        if (!(lower[j] < upper[j])) {
            throw DomainError("domain box: lower[" + std::to_string(j) + "] must be < upper");
        }
    }
}

double QueryBatch::min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
            best = std::min(best, (points.row(i) - points.row(j)).norm());
        }
    }
    return best;
}

bool QueryBatch::inside(const DomainBox& box, double tol) const {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        if (!box.contains(points.row(i).transpose(), tol)) return false;
    }
    return true;
}

}  // namespace gmes
