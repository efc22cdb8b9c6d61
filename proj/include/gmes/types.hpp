#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace gmes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box domain. Points are column vectors of size dim().
struct DomainBox {
    Vector lower;
    Vector upper;

    DomainBox() = default;
    DomainBox(Vector lo, Vector hi);

    static DomainBox unit(std::size_t dim);

    std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
    bool contains(const Vector& x, double tol = 0.0) const;
    double diagonal() const { return (upper - lower).norm(); }
    Vector width() const { return upper - lower; }
    Vector clamp(const Vector& x) const;

    /// Throws DomainError unless lower < upper coordinatewise.
    void validate() const;
};

/// Ordered set of m query points, stored as the rows of an m x d matrix.
struct QueryBatch {
    Matrix points;

    QueryBatch() = default;
    explicit QueryBatch(Matrix pts) : points(std::move(pts)) {}

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
    Vector point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)).transpose(); }

    /// +inf for batches with fewer than two points.
    double min_pairwise_distance() const;
    bool inside(const DomainBox& box, double tol = 0.0) const;
};

}  // namespace gmes
