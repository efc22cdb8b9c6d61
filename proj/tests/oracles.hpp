#pragma once

// Test-only reference computations. Nothing here calls into the factored
// code paths it is used to check.

#include "gmes/gp.hpp"
#include "gmes/rng.hpp"

#include <Eigen/LU>

#include <cmath>
#include <functional>
#include <random>

namespace oracle {

using gmes::Matrix;
using gmes::Vector;

inline double matern(const gmes::KernelSpec& k, const Vector& a, const Vector& b) {
    const double r = std::sqrt((a - b).array().square().sum());
    const double z = std::sqrt(3.0) * r / k.length_scale;
    return k.signal_variance * (1.0 + z) * std::exp(-z);
}

/// Posterior mean/covariance by explicit dense inverse.
struct DenseGp {
    gmes::KernelSpec k;
    Matrix X;
    Vector y;
    Matrix inv;

    DenseGp(const gmes::KernelSpec& kernel, const Matrix& points, const Vector& values)
        : k(kernel), X(points), y(values) {
        const auto n = X.rows();
        Matrix K(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) K(i, j) = matern(k, X.row(i).transpose(), X.row(j).transpose());
        }
        K.diagonal().array() += k.noise_variance + k.jitter;
        inv = K.fullPivLu().inverse();
    }

    Vector kvec(const Vector& x) const {
        Vector v(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) v[i] = matern(k, X.row(i).transpose(), x);
        return v;
    }
    double mean(const Vector& x) const { return X.rows() == 0 ? 0.0 : kvec(x).dot(inv * y); }
    double cov(const Vector& a, const Vector& b) const {
        const double prior = matern(k, a, b);
        if (X.rows() == 0) return prior;
        return prior - kvec(a).dot(inv * kvec(b));
    }
};

/// Central finite-difference gradient of f over every entry of X.
inline Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& X, double h) {
    Matrix g(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            Matrix xp = X, xm = X;
            xp(i, j) += h;
            xm(i, j) -= h;
            g(i, j) = (f(xp) - f(xm)) / (2.0 * h);
        }
    }
    return g;
}

inline Matrix random_points(gmes::Rng& rng, Eigen::Index n, Eigen::Index d, double lo = 0.0, double hi = 1.0) {
    Matrix p(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) p(i, j) = lo + (hi - lo) * gmes::uniform01(rng);
    }
    return p;
}

inline Vector random_values(gmes::Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace oracle
