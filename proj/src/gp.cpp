#include "gmes/gp.hpp"

#include "gmes/errors.hpp"

#include <cmath>
#include <string>

namespace gmes {

namespace {

const double kSqrt3 = std::sqrt(3.0);

// k as a function of distance.
inline double matern32(double s, double a, double r) {
    const double ar = a * r;
    return s * (1.0 + ar) * std::exp(-ar);
}

// grad_x k(x, x2) = -s a^2 exp(-a r) (x - x2); this factor multiplies (x - x2).
inline double matern32_grad_factor(double s, double a, double r) { return -s * a * a * std::exp(-a * r); }

}  // namespace

void KernelSpec::validate() const {
    if (!(length_scale > 0.0)) throw DomainError("kernel: length_scale must be > 0");
    if (!(signal_variance > 0.0)) throw DomainError("kernel: signal_variance must be > 0");
    if (!(noise_variance >= 0.0)) throw DomainError("kernel: noise_variance must be >= 0");
    if (!(jitter > 0.0)) throw DomainError("kernel: jitter must be > 0");
}

double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& x2) {
    return matern32(spec.signal_variance, kSqrt3 / spec.length_scale, (x - x2).norm());
}

Vector kernel_gradient(const KernelSpec& spec, const Vector& x, const Vector& x2) {
    const Vector diff = x - x2;
    return matern32_grad_factor(spec.signal_variance, kSqrt3 / spec.length_scale, diff.norm()) * diff;
}

Dataset::Dataset(Matrix points, Vector values) : points_(std::move(points)), values_(std::move(values)) {
    if (points_.rows() != values_.size()) {
        throw DomainError("dataset: " + std::to_string(points_.rows()) + " points but " +
                          std::to_string(values_.size()) + " values");
    }
}

void Dataset::append(const Vector& x, double y) {
    if (points_.cols() == 0 && points_.rows() == 0) points_.resize(0, x.size());
    if (x.size() != points_.cols()) throw DomainError("dataset: point dimension mismatch");
    const Eigen::Index n = points_.rows();
    points_.conservativeResize(n + 1, Eigen::NoChange);
    points_.row(n) = x.transpose();
    values_.conservativeResize(n + 1);
    values_[n] = y;
}

void Dataset::append(const QueryBatch& batch, const Vector& ys) {
    if (static_cast<Eigen::Index>(batch.size()) != ys.size()) {
        throw DomainError("dataset: batch/value count mismatch");
    }
    for (std::size_t i = 0; i < batch.size(); ++i) append(batch.point(i), ys[static_cast<Eigen::Index>(i)]);
}

void Dataset::check_inside(const DomainBox& box) const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!box.contains(point(i), 1e-12)) {
            throw DomainError("dataset: point " + std::to_string(i) + " outside the domain box");
        }
    }
}

GpPosterior::GpPosterior(KernelSpec kernel, Dataset data) : kernel_(kernel), data_(std::move(data)) {
    kernel_.validate();
    const auto n = static_cast<Eigen::Index>(data_.size());
    if (n == 0) {
        alpha_.resize(0);
        return;
    }
    Matrix gram = kernel_columns(data_.points());
    gram.diagonal().array() += kernel_.diagonal_noise();
    factor_.compute(gram);
    if (factor_.info() != Eigen::Success) {
        throw FactorizationError("Gram matrix of " + std::to_string(n) +
                                 " points is not positive definite (duplicate points with zero noise?)");
    }
    alpha_ = factor_.solve(data_.values());
    if (!alpha_.allFinite()) throw FactorizationError("Gram solve produced non-finite weights");
}

Matrix GpPosterior::kernel_columns(const Matrix& pts) const {
    const Matrix& X = data_.points();
    const double s = kernel_.signal_variance;
    const double a = kSqrt3 / kernel_.length_scale;
    Matrix out(X.rows(), pts.rows());
    for (Eigen::Index q = 0; q < pts.rows(); ++q) {
        const Eigen::ArrayXd ar = a * (X.rowwise() - pts.row(q)).rowwise().norm().array();
        out.col(q) = s * (1.0 + ar) * (-ar).exp();
    }
    return out;
}

Matrix GpPosterior::solve_lower(Matrix b) const {
    if (size() == 0) return b;
    factor_.matrixL().solveInPlace(b);
    return b;
}

Matrix GpPosterior::solve_upper(Matrix b) const {
    if (size() == 0) return b;
    factor_.matrixU().solveInPlace(b);
    return b;
}

Matrix GpPosterior::solve(const Matrix& b) const {
    if (size() == 0) return b;
    return factor_.solve(b);
}

double GpPosterior::clamp_variance(double v) const {
    if (v >= 0.0) return v;
    if (v >= -kernel_.variance_floor()) return 0.0;
    throw DomainError("posterior variance " + std::to_string(v) + " below the numerical floor");
}

double GpPosterior::mean(const Vector& x) const {
    if (size() == 0) return 0.0;
    return kernel_columns(x.transpose()).col(0).dot(alpha_);
}

double GpPosterior::var(const Vector& x) const { return clamp_variance(cov(x, x)); }

double GpPosterior::cov(const Vector& x, const Vector& x2) const {
    const double prior = kernel_eval(kernel_, x, x2);
    if (size() == 0) return prior;
    Matrix both(2, x.size());
    both.row(0) = x.transpose();
    both.row(1) = x2.transpose();
    const Matrix v = solve_lower(kernel_columns(both));
    return prior - v.col(0).dot(v.col(1));
}

Matrix GpPosterior::cov(const Matrix& a, const Matrix& b) const {
    const double s = kernel_.signal_variance;
    const double k = kSqrt3 / kernel_.length_scale;
    Matrix out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = matern32(s, k, (a.row(i) - b.row(j)).norm());
    }
    if (size() == 0) return out;
    const Matrix va = solve_lower(kernel_columns(a));
    if (&a == &b) {
        out.selfadjointView<Eigen::Lower>().rankUpdate(va.transpose(), -1.0);
        out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
        return out;
    }
    const Matrix vb = solve_lower(kernel_columns(b));
    out.noalias() -= va.transpose() * vb;
    return out;
}

Vector GpPosterior::weighted_kernel_gradient(const Vector& x, const Eigen::Ref<const Vector>& w) const {
    const Matrix& X = data_.points();
    const double s = kernel_.signal_variance;
    const double a = kSqrt3 / kernel_.length_scale;
    // diff_r = x - X_r; sum_r w_r * factor(r) * diff_r
    const Matrix diff = (-X).rowwise() + x.transpose();
    const Eigen::ArrayXd f = -s * a * a * (-a * diff.rowwise().norm().array()).exp();
    return diff.transpose() * (w.array() * f).matrix();
}

GpPosterior::Prediction GpPosterior::predict(const Matrix& pts, bool with_gradient) const {
    const Eigen::Index q = pts.rows();
    const Eigen::Index d = pts.cols();
    Prediction out;
    out.mean = Vector::Zero(q);
    out.var = Vector::Constant(q, kernel_.signal_variance);
    if (with_gradient) {
        out.mean_grad = Matrix::Zero(q, d);
        out.var_grad = Matrix::Zero(q, d);
    }
    if (size() == 0) return out;

    const Matrix ks = kernel_columns(pts);
    out.mean.noalias() = ks.transpose() * alpha_;
    Matrix v = ks;
    factor_.matrixL().solveInPlace(v);
    for (Eigen::Index i = 0; i < q; ++i) {
        out.var[i] = clamp_variance(kernel_.signal_variance - v.col(i).squaredNorm());
    }
    if (!with_gradient) return out;

    // d var / dx = -2 J(x)^T A^{-1} k_t(x)
    factor_.matrixU().solveInPlace(v);
    const Matrix& X = data_.points();
    const double s = kernel_.signal_variance;
    const double a = kSqrt3 / kernel_.length_scale;
    Matrix w(X.rows(), 2);
    w.col(0) = alpha_;
    for (Eigen::Index i = 0; i < q; ++i) {
        const Matrix diff = (-X).rowwise() + pts.row(i);
        const Eigen::ArrayXd f = -s * a * a * (-a * diff.rowwise().norm().array()).exp();
        w.col(1) = -2.0 * v.col(i);
        const Matrix g = (w.array().colwise() * f).matrix().transpose() * diff;
        out.mean_grad.row(i) = g.row(0);
        out.var_grad.row(i) = g.row(1);
    }
    return out;
}

GpPosterior::Prediction GpPosterior::predict_mean(const Matrix& pts, bool with_gradient) const {
    const Eigen::Index q = pts.rows();
    Prediction out;
    out.mean = Vector::Zero(q);
    if (with_gradient) out.mean_grad = Matrix::Zero(q, pts.cols());
    if (size() == 0) return out;
    out.mean.noalias() = kernel_columns(pts).transpose() * alpha_;
    if (with_gradient) {
        for (Eigen::Index i = 0; i < q; ++i) {
            out.mean_grad.row(i) = weighted_kernel_gradient(pts.row(i).transpose(), alpha_).transpose();
        }
    }
    return out;
}

GpPosterior fit_posterior(const KernelSpec& kernel, const Dataset& data) { return GpPosterior(kernel, data); }

double posterior_mean(const GpPosterior& gp, const Vector& x) { return gp.mean(x); }

double posterior_var(const GpPosterior& gp, const Vector& x) { return gp.var(x); }

double posterior_cov(const GpPosterior& gp, const Vector& x, const Vector& x2) {
    if (x == x2) return gp.var(x);
    return gp.cov(x, x2);
}

Vector cross_cov(const GpPosterior& gp, const Vector& x, const QueryBatch& batch) {
    Vector out = gp.cov(Matrix(x.transpose()), batch.points).row(0).transpose();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.point(i) == x) out[static_cast<Eigen::Index>(i)] = gp.clamp_variance(out[static_cast<Eigen::Index>(i)]);
    }
    return out;
}

Matrix batch_cov(const GpPosterior& gp, const QueryBatch& batch) {
    Matrix c = gp.cov(batch.points, batch.points);
    c = 0.5 * (c + c.transpose()).eval();
    for (Eigen::Index i = 0; i < c.rows(); ++i) c(i, i) = gp.clamp_variance(c(i, i));
    return c;
}

}  // namespace gmes
