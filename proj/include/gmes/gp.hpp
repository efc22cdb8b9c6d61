#pragma once

#include "gmes/types.hpp"

#include <Eigen/Cholesky>

#include <cstddef>

namespace gmes {

/// Matérn-3/2 covariance plus white observation noise.
///
/// k(x, x') = signal_variance * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l),
/// r = |x - x'|. Every Gram matrix is factorized with
/// (noise_variance + jitter) on the diagonal.
struct KernelSpec {
    double length_scale = 1.0;
    double signal_variance = 1.0;
    double noise_variance = 0.01;
    double jitter = 1e-8;

    /// Regularization actually added to Gram diagonals.
    double diagonal_noise() const { return noise_variance + jitter; }

    /// Posterior variances below -variance_floor() are treated as bugs.
    double variance_floor() const { return 1e-9 * signal_variance; }

    void validate() const;
};

double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& x2);

/// Gradient of k(x, x2) with respect to x.
Vector kernel_gradient(const KernelSpec& spec, const Vector& x, const Vector& x2);

/// Observed locations (rows of `points`) and their scalar values.
class Dataset {
public:
    explicit Dataset(std::size_t dim = 0) : points_(0, static_cast<Eigen::Index>(dim)) {}
    Dataset(Matrix points, Vector values);

    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
    bool empty() const { return size() == 0; }

    const Matrix& points() const { return points_; }
    const Vector& values() const { return values_; }
    Vector point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }

    void append(const Vector& x, double y);
    void append(const QueryBatch& batch, const Vector& ys);

    /// Throws DomainError if any point lies outside `box`.
    void check_inside(const DomainBox& box) const;

private:
    Matrix points_;
    Vector values_;
};

/// Fitted GP posterior. Immutable once constructed; all queries are const
/// and safe to call concurrently.
class GpPosterior {
public:
    /// (K_t + s^2 I)^{-1} y_t.
    const Vector& alpha() const { return alpha_; }

    /// Batched prediction at the rows of a q x d matrix.
    struct Prediction {
        Vector mean;
        Vector var;       // clamped to >= 0
        Matrix mean_grad; // q x d, empty unless requested
        Matrix var_grad;  // q x d, empty unless requested
    };

    GpPosterior(KernelSpec kernel, Dataset data);

    const KernelSpec& kernel() const { return kernel_; }
    const Dataset& data() const { return data_; }
    std::size_t size() const { return data_.size(); }
    std::size_t dim() const { return data_.dim(); }

    double mean(const Vector& x) const;
    double var(const Vector& x) const;
    double cov(const Vector& x, const Vector& x2) const;

    /// Posterior covariance block Sigma_t(A, B) between the rows of a and b.
    Matrix cov(const Matrix& a, const Matrix& b) const;

    Prediction predict(const Matrix& pts, bool with_gradient) const;
    /// Mean (and its gradient) only; var and var_grad are left empty.
    Prediction predict_mean(const Matrix& pts, bool with_gradient) const;

    /// k_t(x) for every row of pts: an n x q matrix.
    Matrix kernel_columns(const Matrix& pts) const;
    /// L^{-1} B where L L^T = K + (noise + jitter) I.
    Matrix solve_lower(Matrix b) const;
    /// L^{-T} B, so solve_upper(solve_lower(B)) = (K + (noise + jitter) I)^{-1} B.
    Matrix solve_upper(Matrix b) const;
    /// (K + (noise + jitter) I)^{-1} B.
    Matrix solve(const Matrix& b) const;

    /// Sum_r w_r * grad_x k(x, X_r), the Jacobian-transpose product used by
    /// every posterior gradient.
    Vector weighted_kernel_gradient(const Vector& x, const Eigen::Ref<const Vector>& w) const;

    /// Applies the variance floor: returns max(v, 0) or throws DomainError.
    double clamp_variance(double v) const;

private:
    KernelSpec kernel_;
    Dataset data_;
    Eigen::LLT<Matrix> factor_;
    Vector alpha_;
};

GpPosterior fit_posterior(const KernelSpec& kernel, const Dataset& data);

double posterior_mean(const GpPosterior& gp, const Vector& x);
double posterior_var(const GpPosterior& gp, const Vector& x);
double posterior_cov(const GpPosterior& gp, const Vector& x, const Vector& x2);

/// [Sigma_t(x, x^1), ..., Sigma_t(x, x^m)].
Vector cross_cov(const GpPosterior& gp, const Vector& x, const QueryBatch& batch);

/// m x m posterior covariance of the batch, diagonal clamped.
Matrix batch_cov(const GpPosterior& gp, const QueryBatch& batch);

}  // namespace gmes
