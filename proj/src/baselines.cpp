#include "gmes/baselines.hpp"

#include "gmes/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace gmes {

namespace {

constexpr std::uint64_t kCandidateStream = 0x43414e44;
constexpr std::uint64_t kThompsonStream = 0x54532d50;

// Posterior variance over a fixed candidate set, conditioned one point at a
// time. Each added point p contributes a rank-one term u(C) = cov(C, p) /
// sqrt(var(p) + noise), where cov and var are already conditioned on the
// earlier points.
class SequentialConditioner {
public:
    SequentialConditioner(const GpPosterior& gp, const Matrix& candidates) : gp_(gp), candidates_(candidates) {
        const double sf = gp.kernel().signal_variance;
        mean_ = Vector::Zero(candidates.rows());
        var_ = Vector::Constant(candidates.rows(), sf);
        if (gp.size() == 0) return;
        const Matrix kc = gp.kernel_columns(candidates);
        mean_.noalias() = kc.transpose() * gp.alpha();
        vc_ = gp.solve_lower(kc);
        for (Eigen::Index i = 0; i < candidates.rows(); ++i) var_[i] = gp.clamp_variance(sf - vc_.col(i).squaredNorm());
    }

    const Vector& mean() const { return mean_; }
    const Vector& variance() const { return var_; }

    void add(const Vector& p) {
        const KernelSpec& ks = gp_.kernel();
        const auto n_cand = candidates_.rows();
        Vector vp;
        if (gp_.size() > 0) vp = gp_.solve_lower(gp_.kernel_columns(p.transpose())).col(0);

        Vector cov_c(n_cand);
        for (Eigen::Index i = 0; i < n_cand; ++i) cov_c[i] = kernel_eval(ks, candidates_.row(i).transpose(), p);
        double var_p = ks.signal_variance;
        if (gp_.size() > 0) {
            cov_c.noalias() -= vc_.transpose() * vp;
            var_p -= vp.squaredNorm();
        }

        const std::size_t k = points_.size();
        Vector up(static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) {
            double c = kernel_eval(ks, p, points_[i]);
            if (gp_.size() > 0) c -= vp.dot(vps_[i]);
            for (std::size_t l = 0; l < i; ++l) c -= up[static_cast<Eigen::Index>(l)] * ups_[i][static_cast<Eigen::Index>(l)];
            up[static_cast<Eigen::Index>(i)] = c / scales_[i];
        }
        for (std::size_t i = 0; i < k; ++i) cov_c -= up[static_cast<Eigen::Index>(i)] * u_[i];
        var_p -= up.squaredNorm();

        const double s = std::sqrt(std::max(var_p, 0.0) + ks.diagonal_noise());
        Vector u = cov_c / s;
        var_ -= u.cwiseAbs2();
        for (Eigen::Index i = 0; i < n_cand; ++i) var_[i] = std::max(var_[i], 0.0);

        points_.push_back(p);
        vps_.push_back(vp);
        ups_.push_back(up);
        scales_.push_back(s);
        u_.push_back(std::move(u));
    }

private:
    const GpPosterior& gp_;
    Matrix candidates_;
    Vector mean_;
    Vector var_;
    Matrix vc_;
    std::vector<Vector> points_;
    std::vector<Vector> vps_;
    std::vector<Vector> ups_;
    std::vector<double> scales_;
    std::vector<Vector> u_;
};

Eigen::Index argmax_first(const Vector& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

Matrix append_row(const Matrix& a, const Vector& row) {
    Matrix out(a.rows() + 1, a.cols());
    out.topRows(a.rows()) = a;
    out.row(a.rows()) = row.transpose();
    return out;
}

void check_inputs(const GpPosterior& gp, const DomainBox& box, std::size_t m, const BaselineConfig& cfg) {
    cfg.validate();
    box.validate();
    if (m < 1) throw DomainError("baseline selection: agent count must be >= 1");
    if (gp.size() > 0 && gp.data().dim() != box.dim()) throw DomainError("baseline selection: dimension mismatch");
}

Rng candidate_rng(const GpPosterior& gp, int t, const BaselineConfig& cfg, std::uint64_t stream) {
    return make_rng(cfg.rng_seed, {static_cast<std::uint64_t>(gp.size()), static_cast<std::uint64_t>(t), stream});
}

}  // namespace

void BaselineConfig::validate() const {
    std::string problems;
    if (candidate_grid_resolution < 16) problems += " candidate_grid_resolution must be >= 16;";
    if (ucb_restarts < 1) problems += " ucb_restarts must be >= 1;";
    if (ucb_iters < 0) problems += " ucb_iters must be >= 0;";
    if (beta.initial < 0.0) problems += " beta.initial must be >= 0;";
    if (!problems.empty()) throw ConfigError("baseline config:" + problems);
}

GmesConfig BaselineConfig::ucb_config() const {
    GmesConfig g;
    g.beta = beta;
    g.restarts = ucb_restarts;
    g.ucb_iters = ucb_iters;
    g.grid_resolution = ucb_grid_resolution;
    g.rng_seed = rng_seed;
    return g;
}

Matrix candidate_points(const DomainBox& box, int resolution, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(box.dim());
    const auto g = static_cast<Eigen::Index>(resolution);
    if (d <= 2) {
        const Eigen::Index total = d == 1 ? g : g * g;
        Matrix pts(total, d);
        for (Eigen::Index idx = 0; idx < total; ++idx) {
            Eigen::Index rem = idx;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double frac = static_cast<double>(rem % g) / static_cast<double>(g - 1);
                pts(idx, j) = box.lower[j] + frac * (box.upper[j] - box.lower[j]);
                rem /= g;
            }
        }
        return pts;
    }
    Matrix pts(g * g, d);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = uniform_in_box(box, rng).transpose();
    return pts;
}

Vector conditioned_variance(const GpPosterior& gp, const Matrix& candidates, const Matrix& chosen) {
    SequentialConditioner cond(gp, candidates);
    for (Eigen::Index i = 0; i < chosen.rows(); ++i) cond.add(chosen.row(i).transpose());
    return cond.variance();
}

QueryBatch ucb_pe_select(const GpPosterior& gp, int t, const DomainBox& box, std::size_t m, const BaselineConfig& cfg) {
    check_inputs(gp, box, m, cfg);
    const Vector first = find_x_ucb(gp, cfg.beta(t), box, cfg.ucb_config());
    Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(box.dim()));
    out.row(0) = first.transpose();
    if (m == 1) return QueryBatch(out);

    Rng rng = candidate_rng(gp, t, cfg, kCandidateStream);
    const Matrix cands = candidate_points(box, cfg.candidate_grid_resolution, rng);
    SequentialConditioner cond(gp, cands);
    cond.add(first);
    for (std::size_t k = 1; k < m; ++k) {
        const Vector p = cands.row(argmax_first(cond.variance())).transpose();
        out.row(static_cast<Eigen::Index>(k)) = p.transpose();
        if (k + 1 < m) cond.add(p);
    }
    return QueryBatch(out);
}

QueryBatch bucb_select(const GpPosterior& gp, int t, const DomainBox& box, std::size_t m, const BaselineConfig& cfg) {
    check_inputs(gp, box, m, cfg);
    const double beta = cfg.beta(t);
    const Vector first = find_x_ucb(gp, beta, box, cfg.ucb_config());
    Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(box.dim()));
    out.row(0) = first.transpose();
    if (m == 1) return QueryBatch(out);

    Rng rng = candidate_rng(gp, t, cfg, kCandidateStream);
    // The continuous UCB maximizer joins the candidates so that beta = 0
    // returns it for every agent.
    const Matrix cands = append_row(candidate_points(box, cfg.candidate_grid_resolution, rng), first);
    SequentialConditioner cond(gp, cands);
    cond.add(first);
    for (std::size_t k = 1; k < m; ++k) {
        const Vector score = cond.mean() + beta * cond.variance().cwiseSqrt();
        const Vector p = cands.row(argmax_first(score)).transpose();
        out.row(static_cast<Eigen::Index>(k)) = p.transpose();
        if (k + 1 < m) cond.add(p);
    }
    return QueryBatch(out);
}

std::vector<Eigen::Index> sample_path_argmax(const GpPosterior& gp, const Matrix& candidates, std::size_t count,
                                             Rng& rng) {
    const auto n = candidates.rows();
    if (n < 1) throw DomainError("sample_path_argmax: empty candidate set");
    const KernelSpec& ks = gp.kernel();
    Matrix cov(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) cov(i, j) = kernel_eval(ks, candidates.row(i).transpose(), candidates.row(j).transpose());
    }
    Vector mean = Vector::Zero(n);
    if (gp.size() > 0) {
        const Matrix kc = gp.kernel_columns(candidates);
        mean.noalias() = kc.transpose() * gp.alpha();
        const Matrix v = gp.solve_lower(kc);
        cov.selfadjointView<Eigen::Lower>().rankUpdate(v.transpose(), -1.0);
    }

    double jitter = 1e-10 * gp.kernel().signal_variance;
    Eigen::LLT<Matrix> llt;
    bool ok = false;
    for (int attempt = 0; attempt <= 3 && !ok; ++attempt, jitter *= 2.0) {
        Matrix c = cov;
        c.diagonal().array() += jitter;
        llt.compute(c);  // reads the lower triangle only
        ok = llt.info() == Eigen::Success;
    }
    if (!ok) throw FactorizationError("sample_path_argmax: candidate covariance not positive definite after jitter");

    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(n, static_cast<Eigen::Index>(count));
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) z(i, j) = normal(rng);
    }
    Matrix paths = llt.matrixL() * z;
    paths.colwise() += mean;
    std::vector<Eigen::Index> out(count);
    for (std::size_t j = 0; j < count; ++j) out[j] = argmax_first(paths.col(static_cast<Eigen::Index>(j)));
    return out;
}

QueryBatch thompson_select(const GpPosterior& gp, int t, const DomainBox& box, std::size_t m,
                           const BaselineConfig& cfg) {
    check_inputs(gp, box, m, cfg);
    Rng rng = candidate_rng(gp, t, cfg, kThompsonStream);
    const auto d = box.dim();
    const Eigen::Index per_dim = cfg.candidate_grid_resolution;
    const Eigen::Index count = d == 1 ? per_dim : per_dim * per_dim;
    Matrix cands(count, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < count; ++i) cands.row(i) = uniform_in_box(box, rng).transpose();
    if (count < static_cast<Eigen::Index>(m)) throw DomainError("thompson_select: fewer candidates than agents");

    const auto idx = sample_path_argmax(gp, cands, m, rng);
    Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < m; ++k) out.row(static_cast<Eigen::Index>(k)) = cands.row(idx[k]);
    return QueryBatch(out);
}

}  // namespace gmes
