#include "gmes/acquisition.hpp"

#include "gmes/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace gmes {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kUcbStream = 0x5543421;
constexpr std::uint64_t kMeanStream = 0x4d45414e;
constexpr std::uint64_t kBatchStream = 0x42415443;

// Value and gradient of mu + beta * sigma at the rows of pts.
struct SurfaceValues {
    Vector value;
    Matrix grad;
};

SurfaceValues eval_surface(const GpPosterior& gp, const Matrix& pts, double beta, bool with_gradient) {
    SurfaceValues out;
    if (beta == 0.0) {
        auto pred = gp.predict_mean(pts, with_gradient);
        out.value = std::move(pred.mean);
        out.grad = std::move(pred.mean_grad);
        return out;
    }
    auto pred = gp.predict(pts, with_gradient);
    const Vector sigma = pred.var.cwiseSqrt();
    out.value = pred.mean + beta * sigma;
    if (with_gradient) {
        out.grad = pred.mean_grad;
        if (beta > 0.0) {
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                if (sigma[i] > 1e-12) out.grad.row(i) += (beta / (2.0 * sigma[i])) * pred.var_grad.row(i);
            }
        }
    }
    return out;
}

Matrix grid_points(const DomainBox& box, int resolution) {
    const auto d = static_cast<Eigen::Index>(box.dim());
    const auto g = static_cast<Eigen::Index>(std::max(resolution, 2));
    Eigen::Index total = 1;
    for (Eigen::Index j = 0; j < d; ++j) total *= g;
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

// Multi-start projected adaptive ascent on mu + beta * sigma followed by a
// backtracking polish of the incumbent. The incumbent is the best point ever
// evaluated, so the result dominates every start.
Vector maximize_surface(const GpPosterior& gp, double beta, const DomainBox& box, const GmesConfig& cfg,
                        std::uint64_t stream) {
    box.validate();
    const auto d = static_cast<Eigen::Index>(box.dim());
    Rng rng = make_rng(cfg.rng_seed, {static_cast<std::uint64_t>(gp.size()), stream});

    Vector best_x = box.clamp(0.5 * (box.lower + box.upper));
    double best_val = -std::numeric_limits<double>::infinity();
    auto consider = [&](const Matrix& pts, const Vector& vals) {
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            if (vals[i] > best_val) {
                best_val = vals[i];
                best_x = pts.row(i).transpose();
            }
        }
    };

    std::vector<Vector> starts;
    if (d <= 2 && cfg.grid_resolution > 1) {
        const Matrix grid = grid_points(box, cfg.grid_resolution);
        const SurfaceValues gv = eval_surface(gp, grid, beta, false);
        consider(grid, gv.value);
        starts.push_back(best_x);
    }

    const int n_random = cfg.restarts / 2;
    const int n_seeded = cfg.restarts - n_random;
    for (int i = 0; i < n_random; ++i) starts.push_back(uniform_in_box(box, rng));
    if (gp.size() > 0) {
        const Vector& y = gp.data().values();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(y.size()));
        std::iota(order.begin(), order.end(), 0);
        const auto take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(n_seeded));
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&y](Eigen::Index a, Eigen::Index b) { return y[a] > y[b] || (y[a] == y[b] && a < b); });
        for (std::size_t i = 0; i < take; ++i) starts.push_back(box.clamp(gp.data().point(static_cast<std::size_t>(order[i]))));
    }
    while (starts.size() < static_cast<std::size_t>(cfg.restarts) + (d <= 2 ? 1u : 0u)) {
        starts.push_back(uniform_in_box(box, rng));
    }

    Matrix x(static_cast<Eigen::Index>(starts.size()), d);
    for (std::size_t i = 0; i < starts.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = starts[i].transpose();

    const double step = cfg.step.resolve(box);
    const double b1 = cfg.step.beta1;
    const double b2 = cfg.step.beta2;
    const double merge_tol = 1e-4 * box.diagonal();
    const double still_tol = 1e-7 * box.diagonal();
    const double stall_tol = 1e-6 * gp.kernel().signal_variance;
    double checkpoint = best_val;
    Matrix m1 = Matrix::Zero(x.rows(), d);
    Matrix m2 = Matrix::Zero(x.rows(), d);
    for (int k = 1; k <= cfg.ucb_iters && x.rows() > 0; ++k) {
        const SurfaceValues sv = eval_surface(gp, x, beta, true);
        consider(x, sv.value);
        m1 = b1 * m1 + (1.0 - b1) * sv.grad;
        m2 = b2 * m2 + (1.0 - b2) * sv.grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1, k);
        const double c2 = 1.0 - std::pow(b2, k);
        // Decaying schedule so late iterations refine rather than orbit.
        const double lr = step / (1.0 + 0.05 * k);
        const Matrix dir = (m1 / c1).array() / ((m2 / c2).cwiseSqrt().array() + cfg.step.epsilon);
        const Matrix before = x;
        x += lr * dir;
        for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = box.clamp(x.row(i).transpose()).transpose();
        if ((x - before).rowwise().norm().maxCoeff() < still_tol) break;
        // Adam keeps stepping at roughly lr per coordinate, so also stop once
        // the incumbent has stagnated; the polish below refines it.
        if (k % 10 == 0) {
            if (best_val - checkpoint <= stall_tol) break;
            checkpoint = best_val;
        }

        // Starts that have merged follow the same path from here on; keep
        // the lowest-index one.
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            bool dup = false;
            for (Eigen::Index j : keep) {
                if ((x.row(i) - x.row(j)).norm() < merge_tol) {
                    dup = true;
                    break;
                }
            }
            if (!dup) keep.push_back(i);
        }
        if (static_cast<Eigen::Index>(keep.size()) < x.rows()) {
            Matrix nx(static_cast<Eigen::Index>(keep.size()), d), n1(nx.rows(), d), n2(nx.rows(), d);
            for (std::size_t i = 0; i < keep.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                nx.row(r) = x.row(keep[i]);
                n1.row(r) = m1.row(keep[i]);
                n2.row(r) = m2.row(keep[i]);
            }
            x = std::move(nx);
            m1 = std::move(n1);
            m2 = std::move(n2);
        }
    }
    if (x.rows() > 0) consider(x, eval_surface(gp, x, beta, false).value);

    // Backtracking polish on the incumbent.
    double h = 0.1 * step;
    const double h_min = 1e-12 * box.diagonal();
    for (int it = 0; it < 200 && h > h_min; ++it) {
        const SurfaceValues sv = eval_surface(gp, best_x.transpose(), beta, true);
        const Vector g = sv.grad.row(0).transpose();
        const double gn = g.norm();
        if (!(gn > 0.0)) break;
        const Vector cand = box.clamp(best_x + (h / gn) * g);
        const double val = eval_surface(gp, cand.transpose(), beta, false).value[0];
        if (val > best_val) {
            best_val = val;
            best_x = cand;
            h *= 1.5;
        } else {
            h *= 0.5;
        }
    }
    return best_x;
}

// Everything gamma and its gradient need, evaluated once.
struct GammaParts {
    double value = 0.0;
    Vector a;          // (Sigma(X,X) + s^2 I)^{-1} Sigma(X, x)
    Matrix v;          // L^{-1} k_t([x, X]), n x (m + 1)
};

GammaParts gamma_parts(const GpPosterior& gp, const QueryBatch& batch, const Vector& x) {
    const auto m = static_cast<Eigen::Index>(batch.size());
    if (m == 0) throw DomainError("gamma: empty batch");
    if (static_cast<std::size_t>(x.size()) != batch.dim()) throw DomainError("gamma: dimension mismatch");
    const KernelSpec& ks = gp.kernel();

    Matrix pts(m + 1, x.size());
    pts.row(0) = x.transpose();
    pts.bottomRows(m) = batch.points;

    Matrix sigma(m + 1, m + 1);
    for (Eigen::Index i = 0; i <= m; ++i) {
        for (Eigen::Index j = i; j <= m; ++j) {
            sigma(i, j) = kernel_eval(ks, pts.row(i).transpose(), pts.row(j).transpose());
            sigma(j, i) = sigma(i, j);
        }
    }
    GammaParts out;
    if (gp.size() > 0) {
        out.v = gp.solve_lower(gp.kernel_columns(pts));
        sigma.noalias() -= out.v.transpose() * out.v;
    }
    const double var_x = gp.clamp_variance(sigma(0, 0));
    const Vector c = sigma.row(0).tail(m).transpose();
    Matrix s = sigma.bottomRightCorner(m, m);
    s = 0.5 * (s + s.transpose()).eval();
    for (Eigen::Index i = 0; i < m; ++i) s(i, i) = gp.clamp_variance(s(i, i)) + ks.diagonal_noise();
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        throw FactorizationError("gamma: batch covariance not positive definite (coincident points with zero noise?)");
    }
    out.a = llt.solve(c);
    out.value = std::clamp(c.dot(out.a), 0.0, var_x);
    return out;
}

Matrix gamma_gradient_from(const GpPosterior& gp, const QueryBatch& batch, const Vector& x, const GammaParts& parts) {
    const KernelSpec& ks = gp.kernel();
    const auto m = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index d = x.size();

    // w = A^{-1} k_t(x) - A^{-1} k_t(X) a
    Vector w;
    if (gp.size() > 0) {
        const Matrix wcols = gp.solve_upper(parts.v);
        w = wcols.col(0) - wcols.rightCols(m) * parts.a;
    }

    Matrix grad(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Vector xi = batch.points.row(i).transpose();
        Vector term = kernel_gradient(ks, xi, x);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (k == i) continue;
            term -= parts.a[k] * kernel_gradient(ks, xi, batch.points.row(k).transpose());
        }
        if (gp.size() > 0) term -= gp.weighted_kernel_gradient(xi, w);
        grad.row(i) = (2.0 * parts.a[i]) * term.transpose();
    }
    return grad;
}

bool separated(const QueryBatch& batch, double r_div) {
    return batch.size() < 2 || batch.min_pairwise_distance() > r_div;
}

QueryBatch init_around(const Vector& center, std::size_t m, double radius, double r_div, const DomainBox& box) {
    const auto d = center.size();
    Matrix pts(static_cast<Eigen::Index>(m), d);
    if (m == 1) {
        pts.row(0) = center.transpose();
        return QueryBatch(pts);
    }
    if (d == 1) {
        const double spacing = std::max(2.0 * radius / static_cast<double>(m - 1), 1.05 * r_div);
        for (std::size_t i = 0; i < m; ++i) {
            pts(static_cast<Eigen::Index>(i), 0) = center[0] + (static_cast<double>(i) - 0.5 * static_cast<double>(m - 1)) * spacing;
        }
    } else {
        const double chord = 2.0 * std::sin(kPi / static_cast<double>(m));
        const double rho = std::max(radius, 1.05 * r_div / chord);
        for (std::size_t i = 0; i < m; ++i) {
            const double ang = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(m);
            Vector p = center;
            p[0] += rho * std::cos(ang);
            p[1] += rho * std::sin(ang);
            pts.row(static_cast<Eigen::Index>(i)) = p.transpose();
        }
    }
    return project_box(QueryBatch(pts), box);
}

}  // namespace

double BetaSchedule::operator()(int t) const { return std::max(0.0, initial - slope * static_cast<double>(t)); }

double StepRule::resolve(const DomainBox& box) const {
    if (base_step > 0.0) return base_step;
    return 0.05 * box.diagonal() / std::sqrt(static_cast<double>(box.dim()));
}

void GmesConfig::validate() const {
    std::string problems;
    if (ascent_iters < 1) problems += " ascent_iters must be >= 1;";
    if (!(barrier_scale > 0.0)) problems += " barrier_scale must be > 0;";
    if (!(r_div >= 0.0)) problems += " r_div must be >= 0;";
    if (restarts < 1) problems += " restarts must be >= 1;";
    if (ucb_iters < 0) problems += " ucb_iters must be >= 0;";
    if (batch_restarts < 1) problems += " batch_restarts must be >= 1;";
    if (beta.initial < 0.0) problems += " beta.initial must be >= 0;";
    if (!(step.beta1 >= 0.0 && step.beta1 < 1.0 && step.beta2 >= 0.0 && step.beta2 < 1.0)) {
        problems += " step decay rates must lie in [0, 1);";
    }
    if (!(step.epsilon > 0.0)) problems += " step.epsilon must be > 0;";
    if (!problems.empty()) throw ConfigError("gmes config:" + problems);
}

double ucb_value(const GpPosterior& gp, const Vector& x, double beta) {
    return gp.mean(x) + beta * std::sqrt(gp.var(x));
}

Vector find_x_ucb(const GpPosterior& gp, double beta, const DomainBox& box, const GmesConfig& cfg) {
    return maximize_surface(gp, beta, box, cfg, kUcbStream);
}

Vector find_mean_argmax(const GpPosterior& gp, const DomainBox& box, const GmesConfig& cfg) {
    return maximize_surface(gp, 0.0, box, cfg, kMeanStream);
}

double gamma(const GpPosterior& gp, const QueryBatch& batch, const Vector& x) {
    return gamma_parts(gp, batch, x).value;
}

Matrix gamma_gradient(const GpPosterior& gp, const QueryBatch& batch, const Vector& x) {
    return gamma_gradient_from(gp, batch, x, gamma_parts(gp, batch, x));
}

double log_barrier(const QueryBatch& batch, double r_div, double barrier_scale) {
    double total = 0.0;
    const auto m = static_cast<Eigen::Index>(batch.size());
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double gap = (batch.points.row(i) - batch.points.row(j)).norm() - r_div;
            if (!(gap > 0.0)) {
                throw DomainError("log barrier undefined: points " + std::to_string(i) + " and " + std::to_string(j) +
                                  " are within r_div");
            }
            total += std::max(0.0, -std::log(gap) / barrier_scale);
        }
    }
    return total;
}

Matrix log_barrier_gradient(const QueryBatch& batch, double r_div, double barrier_scale) {
    const auto m = static_cast<Eigen::Index>(batch.size());
    Matrix grad = Matrix::Zero(m, static_cast<Eigen::Index>(batch.dim()));
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const Eigen::RowVectorXd diff = batch.points.row(i) - batch.points.row(j);
            const double dist = diff.norm();
            const double gap = dist - r_div;
            if (!(gap > 0.0)) throw DomainError("log barrier gradient undefined: points within r_div");
            if (gap >= 1.0) continue;
            const Eigen::RowVectorXd g = (-1.0 / (barrier_scale * gap * dist)) * diff;
            grad.row(i) += g;
            grad.row(j) -= g;
        }
    }
    return grad;
}

QueryBatch project_box(const QueryBatch& batch, const DomainBox& box) {
    QueryBatch out = batch;
    for (Eigen::Index i = 0; i < out.points.rows(); ++i) {
        out.points.row(i) = box.clamp(out.points.row(i).transpose()).transpose();
    }
    return out;
}

double surrogate_mi(const GpPosterior& gp, const QueryBatch& batch, const Vector& x_ucb) {
    const double prior = gp.var(x_ucb);
    if (!(prior > 0.0)) throw DomainError("surrogate_mi: posterior variance at x_ucb is zero");
    const double post = prior - gamma(gp, batch, x_ucb);
    if (post <= 1e-12 * gp.kernel().signal_variance) {
        throw DomainError("surrogate_mi: conditioned variance below the numerical floor");
    }
    return 0.5 * std::log(prior / post);
}

QueryBatch sample_separated_batch(const DomainBox& box, std::size_t m, double r_div, Rng& rng) {
    Matrix pts(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(box.dim()));
    int attempts = 0;
    for (std::size_t i = 0; i < m;) {
        if (++attempts > 1000) {
            throw InitializationError("could not place " + std::to_string(m) + " points with separation " +
                                      std::to_string(r_div) + " in 1000 attempts");
        }
        const Vector cand = uniform_in_box(box, rng);
        bool ok = true;
        for (std::size_t j = 0; j < i && ok; ++j) {
            ok = (pts.row(static_cast<Eigen::Index>(j)).transpose() - cand).norm() > r_div;
        }
        if (ok) pts.row(static_cast<Eigen::Index>(i++)) = cand.transpose();
    }
    return QueryBatch(pts);
}

std::pair<QueryBatch, AcquisitionReport> gmes_select_batch(const GpPosterior& gp, int t, const DomainBox& box,
                                                           std::size_t m, const GmesConfig& cfg) {
    cfg.validate();
    box.validate();
    if (m < 1) throw DomainError("gmes_select_batch: agent count must be >= 1");

    const double beta = cfg.beta(t);
    const Vector x_ucb = find_x_ucb(gp, beta, box, cfg);
    Rng rng = make_rng(cfg.rng_seed, {static_cast<std::uint64_t>(gp.size()), static_cast<std::uint64_t>(t), kBatchStream});

    const bool barrier_on = cfg.use_barrier && m >= 2;
    const bool check_sep = m >= 2 && (barrier_on || cfg.r_div > 0.0);
    const double sep_limit = cfg.r_div + (barrier_on ? 1e-6 : 0.0);
    auto penalty = [&](const QueryBatch& X) { return barrier_on ? log_barrier(X, cfg.r_div, cfg.barrier_scale) : 0.0; };
    auto feasible = [&](const QueryBatch& X) { return !check_sep || separated(X, sep_limit); };

    const double step = cfg.step.resolve(box);
    const double b1 = cfg.step.beta1;
    const double b2 = cfg.step.beta2;
    const double radius = 0.5 * gp.kernel().length_scale;

    QueryBatch best;
    double best_val = -std::numeric_limits<double>::infinity();
    std::vector<double> best_trace;

    for (int r = 0; r < cfg.batch_restarts; ++r) {
        QueryBatch X;
        if (r == 0) {
            X = init_around(x_ucb, m, radius, sep_limit, box);
            if (!feasible(X)) X = sample_separated_batch(box, m, sep_limit, rng);
        } else {
            X = sample_separated_batch(box, m, sep_limit, rng);
        }
        GammaParts parts = gamma_parts(gp, X, x_ucb);
        double val = parts.value - penalty(X);
        std::vector<double> trace;
        trace.reserve(static_cast<std::size_t>(cfg.ascent_iters));
        Matrix m1 = Matrix::Zero(X.points.rows(), X.points.cols());
        Matrix m2 = m1;
        for (int k = 1; k <= cfg.ascent_iters; ++k) {
            Matrix g = gamma_gradient_from(gp, X, x_ucb, parts);
            if (barrier_on) g -= log_barrier_gradient(X, cfg.r_div, cfg.barrier_scale);
            m1 = b1 * m1 + (1.0 - b1) * g;
            m2 = b2 * m2 + (1.0 - b2) * g.cwiseAbs2();
            const double c1 = 1.0 - std::pow(b1, k);
            const double c2 = 1.0 - std::pow(b2, k);
            const Matrix dir = (m1 / c1).array() / ((m2 / c2).cwiseSqrt().array() + cfg.step.epsilon);
            double scale = 1.0;
            // Monotone fallback: halve and retry up to five times.
            for (int attempt = 0; attempt <= 5; ++attempt, scale *= 0.5) {
                QueryBatch cand = project_box(QueryBatch(X.points + (scale * step) * dir), box);
                if (!feasible(cand)) continue;
                GammaParts cand_parts = gamma_parts(gp, cand, x_ucb);
                const double cand_val = cand_parts.value - penalty(cand);
                if (cand_val >= val) {
                    X = std::move(cand);
                    parts = std::move(cand_parts);
                    val = cand_val;
                    break;
                }
            }
            trace.push_back(val);
        }
        if (val > best_val) {
            best_val = val;
            best = X;
            best_trace = std::move(trace);
        }
    }

    if (check_sep && !separated(best, cfg.r_div)) {
        throw DomainError("gmes_select_batch: returned batch violates r_div separation");
    }

    AcquisitionReport report;
    report.x_ucb = x_ucb;
    report.gamma_value = gamma(gp, best, x_ucb);
    try {
        report.surrogate_mi = surrogate_mi(gp, best, x_ucb);
    } catch (const DomainError&) {
        report.surrogate_mi = std::numeric_limits<double>::infinity();
    }
    report.ascent_trajectory = std::move(best_trace);
    return {best, report};
}

}  // namespace gmes
