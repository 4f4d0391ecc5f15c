#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <vsflqr/errors.hpp>
#include <vsflqr/losspen.hpp>

// Group descent for the penalized Huber-quantile (or squared) objective
//
//   (1/2n) sum_i loss(y_i - eta_i) + sum_b P(|beta_b|; lambda) + sum_j P(||alpha_j||; lambda sqrt(G_j)),
//
// lambda paths with warm starts, and (E)BIC model selection.
namespace vsflqr::solver {

using losspen::PenaltyKind;

enum class LossKind { HuberQuantile, Squared };

struct SolverConfig
{
    double tau = 0.5;
    double gamma = 0.2;
    double phi = 3.0;
    double lambda = 0.0;
    int max_iter = 10000;
    double tol = 1e-7;
    PenaltyKind penalty = PenaltyKind::MCP;
    LossKind loss = LossKind::HuberQuantile;

    void validate() const
    {
        if (loss == LossKind::HuberQuantile)
            losspen::LossParams{tau, gamma}.validate();
        else if (!(tau > 0.0 && tau < 1.0))
            throw validation_error("tau must lie in (0,1)");
        losspen::PenaltyParams{lambda, phi, penalty}.validate();
        if (!(tol > 0.0))
            throw validation_error("tol must be positive");
        if (max_iter < 1)
            throw validation_error("max_iter must be at least 1");
    }
};

/// Standardized design: centered unit-scale scalar columns and
/// (1/n)-orthonormal score groups, with the transforms needed to map
/// coefficients back to the caller's scale.
struct DesignBlocks
{
    Eigen::Index n = 0;
    Eigen::MatrixXd scalars;                 // n x B, standardized
    Eigen::VectorXd scalar_center;
    Eigen::VectorXd scalar_scale;
    std::vector<bool> scalar_zero_variance;

    std::vector<Eigen::MatrixXd> groups;     // n x G_j, (1/n) Xi^T Xi = I
    std::vector<Eigen::VectorXd> group_center;
    std::vector<Eigen::MatrixXd> group_transform;  // Q_j x G_j: alpha_original = T alpha_std
    std::vector<Eigen::Index> group_sizes;         // G_j after rank reduction

    Eigen::Index num_scalars() const { return scalars.cols(); }
    std::size_t num_groups() const { return groups.size(); }
};

inline DesignBlocks build_design(const Eigen::MatrixXd& scalars,
                                 const std::vector<Eigen::MatrixXd>& score_blocks)
{
    const Eigen::Index n = scalars.rows();
    if (n < 2)
        throw insufficient_data_error("build_design: need at least 2 observations");
    if (!scalars.allFinite())
        throw validation_error("build_design: non-finite scalar covariate");

    DesignBlocks d;
    d.n = n;
    const double dn = static_cast<double>(n);
    const Eigen::Index b = scalars.cols();
    d.scalars = scalars;
    d.scalar_center = scalars.colwise().mean().transpose();
    d.scalar_scale = Eigen::VectorXd::Ones(b);
    d.scalar_zero_variance.assign(static_cast<std::size_t>(b), false);
    for (Eigen::Index k = 0; k < b; ++k) {
        d.scalars.col(k).array() -= d.scalar_center[k];
        const double sd = std::sqrt(d.scalars.col(k).squaredNorm() / dn);
        if (sd <= 1e-10 * std::max(1.0, std::abs(d.scalar_center[k]))) {
            d.scalar_zero_variance[static_cast<std::size_t>(k)] = true;
            d.scalars.col(k).setZero();
        } else {
            d.scalar_scale[k] = sd;
            d.scalars.col(k) /= sd;
        }
    }

    for (std::size_t j = 0; j < score_blocks.size(); ++j) {
        const Eigen::MatrixXd& raw = score_blocks[j];
        if (raw.rows() != n)
            throw dimension_error("build_design: group " + std::to_string(j) +
                                  " has a mismatched number of rows");
        if (!raw.allFinite())
            throw validation_error("build_design: non-finite entry in group " + std::to_string(j));
        const Eigen::Index q = raw.cols();
        Eigen::VectorXd center = raw.colwise().mean().transpose();
        Eigen::MatrixXd centered = raw.rowwise() - center.transpose();
        Eigen::MatrixXd transform(q, 0);
        if (q > 0) {
            const Eigen::MatrixXd cross = centered.transpose() * centered / dn;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cross + cross.transpose()));
            const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
            // singular values of centered / sqrt(n) are sqrt(ev)
            const double smax = std::sqrt(ev.maxCoeff());
            std::vector<Eigen::Index> keep;
            for (Eigen::Index k = 0; k < q; ++k)
                if (smax > 0.0 && std::sqrt(ev[k]) >= 1e-10 * smax)
                    keep.push_back(k);
            const Eigen::Index g = static_cast<Eigen::Index>(keep.size());
            if (g == q) {
                // symmetric orthonormalization keeps an already orthonormal block unchanged
                transform = eig.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                            eig.eigenvectors().transpose();
            } else {
                transform.resize(q, g);
                // descending order for the retained directions
                for (Eigen::Index k = 0; k < g; ++k) {
                    const Eigen::Index src = keep[static_cast<std::size_t>(g - 1 - k)];
                    transform.col(k) = eig.eigenvectors().col(src) / std::sqrt(ev[src]);
                }
            }
        }
        d.groups.push_back(centered * transform);
        d.group_center.push_back(std::move(center));
        d.group_sizes.push_back(transform.cols());
        d.group_transform.push_back(std::move(transform));
    }
    return d;
}

/// Coefficients on the standardized scale (used for warm starts).
struct StandardizedCoefficients
{
    double intercept = 0.0;
    Eigen::VectorXd beta;
    std::vector<Eigen::VectorXd> alpha;
};

struct FitResult
{
    double intercept = 0.0;
    Eigen::VectorXd beta;
    std::vector<Eigen::VectorXd> alpha;
    std::vector<Eigen::Index> active_scalars;
    std::vector<std::size_t> active_groups;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
    double lambda = 0.0;
    StandardizedCoefficients standardized;

    std::size_t model_size() const { return active_scalars.size() + active_groups.size(); }

    /// Active scalars plus the full standardized dimension of every active group.
    std::size_t nonzero_coefficients() const
    {
        std::size_t df = active_scalars.size();
        for (auto j : active_groups)
            df += static_cast<std::size_t>(standardized.alpha.at(j).size());
        return df;
    }
};

inline double working_derivative(double r, const SolverConfig& cfg)
{
    return cfg.loss == LossKind::Squared ? r
                                         : losspen::huber_quantile_derivative(r, cfg.tau, cfg.gamma);
}

/// Upper bound on the per-block curvature of the smooth part; blocks have unit (1/n) Gram.
inline double curvature_bound(const SolverConfig& cfg)
{
    return cfg.loss == LossKind::Squared ? 1.0 : 1.0 / (2.0 * cfg.gamma);
}

inline double smooth_loss(const Eigen::VectorXd& r, const SolverConfig& cfg)
{
    const double n = static_cast<double>(r.size());
    double s = 0.0;
    if (cfg.loss == LossKind::Squared) {
        s = r.squaredNorm();
    } else {
        for (Eigen::Index i = 0; i < r.size(); ++i)
            s += losspen::huber_quantile_loss(r[i], cfg.tau, cfg.gamma);
    }
    return s / (2.0 * n);
}

inline Eigen::VectorXd linear_predictor(const DesignBlocks& d, const StandardizedCoefficients& c)
{
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(d.n, c.intercept);
    if (d.num_scalars() > 0)
        eta.noalias() += d.scalars * c.beta;
    for (std::size_t j = 0; j < d.groups.size(); ++j)
        if (d.group_sizes[j] > 0)
            eta.noalias() += d.groups[j] * c.alpha[j];
    return eta;
}

/// Penalized objective evaluated at standardized coefficients.
inline double objective(const DesignBlocks& d, const Eigen::VectorXd& y,
                        const StandardizedCoefficients& c, const SolverConfig& cfg,
                        PenaltyKind penalty)
{
    const Eigen::VectorXd r = y - linear_predictor(d, c);
    double value = smooth_loss(r, cfg);
    const losspen::PenaltyParams scalar_pen{cfg.lambda, cfg.phi, penalty};
    for (Eigen::Index k = 0; k < c.beta.size(); ++k)
        value += losspen::penalty(std::abs(c.beta[k]), scalar_pen);
    for (std::size_t j = 0; j < c.alpha.size(); ++j) {
        const losspen::PenaltyParams gp{cfg.lambda * std::sqrt(double(d.group_sizes[j])), cfg.phi,
                                        penalty};
        value += losspen::penalty(c.alpha[j].norm(), gp);
    }
    return value;
}

inline double objective(const DesignBlocks& d, const Eigen::VectorXd& y,
                        const StandardizedCoefficients& c, const SolverConfig& cfg)
{
    return objective(d, y, c, cfg, cfg.penalty);
}

inline StandardizedCoefficients zero_coefficients(const DesignBlocks& d)
{
    StandardizedCoefficients c;
    c.beta = Eigen::VectorXd::Zero(d.num_scalars());
    for (auto g : d.group_sizes)
        c.alpha.push_back(Eigen::VectorXd::Zero(g));
    return c;
}

namespace detail {

/// Blockwise majorize-minimize state. Each block step minimizes the
/// penalized quadratic majorizer with curvature L, which is the firm
/// (MCP) or soft (LASSO) threshold at (lambda / L, phi L).
class GroupDescent
{
public:
    GroupDescent(const DesignBlocks& d, const Eigen::VectorXd& y, const SolverConfig& cfg,
                 StandardizedCoefficients start)
        : d_(d), y_(y), cfg_(cfg), c_(std::move(start)),
          inv_n_(1.0 / static_cast<double>(d.n)), curv_(curvature_bound(cfg))
    {
        r_ = y_ - linear_predictor(d_, c_);
        if (!r_.allFinite())
            throw numerical_error("group descent: non-finite residuals at the starting point");
        deriv_.resize(d_.n);
        refresh_derivative();
        group_lambda_.resize(d_.num_groups());
        for (std::size_t j = 0; j < d_.num_groups(); ++j)
            group_lambda_[j] = cfg_.lambda * std::sqrt(double(d_.group_sizes[j]));
    }

    const StandardizedCoefficients& coefficients() const { return c_; }
    const Eigen::VectorXd& residual() const { return r_; }

    /// One sweep; returns the largest absolute coefficient change.
    double sweep(bool active_only)
    {
        double change = update_intercept();
        for (Eigen::Index k = 0; k < d_.num_scalars(); ++k) {
            if (d_.scalar_zero_variance[static_cast<std::size_t>(k)])
                continue;
            if (active_only && c_.beta[k] == 0.0)
                continue;
            change = std::max(change, update_scalar(k));
        }
        for (std::size_t j = 0; j < d_.num_groups(); ++j) {
            if (d_.group_sizes[j] == 0)
                continue;
            if (active_only && c_.alpha[j].isZero(0.0))
                continue;
            change = std::max(change, update_group(j));
        }
        return change;
    }

private:
    void refresh_derivative()
    {
        for (Eigen::Index i = 0; i < d_.n; ++i)
            deriv_[i] = working_derivative(r_[i], cfg_);
    }

    double threshold_scalar(double z, double lambda) const
    {
        if (cfg_.penalty == PenaltyKind::MCP)
            return losspen::firm_threshold(z, lambda / curv_, cfg_.phi * curv_);
        return losspen::soft_threshold(z, lambda / curv_);
    }

    double update_intercept()
    {
        const double step = deriv_.sum() * inv_n_ / curv_;
        if (!std::isfinite(step))
            throw numerical_error("group descent: non-finite update in the intercept");
        if (step == 0.0)
            return 0.0;
        c_.intercept += step;
        r_.array() -= step;
        refresh_derivative();
        return std::abs(step);
    }

    double update_scalar(Eigen::Index k)
    {
        const double old = c_.beta[k];
        const double z = old + d_.scalars.col(k).dot(deriv_) * inv_n_ / curv_;
        const double updated = threshold_scalar(z, cfg_.lambda);
        if (!std::isfinite(updated))
            throw numerical_error("group descent: non-finite update in scalar block " +
                                  std::to_string(k));
        const double delta = updated - old;
        if (delta == 0.0)
            return 0.0;
        c_.beta[k] = updated;
        r_.noalias() -= delta * d_.scalars.col(k);
        refresh_derivative();
        return std::abs(delta);
    }

    double update_group(std::size_t j)
    {
        const Eigen::MatrixXd& xi = d_.groups[j];
        Eigen::VectorXd& a = c_.alpha[j];
        Eigen::VectorXd z = a + (xi.transpose() * deriv_) * (inv_n_ / curv_);
        const double norm = z.norm();
        Eigen::VectorXd updated = Eigen::VectorXd::Zero(z.size());
        if (norm > 0.0) {
            const double shrunk = threshold_scalar(norm, group_lambda_[j]);
            if (shrunk != 0.0)
                updated = z * (shrunk / norm);
        }
        if (!updated.allFinite())
            throw numerical_error("group descent: non-finite update in group block " +
                                  std::to_string(j));
        const Eigen::VectorXd delta = updated - a;
        const double change = delta.cwiseAbs().maxCoeff();
        if (change == 0.0)
            return 0.0;
        a = updated;
        r_.noalias() -= xi * delta;
        refresh_derivative();
        return change;
    }

    const DesignBlocks& d_;
    const Eigen::VectorXd& y_;
    SolverConfig cfg_;
    StandardizedCoefficients c_;
    double inv_n_;
    double curv_;
    Eigen::VectorXd r_;
    Eigen::VectorXd deriv_;
    std::vector<double> group_lambda_;
};

inline void check_inputs(const DesignBlocks& d, const Eigen::VectorXd& y)
{
    if (y.size() != d.n)
        throw dimension_error("response length does not match the design");
    if (!y.allFinite())
        throw validation_error("response contains non-finite values");
}

inline void check_start(const DesignBlocks& d, const StandardizedCoefficients& c)
{
    if (c.beta.size() != d.num_scalars() || c.alpha.size() != d.num_groups())
        throw dimension_error("warm start does not match the design");
    for (std::size_t j = 0; j < c.alpha.size(); ++j)
        if (c.alpha[j].size() != d.group_sizes[j])
            throw dimension_error("warm start group size mismatch");
}

} // namespace detail

/// Maps standardized coefficients back to the caller's scale and fills active sets.
inline FitResult finalize(const DesignBlocks& d, const StandardizedCoefficients& c)
{
    FitResult f;
    f.standardized = c;
    f.beta = Eigen::VectorXd::Zero(d.num_scalars());
    f.intercept = c.intercept;
    for (Eigen::Index k = 0; k < d.num_scalars(); ++k) {
        if (c.beta[k] == 0.0)
            continue;
        f.beta[k] = c.beta[k] / d.scalar_scale[k];
        f.intercept -= f.beta[k] * d.scalar_center[k];
        f.active_scalars.push_back(k);
    }
    for (std::size_t j = 0; j < d.num_groups(); ++j) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(d.group_transform[j].rows());
        if (!c.alpha[j].isZero(0.0)) {
            a = d.group_transform[j] * c.alpha[j];
            f.intercept -= d.group_center[j].dot(a);
            f.active_groups.push_back(j);
        }
        f.alpha.push_back(std::move(a));
    }
    return f;
}

inline FitResult group_descent_fit(const DesignBlocks& d, const Eigen::VectorXd& y,
                                   const SolverConfig& cfg, StandardizedCoefficients start)
{
    cfg.validate();
    detail::check_inputs(d, y);
    detail::check_start(d, start);
    detail::GroupDescent gd(d, y, cfg, std::move(start));

    int iterations = 0;
    bool converged = false;
    while (iterations < cfg.max_iter) {
        const double full = gd.sweep(false);
        ++iterations;
        if (full <= cfg.tol) {
            converged = true;
            break;
        }
        // iterate on the current active set until it settles, then re-check all blocks
        while (iterations < cfg.max_iter) {
            const double partial = gd.sweep(true);
            ++iterations;
            if (partial <= cfg.tol)
                break;
        }
    }

    FitResult f = finalize(d, gd.coefficients());
    f.iterations = iterations;
    f.converged = converged;
    f.lambda = cfg.lambda;
    f.objective = objective(d, y, gd.coefficients(), cfg);
    return f;
}

inline FitResult group_descent_fit(const DesignBlocks& d, const Eigen::VectorXd& y,
                                   const SolverConfig& cfg)
{
    detail::check_inputs(d, y);
    StandardizedCoefficients start = zero_coefficients(d);
    start.intercept = y.mean();
    return group_descent_fit(d, y, cfg, std::move(start));
}

/// Largest coefficient change produced by one additional full sweep from a fit.
inline double one_sweep_change(const DesignBlocks& d, const Eigen::VectorXd& y,
                               const SolverConfig& cfg, const FitResult& fit)
{
    detail::GroupDescent gd(d, y, cfg, fit.standardized);
    return gd.sweep(false);
}

struct PathResult
{
    std::vector<double> lambdas;
    std::vector<FitResult> fits;
    std::vector<double> bic;
    std::vector<double> ebic;
    std::vector<bool> loss_floored;
    std::size_t selected = 0;
    double lambda_max = 0.0;

    const FitResult& selected_fit() const { return fits.at(selected); }
};

/// Unpenalized intercept-only fit of the configured loss.
inline FitResult null_fit(const DesignBlocks& d, const Eigen::VectorXd& y, SolverConfig cfg)
{
    DesignBlocks empty;
    empty.n = d.n;
    empty.scalars.resize(d.n, 0);
    empty.scalar_center.resize(0);
    empty.scalar_scale.resize(0);
    cfg.lambda = 0.0;
    FitResult f = group_descent_fit(empty, y, cfg);
    FitResult out = finalize(d, zero_coefficients(d));
    out.standardized.intercept = f.intercept;
    out.intercept = f.intercept;
    out.iterations = f.iterations;
    out.converged = f.converged;
    return out;
}

/// Smallest lambda at which the intercept-only working gradient is inside every threshold.
inline double lambda_max(const DesignBlocks& d, const Eigen::VectorXd& y, const SolverConfig& cfg)
{
    detail::check_inputs(d, y);
    const FitResult null = null_fit(d, y, cfg);
    Eigen::VectorXd deriv(d.n);
    for (Eigen::Index i = 0; i < d.n; ++i)
        deriv[i] = working_derivative(y[i] - null.intercept, cfg);
    const double inv_n = 1.0 / static_cast<double>(d.n);
    double lmax = 0.0;
    bool any_block = false;
    for (Eigen::Index k = 0; k < d.num_scalars(); ++k) {
        if (d.scalar_zero_variance[static_cast<std::size_t>(k)])
            continue;
        any_block = true;
        lmax = std::max(lmax, std::abs(d.scalars.col(k).dot(deriv)) * inv_n);
    }
    for (std::size_t j = 0; j < d.num_groups(); ++j) {
        if (d.group_sizes[j] == 0)
            continue;
        any_block = true;
        const double g = (d.groups[j].transpose() * deriv).norm() * inv_n;
        lmax = std::max(lmax, g / std::sqrt(double(d.group_sizes[j])));
    }
    if (!any_block)
        throw validation_error("lambda path: design has no penalized columns");
    if (!(lmax > 0.0))
        throw validation_error("lambda path: null-model gradient is zero");
    return lmax;
}

inline std::vector<double> lambda_grid(double lmax, int n_lambda, double min_ratio)
{
    if (n_lambda < 2)
        throw validation_error("lambda path: n_lambda must be at least 2");
    if (!(min_ratio > 0.0 && min_ratio < 1.0))
        throw validation_error("lambda path: min_ratio must lie in (0,1)");
    std::vector<double> grid(static_cast<std::size_t>(n_lambda));
    const double hi = std::log(lmax);
    const double lo = std::log(lmax * min_ratio);
    for (int k = 0; k < n_lambda; ++k)
        grid[static_cast<std::size_t>(k)] =
            k == 0 ? lmax : std::exp(hi + (lo - hi) * double(k) / double(n_lambda - 1));
    return grid;
}

/// Default lower end of the lambda grid.
inline double default_min_ratio(const DesignBlocks& d)
{
    Eigen::Index params = d.num_scalars();
    for (auto g : d.group_sizes)
        params += g;
    return params > d.n ? 0.05 : 0.001;
}

inline PathResult lambda_path(const DesignBlocks& d, const Eigen::VectorXd& y,
                              const SolverConfig& cfg, int n_lambda, double min_ratio)
{
    cfg.validate();
    PathResult path;
    // nudge so rounding in the group norm cannot leave a block barely active at the top
    path.lambda_max = lambda_max(d, y, cfg) * (1.0 + 1e-10);
    path.lambdas = lambda_grid(path.lambda_max, n_lambda, min_ratio);

    StandardizedCoefficients warm = zero_coefficients(d);
    warm.intercept = null_fit(d, y, cfg).intercept;
    for (double lam : path.lambdas) {
        SolverConfig c = cfg;
        c.lambda = lam;
        FitResult f = group_descent_fit(d, y, c, warm);
        warm = f.standardized;
        path.fits.push_back(std::move(f));
    }
    return path;
}

inline double log_binomial(int p, int k)
{
    if (k < 0 || k > p)
        throw validation_error("log_binomial: k outside [0, p]");
    return std::lgamma(double(p) + 1.0) - std::lgamma(double(k) + 1.0) -
           std::lgamma(double(p - k) + 1.0);
}

/// Form of the Bayesian information criterion scored along the path.
enum class CriterionForm {
    /// log(sum loss) + log(n) nu, with nu the number of selected variables.
    Printed,
    /// n log(sum loss) + log(n) df, with df the number of nonzero coefficients.
    /// A selected score group costs one degree of freedom per component.
    Schwarz,
};

/// BIC = w log(max(sum_loss, 1e-12)) + log(n) size, with w = 1 (printed) or n.
inline double bic_value(double sum_loss, Eigen::Index n, std::size_t size,
                        CriterionForm form = CriterionForm::Printed)
{
    const double w = form == CriterionForm::Printed ? 1.0 : double(n);
    return w * std::log(std::max(sum_loss, 1e-12)) + std::log(double(n)) * double(size);
}

inline double ebic_value(double bic, int p_total, std::size_t nu)
{
    return bic + 2.0 * log_binomial(p_total, static_cast<int>(nu));
}

/// Criterion loss: check loss for quantile fits, squared error for mean regression.
inline double criterion_loss(const Eigen::VectorXd& r, LossKind loss, double tau)
{
    double s = 0.0;
    if (loss == LossKind::Squared)
        return r.squaredNorm();
    for (Eigen::Index i = 0; i < r.size(); ++i)
        s += losspen::check_loss(r[i], tau);
    return s;
}

/// Scores every fit on the path and selects the EBIC minimizer (ties go to larger lambda).
inline void ebic_select(PathResult& path, const DesignBlocks& d, const Eigen::VectorXd& y,
                        LossKind loss, double tau, int p_total,
                        CriterionForm form = CriterionForm::Printed)
{
    if (path.fits.empty())
        throw validation_error("ebic_select: empty path");
    detail::check_inputs(d, y);
    path.bic.clear();
    path.ebic.clear();
    path.loss_floored.clear();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.fits.size(); ++k) {
        const FitResult& f = path.fits[k];
        const Eigen::VectorXd r = y - linear_predictor(d, f.standardized);
        const double s = criterion_loss(r, loss, tau);
        const std::size_t nu = f.model_size();
        if (static_cast<int>(nu) > p_total)
            throw validation_error("ebic_select: model size exceeds the candidate count");
        path.loss_floored.push_back(s < 1e-12);
        const std::size_t size = form == CriterionForm::Printed ? nu : f.nonzero_coefficients();
        const double bic = bic_value(s, d.n, size, form);
        const double ebic = ebic_value(bic, p_total, nu);
        path.bic.push_back(bic);
        path.ebic.push_back(ebic);
        if (ebic < best) {
            best = ebic;
            path.selected = k;
        }
    }
}

} // namespace vsflqr::solver
