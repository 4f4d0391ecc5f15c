#pragma once
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>
#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <vsflqr/errors.hpp>

// Functional covariates: grid regularization, centering, covariance
// estimation, quadrature-weighted FPCA and principal component scores.
namespace vsflqr::funcdata {

struct FunctionalSample
{
    std::string subject_id;
    std::vector<double> times;
    std::vector<double> values;
};

struct FunctionalDataset
{
    std::string covariate_id;
    double domain_start = 0.0;
    double domain_end = 1.0;
    std::vector<FunctionalSample> samples;
    Eigen::VectorXd common_grid;

    std::size_t size() const { return samples.size(); }
};

/// Curves stored row-wise on a shared grid (n x M).
struct CurveMatrix
{
    std::string covariate_id;
    std::vector<std::string> subject_ids;
    Eigen::VectorXd grid;
    Eigen::MatrixXd values;

    Eigen::Index n() const { return values.rows(); }
    Eigen::Index m() const { return values.cols(); }
};

struct CenteredCurves
{
    CurveMatrix centered;
    Eigen::VectorXd mean_curve;
};

struct EigenSystem
{
    Eigen::VectorXd grid;
    Eigen::VectorXd mean_curve;
    Eigen::MatrixXd eigenfunctions;    // Q x M, rows are eigenfunctions on the grid
    Eigen::VectorXd eigenvalues;       // Q, non-increasing
    double pve_achieved = 0.0;
    Eigen::VectorXd quadrature_weights;
    double residual_variance = 0.0;    // per-point variance left outside the retained span

    Eigen::Index rank() const { return eigenfunctions.rows(); }
};

struct ScoreMatrix
{
    std::string covariate_id;
    Eigen::MatrixXd scores;  // n x Q
};

inline Eigen::VectorXd uniform_grid(double start, double end, Eigen::Index points)
{
    if (points < 2)
        throw validation_error("grid needs at least 2 points");
    if (!(end > start))
        throw validation_error("grid end must exceed start");
    return Eigen::VectorXd::LinSpaced(points, start, end);
}

/// Trapezoidal quadrature weights on an increasing grid.
inline Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid)
{
    const Eigen::Index m = grid.size();
    if (m < 2)
        throw validation_error("quadrature grid needs at least 2 points");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k + 1 < m; ++k) {
        const double h = grid[k + 1] - grid[k];
        if (!(h > 0.0))
            throw validation_error("quadrature grid must be strictly increasing");
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    return w;
}

inline void validate_sample(const FunctionalSample& s, double a, double b)
{
    if (s.times.size() != s.values.size())
        throw validation_error("sample '" + s.subject_id + "': times and values differ in length");
    if (s.times.size() < 2)
        throw degenerate_sample_error(s.subject_id);
    for (std::size_t k = 0; k < s.times.size(); ++k) {
        if (!std::isfinite(s.values[k]) || !std::isfinite(s.times[k]))
            throw validation_error("sample '" + s.subject_id + "': non-finite entry");
        if (s.times[k] < a - 1e-12 || s.times[k] > b + 1e-12)
            throw validation_error("sample '" + s.subject_id + "': time outside the domain");
        if (k > 0 && !(s.times[k] > s.times[k - 1]))
            throw validation_error("sample '" + s.subject_id + "': times must be strictly increasing");
    }
}

inline void validate_dataset(const FunctionalDataset& d)
{
    if (d.common_grid.size() < 2)
        throw validation_error("covariate '" + d.covariate_id + "': common grid needs at least 2 points");
    std::unordered_set<std::string> seen;
    for (const auto& s : d.samples) {
        if (!seen.insert(s.subject_id).second)
            throw validation_error("covariate '" + d.covariate_id + "': duplicate subject '" +
                                   s.subject_id + "'");
    }
}

/// Linear interpolation with flat extrapolation beyond the observed range.
inline double interpolate(const std::vector<double>& t, const std::vector<double>& v, double x)
{
    if (x <= t.front()) return v.front();
    if (x >= t.back()) return v.back();
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - t.begin());
    const std::size_t lo = hi - 1;
    const double frac = (x - t[lo]) / (t[hi] - t[lo]);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline bool on_grid(const FunctionalSample& s, const Eigen::VectorXd& grid)
{
    if (static_cast<Eigen::Index>(s.times.size()) != grid.size())
        return false;
    for (Eigen::Index k = 0; k < grid.size(); ++k)
        if (std::abs(s.times[static_cast<std::size_t>(k)] - grid[k]) > 1e-12)
            return false;
    return true;
}

inline FunctionalSample regularize_sample(const FunctionalSample& s, const Eigen::VectorXd& grid,
                                          double a, double b)
{
    validate_sample(s, a, b);
    if (on_grid(s, grid))
        return s;
    FunctionalSample out;
    out.subject_id = s.subject_id;
    out.times.assign(grid.data(), grid.data() + grid.size());
    out.values.resize(out.times.size());
    for (std::size_t k = 0; k < out.times.size(); ++k)
        out.values[k] = interpolate(s.times, s.values, out.times[k]);
    return out;
}

inline FunctionalDataset regularize_to_grid(const FunctionalDataset& dataset)
{
    validate_dataset(dataset);
    FunctionalDataset out;
    out.covariate_id = dataset.covariate_id;
    out.domain_start = dataset.domain_start;
    out.domain_end = dataset.domain_end;
    out.common_grid = dataset.common_grid;
    out.samples.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples)
        out.samples.push_back(
            regularize_sample(s, dataset.common_grid, dataset.domain_start, dataset.domain_end));
    return out;
}

/// Packs a regularized dataset into a row-per-subject matrix.
inline CurveMatrix as_curve_matrix(const FunctionalDataset& dataset)
{
    CurveMatrix cm;
    cm.covariate_id = dataset.covariate_id;
    cm.grid = dataset.common_grid;
    cm.values.resize(static_cast<Eigen::Index>(dataset.samples.size()), dataset.common_grid.size());
    cm.subject_ids.reserve(dataset.samples.size());
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        if (!on_grid(s, dataset.common_grid))
            throw dimension_error("covariate '" + dataset.covariate_id + "': subject '" +
                                  s.subject_id + "' is not on the common grid");
        cm.subject_ids.push_back(s.subject_id);
        for (std::size_t k = 0; k < s.values.size(); ++k)
            cm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = s.values[k];
    }
    return cm;
}

inline CenteredCurves center_dataset(const CurveMatrix& curves)
{
    if (curves.n() == 0)
        throw insufficient_data_error("covariate '" + curves.covariate_id + "': empty dataset");
    CenteredCurves out;
    out.mean_curve = curves.values.colwise().mean().transpose();
    out.centered = curves;
    out.centered.values.rowwise() -= out.mean_curve.transpose();
    return out;
}

/// Sample covariance (n - 1 denominator) of centered curves on the grid.
inline Eigen::MatrixXd estimate_covariance(const CurveMatrix& centered)
{
    const Eigen::Index n = centered.n();
    if (n < 2)
        throw insufficient_data_error("covariate '" + centered.covariate_id +
                                      "': covariance needs at least 2 subjects");
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(centered.m(), centered.m());
    g.selfadjointView<Eigen::Lower>().rankUpdate(centered.values.transpose(), 1.0 / double(n - 1));
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    return g;
}

/// Solves the quadrature-weighted eigenproblem and truncates by PVE.
inline EigenSystem fpca(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& weights,
                        double pve_target)
{
    const Eigen::Index m = covariance.rows();
    if (covariance.cols() != m || weights.size() != m)
        throw dimension_error("fpca: covariance and weights disagree in size");
    if (!(pve_target > 0.0 && pve_target <= 1.0))
        throw validation_error("fpca: pve target must lie in (0,1]");
    if ((weights.array() <= 0.0).any())
        throw validation_error("fpca: quadrature weights must be positive");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8)
        throw validation_error("fpca: covariance is not symmetric");

    EigenSystem es;
    es.quadrature_weights = weights;
    es.eigenfunctions.resize(0, m);
    es.eigenvalues.resize(0);

    const Eigen::VectorXd root_w = weights.cwiseSqrt();
    Eigen::MatrixXd a = root_w.asDiagonal() * covariance * root_w.asDiagonal();
    a = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success)
        throw numerical_error("fpca: eigendecomposition failed");

    // Eigen returns ascending order.
    Eigen::VectorXd values = solver.eigenvalues().reverse();
    Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
    const double largest = values.size() > 0 ? values[0] : 0.0;
    if (!(largest > 0.0))
        return es;
    const double floor = 1e-10 * largest;
    for (Eigen::Index q = 0; q < values.size(); ++q)
        if (values[q] < floor)
            values[q] = 0.0;

    const double total = values.sum();
    Eigen::Index rank = 0;
    double cumulative = 0.0;
    while (rank < values.size() && values[rank] > 0.0) {
        cumulative += values[rank];
        ++rank;
        if (cumulative >= pve_target * total * (1.0 - 1e-12))
            break;
    }

    es.eigenvalues = values.head(rank);
    es.pve_achieved = cumulative / total;
    es.eigenfunctions.resize(rank, m);
    for (Eigen::Index q = 0; q < rank; ++q) {
        Eigen::VectorXd phi = vectors.col(q).cwiseQuotient(root_w);
        Eigen::Index at = 0;
        phi.cwiseAbs().maxCoeff(&at);
        if (phi[at] < 0.0)
            phi = -phi;
        es.eigenfunctions.row(q) = phi.transpose();
    }
    return es;
}

/// xi_iq = sum_m w_m Z_i(s_m) phi_q(s_m).
inline ScoreMatrix compute_scores(const CurveMatrix& centered, const EigenSystem& es)
{
    if (centered.m() != es.quadrature_weights.size() || centered.m() != es.eigenfunctions.cols())
        throw dimension_error("covariate '" + centered.covariate_id +
                              "': grid does not match the eigensystem");
    ScoreMatrix out;
    out.covariate_id = centered.covariate_id;
    out.scores = centered.values * es.quadrature_weights.asDiagonal() * es.eigenfunctions.transpose();
    return out;
}

/// Weighted inner products of the eigenfunctions; identity for a valid system.
inline Eigen::MatrixXd gram(const EigenSystem& es)
{
    return es.eigenfunctions * es.quadrature_weights.asDiagonal() * es.eigenfunctions.transpose();
}

/// Position of t on the grid within a relative 1e-9, or -1.
inline Eigen::Index grid_index(const Eigen::VectorXd& grid, double t)
{
    const double* first = grid.data();
    const double* last = grid.data() + grid.size();
    const double* it = std::lower_bound(first, last, t);
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    if (it != last && std::abs(*it - t) <= tol)
        return it - first;
    if (it != first && std::abs(*(it - 1) - t) <= tol)
        return it - 1 - first;
    return -1;
}

using GridObservations = std::vector<std::vector<std::pair<Eigen::Index, double>>>;

/// Observations of each sample as (grid index, value); empty optional when
/// some observation falls between grid points.
inline std::optional<GridObservations> grid_observations(const FunctionalDataset& d)
{
    GridObservations obs(d.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const auto& s = d.samples[i];
        for (std::size_t k = 0; k < s.times.size(); ++k) {
            const Eigen::Index g = grid_index(d.common_grid, s.times[k]);
            if (g < 0)
                return std::nullopt;
            obs[i].emplace_back(g, s.values[k]);
        }
    }
    return obs;
}

/// x_im = mean_m + sum_q scores_iq components_qm
struct LowRankFit
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;  // k x M
    Eigen::MatrixXd scores;      // n x k

    Eigen::Index rank() const { return components.rows(); }
    double at(Eigen::Index i, Eigen::Index g) const
    {
        return mean[g] + scores.row(i).dot(components.col(g));
    }
};

namespace detail {

/// EM for probabilistic PCA with missing cells: scores have a standard
/// normal prior and each observed cell carries noise of variance s2. The
/// E-step gives posterior score means and covariances per curve, the M-step
/// refits mean, components and s2. Stops when the fitted values on the
/// observed cells move by less than `tol` relative to their scale.
inline void alternate(const GridObservations& rows, LowRankFit& f, int max_iter, double tol)
{
    const Eigen::Index k = f.rank();
    const Eigen::Index m = f.mean.size();
    const auto n = static_cast<Eigen::Index>(rows.size());
    GridObservations cols(static_cast<std::size_t>(m));
    double scale = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const auto& [g, v] : rows[i]) {
            cols[static_cast<std::size_t>(g)].emplace_back(static_cast<Eigen::Index>(i), v);
            scale += v * v;
            ++cells;
        }
    scale = std::sqrt(scale / static_cast<double>(std::max<std::size_t>(cells, 1)));
    const double floor = 1e-14 * std::max(scale * scale, 1e-300);

    // components carry the scale; scores start standardized
    if (k > 0) {
        const Eigen::RowVectorXd sd =
            (f.scores.colwise().squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n, 1)))
                .cwiseSqrt()
                .cwiseMax(1e-300);
        f.scores = f.scores.array().rowwise() / sd.array();
        f.components = sd.transpose().asDiagonal() * f.components;
    }

    double s2 = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const auto& [c, v] : rows[i]) {
            const double r = v - f.at(static_cast<Eigen::Index>(i), c);
            s2 += r * r;
        }
    s2 = std::max(s2 / static_cast<double>(std::max<std::size_t>(cells, 1)), floor);

    std::vector<Eigen::MatrixXd> post(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(k, k));
    std::vector<Eigen::MatrixXd> second(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(k + 1, k + 1));
    std::vector<Eigen::MatrixXd> outer(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(k, k));
    Eigen::MatrixXd g(k, k), h(k + 1, k + 1);
    Eigen::VectorXd rhs(k), rhs_h(k + 1), u(k + 1);
    Eigen::LLT<Eigen::MatrixXd> llt_g(k), llt_h(k + 1);
    std::vector<double> previous;
    for (int it = 0; it < max_iter; ++it) {
        if (k > 0) {
            for (Eigen::Index c = 0; c < m; ++c)
                outer[static_cast<std::size_t>(c)].noalias() = f.components.col(c) * f.components.col(c).transpose();
            for (Eigen::Index i = 0; i < n; ++i) {
                g.setZero();
                rhs.setZero();
                for (const auto& [c, v] : rows[static_cast<std::size_t>(i)]) {
                    g += outer[static_cast<std::size_t>(c)];
                    rhs += (v - f.mean[c]) * f.components.col(c);
                }
                g.diagonal().array() += s2;
                llt_g.compute(g);
                f.scores.row(i) = llt_g.solve(rhs).transpose();
                post[static_cast<std::size_t>(i)] = s2 * llt_g.solve(Eigen::MatrixXd::Identity(k, k));
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& e = second[static_cast<std::size_t>(i)];
            u[0] = 1.0;
            u.tail(k) = f.scores.row(i).transpose();
            e.noalias() = u * u.transpose();
            e.bottomRightCorner(k, k) += post[static_cast<std::size_t>(i)];
        }
        for (Eigen::Index c = 0; c < m; ++c) {
            const auto& o = cols[static_cast<std::size_t>(c)];
            if (o.empty())
                continue;
            h.setZero();
            rhs_h.setZero();
            for (const auto& [i, v] : o) {
                h += second[static_cast<std::size_t>(i)];
                rhs_h[0] += v;
                rhs_h.tail(k) += v * f.scores.row(i).transpose();
            }
            h.diagonal().array() += floor;
            llt_h.compute(h);
            const Eigen::VectorXd sol = llt_h.solve(rhs_h);
            f.mean[c] = sol[0];
            f.components.col(c) = sol.tail(k);
        }

        std::vector<double> current;
        current.reserve(cells);
        double change = 0.0;
        double sse = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (const auto& [c, v] : rows[i]) {
                const auto row = static_cast<Eigen::Index>(i);
                const double x = f.at(row, c);
                if (!std::isfinite(x))
                    throw numerical_error("curve completion diverged");
                if (!previous.empty())
                    change = std::max(change, std::abs(x - previous[current.size()]));
                current.push_back(x);
                sse += (v - x) * (v - x) + f.components.col(c).dot(post[i] * f.components.col(c));
            }
        s2 = std::max(sse / static_cast<double>(std::max<std::size_t>(cells, 1)), floor);
        const bool first = previous.empty();
        previous = std::move(current);
        if (!first && change <= tol * std::max(scale, 1e-300))
            break;
    }
}

inline LowRankFit initial_fit(const CurveMatrix& interpolated, const EigenSystem& full, Eigen::Index k)
{
    LowRankFit f;
    f.mean = full.mean_curve;
    f.components = full.eigenfunctions.topRows(k);
    EigenSystem top = full;
    top.eigenfunctions = full.eigenfunctions.topRows(k);
    top.eigenvalues = full.eigenvalues.head(k);
    CurveMatrix c = interpolated;
    c.values.rowwise() -= f.mean.transpose();
    f.scores = compute_scores(c, top).scores;
    return f;
}

} // namespace detail

/// Low-rank completion of curves observed on subsets of the grid. The rank
/// is the one that best predicts one held-out observation per curve, grown
/// from 1 until the held-out error stops improving; the mean and components
/// are then refitted on all observations. Observed cells keep their values.
inline CurveMatrix complete_curves(const GridObservations& obs,
                                   const CurveMatrix& interpolated, Eigen::Index max_rank)
{
    const auto n = static_cast<Eigen::Index>(obs.size());
    CurveMatrix out = interpolated;
    if (n < 2)
        return out;

    CenteredCurves cc = center_dataset(interpolated);
    EigenSystem full = fpca(estimate_covariance(cc.centered), trapezoid_weights(interpolated.grid), 1.0);
    full.mean_curve = cc.mean_curve;
    std::size_t fewest = obs.front().size();
    for (const auto& o : obs)
        fewest = std::min(fewest, o.size());
    max_rank = std::min({max_rank, full.rank(), static_cast<Eigen::Index>(fewest) - 2});
    if (max_rank < 1)
        return out;

    GridObservations train = obs;
    std::vector<std::pair<Eigen::Index, std::pair<Eigen::Index, double>>> held;
    double spread = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& o = train[static_cast<std::size_t>(i)];
        const auto pick = static_cast<std::size_t>((7 * i + 3) % static_cast<Eigen::Index>(o.size()));
        held.emplace_back(i, o[pick]);
        const double dev = o[pick].second - full.mean_curve[o[pick].first];
        spread += dev * dev;
        o.erase(o.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    spread /= static_cast<double>(held.size());

    constexpr int trial_iter = 40;
    constexpr int final_iter = 1000;
    constexpr double tol = 1e-9;
    std::optional<LowRankFit> best;
    double best_error = spread;
    int worse = 0;
    for (Eigen::Index k = 1; k <= max_rank; ++k) {
        LowRankFit f = detail::initial_fit(interpolated, full, k);
        detail::alternate(train, f, trial_iter, tol);
        double error = 0.0;
        for (const auto& [i, cell] : held) {
            const double r = cell.second - f.at(i, cell.first);
            error += r * r;
        }
        error /= static_cast<double>(held.size());
        if (error < best_error) {
            best_error = error;
            best = std::move(f);
            worse = 0;
        } else if (++worse == (best_error <= 1e-4 * spread ? 1 : 3)) {
            // a near-exact fit is only overfitted by further components
            break;
        }
    }
    if (!best)
        return out;

    detail::alternate(obs, *best, final_iter, tol);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index g = 0; g < out.m(); ++g)
            out.values(i, g) = best->at(i, g);
    for (Eigen::Index i = 0; i < n; ++i)
        for (const auto& [g, v] : obs[static_cast<std::size_t>(i)])
            out.values(i, g) = v;
    return out;
}

/// Average per-point variance of the covariance not captured by the retained components.
inline double residual_variance(const Eigen::MatrixXd& covariance, const EigenSystem& es)
{
    Eigen::VectorXd captured = Eigen::VectorXd::Zero(covariance.rows());
    for (Eigen::Index q = 0; q < es.rank(); ++q)
        captured += es.eigenvalues[q] * es.eigenfunctions.row(q).transpose().cwiseAbs2();
    const Eigen::VectorXd left = (covariance.diagonal() - captured).cwiseMax(0.0);
    return es.quadrature_weights.dot(left) / es.quadrature_weights.sum();
}

/// Scores of a curve observed off the full grid: the conditional expectation
/// (Phi' Phi + s2 Lambda^-1)^-1 Phi' (z - mu) with Phi the eigenfunctions at
/// the observed times.
inline Eigen::VectorXd conditional_scores(const FunctionalSample& s, const EigenSystem& es)
{
    const Eigen::Index q = es.rank();
    if (q == 0)
        return Eigen::VectorXd(0);
    const auto m = static_cast<Eigen::Index>(s.times.size());
    const std::vector<double> grid(es.grid.data(), es.grid.data() + es.grid.size());
    const std::vector<double> mean(es.mean_curve.data(), es.mean_curve.data() + es.mean_curve.size());
    Eigen::MatrixXd phi(m, q);
    Eigen::VectorXd z(m);
    std::vector<double> row(grid.size());
    for (Eigen::Index k = 0; k < m; ++k)
        z[k] = s.values[static_cast<std::size_t>(k)] - interpolate(grid, mean, s.times[static_cast<std::size_t>(k)]);
    for (Eigen::Index r = 0; r < q; ++r) {
        for (std::size_t g = 0; g < row.size(); ++g)
            row[g] = es.eigenfunctions(r, static_cast<Eigen::Index>(g));
        for (Eigen::Index k = 0; k < m; ++k)
            phi(k, r) = interpolate(grid, row, s.times[static_cast<std::size_t>(k)]);
    }
    const double s2 = std::max(es.residual_variance, 1e-8 * es.eigenvalues[0]);
    Eigen::MatrixXd a = phi.transpose() * phi;
    a.diagonal() += s2 * es.eigenvalues.cwiseInverse();
    return a.ldlt().solve(phi.transpose() * z);
}

inline bool is_dense(const FunctionalDataset& d)
{
    return std::all_of(d.samples.begin(), d.samples.end(),
                       [&](const FunctionalSample& s) { return on_grid(s, d.common_grid); });
}

/// How curves observed on part of the grid are scored. Completion fills the
/// unobserved grid points by low-rank completion before FPCA and scores such
/// curves by conditional expectation; Interpolation scores the linearly
/// interpolated curves by quadrature.
enum class SparseScoring { Completion, Interpolation };

/// Scores against an eigensystem: quadrature for curves on the full grid,
/// and for the rest as chosen by `how`.
inline ScoreMatrix score_dataset(const FunctionalDataset& d, const EigenSystem& es,
                                 SparseScoring how = SparseScoring::Completion)
{
    if (d.common_grid.size() != es.grid.size() ||
        (d.common_grid - es.grid).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, es.grid.cwiseAbs().maxCoeff()))
        throw dimension_error("covariate '" + d.covariate_id + "': grid does not match the eigensystem");
    CurveMatrix cm = as_curve_matrix(regularize_to_grid(d));
    cm.values.rowwise() -= es.mean_curve.transpose();
    ScoreMatrix out = compute_scores(cm, es);
    if (how == SparseScoring::Interpolation)
        return out;
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        if (!on_grid(d.samples[i], d.common_grid))
            out.scores.row(static_cast<Eigen::Index>(i)) = conditional_scores(d.samples[i], es).transpose();
    return out;
}

/// Full per-covariate FPCA pipeline: regularize, center, covariance, eigensystem.
struct FpcaResult
{
    CurveMatrix centered;
    EigenSystem eigensystem;
    ScoreMatrix scores;
};

inline FpcaResult run_fpca(const FunctionalDataset& dataset, double pve_target,
                           SparseScoring how = SparseScoring::Completion)
{
    CurveMatrix curves = as_curve_matrix(regularize_to_grid(dataset));
    const Eigen::VectorXd weights = trapezoid_weights(curves.grid);
    const bool dense = how == SparseScoring::Interpolation || is_dense(dataset);
    if (!dense)
        if (const auto obs = grid_observations(dataset))
            curves = complete_curves(*obs, curves, curves.m() - 1);
    CenteredCurves cc = center_dataset(curves);
    const Eigen::MatrixXd cov = estimate_covariance(cc.centered);
    FpcaResult r;
    r.eigensystem = fpca(cov, weights, pve_target);
    r.eigensystem.grid = curves.grid;
    r.eigensystem.mean_curve = cc.mean_curve;
    if (dense) {
        r.scores = compute_scores(cc.centered, r.eigensystem);
    } else {
        r.eigensystem.residual_variance = residual_variance(cov, r.eigensystem);
        r.scores = score_dataset(dataset, r.eigensystem);
    }
    r.centered = std::move(cc.centered);
    return r;
}

} // namespace vsflqr::funcdata
