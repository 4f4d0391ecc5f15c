#pragma once
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>
#include <Eigen/Core>
#include <boost/math/special_functions/beta.hpp>
#include <vsflqr/errors.hpp>
#include <vsflqr/funcdata.hpp>
#include <vsflqr/model.hpp>

// Location-scale simulation scenarios, evaluation metrics, the Monte Carlo
// driver and the pseudo-variable specificity experiment.
namespace vsflqr::simbench {

/// Seedable stream with platform-independent uniform/normal draws.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent child stream derived from this stream's seed material.
    static Rng derive(std::uint64_t seed, std::uint64_t stream)
    {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Uniform integer on [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi)
    {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
        std::uint64_t v = 0;
        do {
            v = engine_();
        } while (v >= limit);
        return lo + static_cast<std::int64_t>(v % span);
    }

    /// Standard normal via Box-Muller.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return radius * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Student t with integer degrees of freedom: Z / sqrt(chi2_df / df).
    double student_t(int df)
    {
        const double z = normal();
        double chi2 = 0.0;
        for (int k = 0; k < df; ++k) {
            const double g = normal();
            chi2 += g * g;
        }
        return z / std::sqrt(chi2 / double(df));
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// CDF of Student t via the regularized incomplete beta function.
inline double student_t_cdf(double x, double df)
{
    const double tail = 0.5 * boost::math::ibeta(0.5 * df, 0.5, df / (df + x * x));
    return x >= 0.0 ? 1.0 - tail : tail;
}

/// Quantile of t with 5 degrees of freedom by bisection on the CDF.
inline double t5_quantile(double tau)
{
    if (!(tau > 0.0 && tau < 1.0))
        throw validation_error("t5_quantile: tau must lie strictly inside (0,1)");
    if (tau == 0.5)
        return 0.0;
    double lo = -1.0, hi = 1.0;
    while (student_t_cdf(lo, 5.0) > tau) lo *= 2.0;
    while (student_t_cdf(hi, 5.0) < tau) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, 5.0) < tau)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Scenario definition

constexpr int kNumScalars = 15;     // X1..X15 (X0 is the intercept)
constexpr int kNumFunctional = 20;  // Z1..Z20
constexpr int kBasisSize = 10;
constexpr int kGridPoints = 101;

enum class Design { Dense, Sparse };

inline std::string to_string(Design d) { return d == Design::Dense ? "dense" : "sparse"; }

inline Design parse_design(const std::string& s)
{
    if (s == "dense") return Design::Dense;
    if (s == "sparse") return Design::Sparse;
    throw validation_error("unknown design '" + s + "' (expected dense or sparse)");
}

struct ScenarioConfig
{
    int n = 400;
    double tau = 0.5;
    Design design = Design::Dense;
    std::uint64_t seed = 1;
    int n_reps = 200;
    double test_fraction = 0.25;
    int grid_points = kGridPoints;
    bool zero_noise = false;  // test hook: epsilon forced to 0

    void validate() const
    {
        if (n < 50)
            throw validation_error("scenario: n must be at least 50");
        if (!(tau > 0.0 && tau < 1.0))
            throw validation_error("scenario: tau must lie in (0,1)");
        if (n_reps < 1)
            throw validation_error("scenario: n_reps must be at least 1");
        if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
            throw validation_error("scenario: test_fraction must lie in [0,1]");
        if (grid_points < 2)
            throw validation_error("scenario: grid needs at least 2 points");
    }
};

inline Eigen::VectorXd scenario_grid(int points = kGridPoints)
{
    return funcdata::uniform_grid(0.0, 1.0, points);
}

/// Legendre polynomial P_k at x in [-1, 1].
inline double legendre(int k, double x)
{
    if (k == 0) return 1.0;
    double p0 = 1.0, p1 = x;
    for (int m = 2; m <= k; ++m) {
        const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

/// Shifted Legendre basis on [0,1], L2-orthonormal: rows q = 1..count (degree q - 1).
inline Eigen::MatrixXd legendre_basis(const Eigen::VectorXd& grid, int count = kBasisSize)
{
    Eigen::MatrixXd b(count, grid.size());
    for (int q = 0; q < count; ++q)
        for (Eigen::Index m = 0; m < grid.size(); ++m)
            b(q, m) = std::sqrt(2.0 * q + 1.0) * legendre(q, 2.0 * grid[m] - 1.0);
    return b;
}

/// Gaussian bumps centred at (q - 0.5)/10 with width 0.1.
inline Eigen::MatrixXd gaussian_basis(const Eigen::VectorXd& grid, int count = kBasisSize)
{
    constexpr double sigma = 0.1;
    Eigen::MatrixXd b(count, grid.size());
    for (int q = 0; q < count; ++q) {
        const double c = (q + 0.5) / double(count);
        for (Eigen::Index m = 0; m < grid.size(); ++m) {
            const double d = grid[m] - c;
            b(q, m) = std::exp(-d * d / (2.0 * sigma * sigma));
        }
    }
    return b;
}

struct TrueModel
{
    Eigen::VectorXd grid;
    Eigen::VectorXd beta;         // beta_0..beta_15
    double beta_tilde_1 = 0.1;
    std::vector<Eigen::VectorXd> gamma_curves;  // Gamma_1..Gamma_20 on the grid
    Eigen::VectorXd gamma_tilde_2;
    std::set<int> active_scalars{1, 2, 3};
    std::set<int> active_functional{1, 2, 3, 4, 5};
};

inline TrueModel true_model(int grid_points = kGridPoints)
{
    using std::numbers::pi;
    TrueModel t;
    t.grid = scenario_grid(grid_points);
    t.beta = Eigen::VectorXd::Zero(kNumScalars + 1);
    t.beta[0] = 1.0;
    t.beta[1] = 2.0;
    t.beta[2] = 3.0;
    t.beta[3] = 4.0;
    const Eigen::ArrayXd s = t.grid.array();
    t.gamma_curves.assign(kNumFunctional, Eigen::VectorXd::Zero(t.grid.size()));
    t.gamma_curves[0] = 3.0 * (pi * s).cos();
    t.gamma_curves[1] = 4.5 * (pi * s).sin();
    t.gamma_curves[2] = 3.5 * (2.0 * pi * s).cos() + 5.5 * (-2.0 * pi * s).sin();
    t.gamma_curves[3] = 4.0 * (2.0 * pi * s).cos();
    t.gamma_curves[4] = 2.5 * (2.0 * pi * s).sin();
    t.gamma_tilde_2 = 0.1 * t.gamma_curves[1];
    return t;
}

struct QuantileCoefficients
{
    Eigen::VectorXd beta;                       // 16 entries
    std::vector<Eigen::VectorXd> gamma_curves;  // 20 curves
};

/// beta(tau) = beta + Q(tau) beta_tilde, Gamma_j(s, tau) = Gamma_j(s) + Q(tau) Gamma_tilde_j(s).
inline QuantileCoefficients true_quantile_coefficients(const TrueModel& t, double tau)
{
    const double q = t5_quantile(tau);
    QuantileCoefficients out{t.beta, t.gamma_curves};
    out.beta[1] += q * t.beta_tilde_1;
    out.gamma_curves[1] += q * t.gamma_tilde_2;
    return out;
}

struct SimulatedSet
{
    model::PredictionData covariates;
    Eigen::VectorXd y;
    Eigen::VectorXd true_quantile;  // conditional tau-quantile of y
};

struct Scenario
{
    model::TrainingData train;
    SimulatedSet test;
    Eigen::VectorXd train_true_quantile;
    TrueModel truth;
};

namespace detail {

inline std::string subject_name(const std::string& prefix, int i)
{
    std::string digits = std::to_string(i + 1);
    if (digits.size() < 5)
        digits.insert(0, 5 - digits.size(), '0');
    return prefix + digits;
}

struct DrawnSubjects
{
    std::vector<std::string> ids;
    Eigen::MatrixXd scalars;                 // count x 15
    std::vector<Eigen::MatrixXd> curves;     // 20 x (count x M)
    Eigen::VectorXd y;
    Eigen::VectorXd quantile;
    std::vector<std::vector<std::vector<Eigen::Index>>> observed;  // [j][i] grid indices (sparse)
};

// Draw order per subject: X1..X15, then omega for Z1..Z20 (10 each), then
// epsilon. Sparse subsampling follows all subjects: for each curve j, each
// subject i, the point count then the grid locations.
inline DrawnSubjects draw_subjects(Rng& rng, int count, const std::string& prefix,
                                   const ScenarioConfig& cfg, const TrueModel& truth,
                                   const Eigen::MatrixXd& legendre_b, const Eigen::MatrixXd& gauss_b,
                                   const Eigen::VectorXd& weights, double q_tau)
{
    const Eigen::Index m = truth.grid.size();
    DrawnSubjects out;
    out.scalars.resize(count, kNumScalars);
    out.curves.assign(kNumFunctional, Eigen::MatrixXd(count, m));
    out.y.resize(count);
    out.quantile.resize(count);

    std::vector<Eigen::VectorXd> weighted_gamma;
    for (const auto& g : truth.gamma_curves)
        weighted_gamma.push_back(weights.cwiseProduct(g));
    const Eigen::VectorXd weighted_tilde = weights.cwiseProduct(truth.gamma_tilde_2);

    Eigen::VectorXd omega(kBasisSize);
    for (int i = 0; i < count; ++i) {
        out.ids.push_back(subject_name(prefix, i));
        out.scalars(i, 0) = rng.uniform(0.0, 1.0);
        for (int b = 1; b < kNumScalars; ++b)
            out.scalars(i, b) = rng.uniform(-1.0, 1.0);
        for (int j = 0; j < kNumFunctional; ++j) {
            if (j == 1) {
                for (int q = 0; q < kBasisSize; ++q)
                    omega[q] = rng.uniform();
                out.curves[j].row(i) = (gauss_b.transpose() * omega).transpose();
            } else {
                for (int q = 0; q < kBasisSize; ++q)
                    omega[q] = rng.normal(0.0, std::sqrt(4.0 * (q + 1)));
                out.curves[j].row(i) = (legendre_b.transpose() * omega).transpose();
            }
        }
        const double eps = rng.student_t(5);

        double location = truth.beta[0];
        for (int b = 0; b < kNumScalars; ++b)
            location += truth.beta[b + 1] * out.scalars(i, b);
        for (int j = 0; j < kNumFunctional; ++j)
            location += out.curves[j].row(i).dot(weighted_gamma[j]);
        const double scale =
            truth.beta_tilde_1 * out.scalars(i, 0) + out.curves[1].row(i).dot(weighted_tilde);
        out.y[i] = location + (cfg.zero_noise ? 0.0 : eps) * scale;
        out.quantile[i] = location + q_tau * scale;
    }

    if (cfg.design == Design::Sparse) {
        out.observed.assign(kNumFunctional, std::vector<std::vector<Eigen::Index>>(count));
        std::vector<Eigen::Index> pool(static_cast<std::size_t>(m));
        for (int j = 0; j < kNumFunctional; ++j) {
            for (int i = 0; i < count; ++i) {
                const auto points = static_cast<std::size_t>(std::min<std::int64_t>(rng.integer(20, 31), m));
                for (Eigen::Index k = 0; k < m; ++k)
                    pool[static_cast<std::size_t>(k)] = k;
                // partial Fisher-Yates
                for (std::size_t k = 0; k < points; ++k) {
                    const auto pick = static_cast<std::size_t>(
                        rng.integer(static_cast<std::int64_t>(k), static_cast<std::int64_t>(m - 1)));
                    std::swap(pool[k], pool[pick]);
                }
                std::vector<Eigen::Index> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(points));
                std::sort(chosen.begin(), chosen.end());
                out.observed[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = std::move(chosen);
            }
        }
    }
    return out;
}

inline std::vector<funcdata::FunctionalDataset> to_datasets(const DrawnSubjects& s,
                                                            const Eigen::VectorXd& grid)
{
    std::vector<funcdata::FunctionalDataset> out;
    for (int j = 0; j < kNumFunctional; ++j) {
        funcdata::FunctionalDataset d;
        d.covariate_id = "Z" + std::to_string(j + 1);
        d.domain_start = grid[0];
        d.domain_end = grid[grid.size() - 1];
        d.common_grid = grid;
        for (std::size_t i = 0; i < s.ids.size(); ++i) {
            funcdata::FunctionalSample fs;
            fs.subject_id = s.ids[i];
            const auto row = static_cast<Eigen::Index>(i);
            if (s.observed.empty()) {
                fs.times.assign(grid.data(), grid.data() + grid.size());
                fs.values.resize(fs.times.size());
                for (Eigen::Index k = 0; k < grid.size(); ++k)
                    fs.values[static_cast<std::size_t>(k)] = s.curves[static_cast<std::size_t>(j)](row, k);
            } else {
                for (Eigen::Index k : s.observed[static_cast<std::size_t>(j)][i]) {
                    fs.times.push_back(grid[k]);
                    fs.values.push_back(s.curves[static_cast<std::size_t>(j)](row, k));
                }
            }
            d.samples.push_back(std::move(fs));
        }
        out.push_back(std::move(d));
    }
    return out;
}

inline std::vector<std::string> scalar_names()
{
    std::vector<std::string> names;
    for (int b = 1; b <= kNumScalars; ++b)
        names.push_back("X" + std::to_string(b));
    return names;
}

} // namespace detail

/// Training set of size n plus a disjoint test set of size round(test_fraction n).
inline Scenario generate_scenario(const ScenarioConfig& cfg)
{
    cfg.validate();
    Scenario sc;
    sc.truth = true_model(cfg.grid_points);
    const Eigen::VectorXd& grid = sc.truth.grid;
    const Eigen::VectorXd weights = funcdata::trapezoid_weights(grid);
    const Eigen::MatrixXd lb = legendre_basis(grid);
    const Eigen::MatrixXd gb = gaussian_basis(grid);
    const double q_tau = t5_quantile(cfg.tau);

    Rng rng(cfg.seed);
    const int n_test = static_cast<int>(std::lround(cfg.test_fraction * cfg.n));
    auto train = detail::draw_subjects(rng, cfg.n, "S", cfg, sc.truth, lb, gb, weights, q_tau);
    auto test = detail::draw_subjects(rng, n_test, "T", cfg, sc.truth, lb, gb, weights, q_tau);

    sc.train.subject_ids = train.ids;
    sc.train.scalar_names = detail::scalar_names();
    sc.train.scalars = train.scalars;
    sc.train.functional = detail::to_datasets(train, grid);
    sc.train.y = train.y;
    sc.train_true_quantile = train.quantile;

    sc.test.covariates.subject_ids = test.ids;
    sc.test.covariates.scalar_names = detail::scalar_names();
    sc.test.covariates.scalars = test.scalars;
    sc.test.covariates.functional = detail::to_datasets(test, grid);
    sc.test.y = test.y;
    sc.test.true_quantile = test.quantile;
    return sc;
}

// ---------------------------------------------------------------------------
// Metrics

struct SelectionOutcome
{
    std::set<int> scalars;     // 1-based indices among the penalized scalars
    std::set<int> functional;  // 1-based covariate indices
};

struct SelectionTruth
{
    std::set<int> active_scalars{1, 2, 3};
    int total_scalars = kNumScalars;
    std::set<int> active_functional{1, 2, 3, 4, 5};
    int total_functional = kNumFunctional;
};

struct SelectionRates
{
    double tpr_scalar = 0.0, fpr_scalar = 0.0;
    double tpr_functional = 0.0, fpr_functional = 0.0;
    double tpr_all = 0.0, fpr_all = 0.0;
    double model_size = 0.0;
};

inline SelectionRates selection_rates(const SelectionOutcome& o, const SelectionTruth& t)
{
    auto rates = [](const std::set<int>& chosen, const std::set<int>& active, int total,
                    int& tp, int& fp) {
        tp = fp = 0;
        for (int v : chosen) {
            if (v < 1 || v > total)
                throw validation_error("selection index out of range");
            (active.count(v) ? tp : fp) += 1;
        }
    };
    int tps = 0, fps = 0, tpf = 0, fpf = 0;
    rates(o.scalars, t.active_scalars, t.total_scalars, tps, fps);
    rates(o.functional, t.active_functional, t.total_functional, tpf, fpf);
    const double ps = double(t.active_scalars.size());
    const double ns = double(t.total_scalars) - ps;
    const double pf = double(t.active_functional.size());
    const double nf = double(t.total_functional) - pf;
    auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
    SelectionRates r;
    r.tpr_scalar = ratio(tps, ps);
    r.fpr_scalar = ratio(fps, ns);
    r.tpr_functional = ratio(tpf, pf);
    r.fpr_functional = ratio(fpf, nf);
    r.tpr_all = ratio(tps + tpf, ps + pf);
    r.fpr_all = ratio(fps + fpf, ns + nf);
    r.model_size = double(o.scalars.size() + o.functional.size());
    return r;
}

/// Replicate-averaged TPR/FPR and model size.
inline SelectionRates selection_metrics(const std::vector<SelectionOutcome>& outcomes,
                                        const SelectionTruth& truth = {})
{
    SelectionRates avg;
    if (outcomes.empty())
        return avg;
    for (const auto& o : outcomes) {
        const SelectionRates r = selection_rates(o, truth);
        avg.tpr_scalar += r.tpr_scalar;
        avg.fpr_scalar += r.fpr_scalar;
        avg.tpr_functional += r.tpr_functional;
        avg.fpr_functional += r.fpr_functional;
        avg.tpr_all += r.tpr_all;
        avg.fpr_all += r.fpr_all;
        avg.model_size += r.model_size;
    }
    const double k = double(outcomes.size());
    avg.tpr_scalar /= k;
    avg.fpr_scalar /= k;
    avg.tpr_functional /= k;
    avg.fpr_functional /= k;
    avg.tpr_all /= k;
    avg.fpr_all /= k;
    avg.model_size /= k;
    return avg;
}

/// Integral of (a - b)^2 by the trapezoid rule on the grid.
inline double integrated_squared_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                       const Eigen::VectorXd& grid)
{
    if (a.size() != grid.size() || b.size() != grid.size())
        throw dimension_error("integrated_squared_error: size mismatch");
    return funcdata::trapezoid_weights(grid).dot((a - b).cwiseAbs2());
}

/// Estimates from one replicate: beta_hat_1..B and Gamma_hat_j on the truth grid.
struct Estimates
{
    Eigen::VectorXd beta;                       // penalized scalars only (X1..X15)
    std::vector<Eigen::VectorXd> gamma_curves;  // Gamma_hat_1..20
};

struct EstimationMetrics
{
    Eigen::VectorXd bias;  // per scalar coefficient
    Eigen::VectorXd mse;
    Eigen::VectorXd mise;  // per coefficient function
};

inline EstimationMetrics estimation_metrics(const std::vector<Estimates>& fits,
                                            const QuantileCoefficients& truth,
                                            const Eigen::VectorXd& grid)
{
    if (fits.empty())
        throw insufficient_data_error("estimation_metrics: no replicates");
    const Eigen::Index b = fits.front().beta.size();
    const std::size_t j_count = fits.front().gamma_curves.size();
    EstimationMetrics m;
    m.bias = Eigen::VectorXd::Zero(b);
    m.mse = Eigen::VectorXd::Zero(b);
    m.mise = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(j_count));
    for (const auto& f : fits) {
        for (Eigen::Index k = 0; k < b; ++k) {
            const double e = f.beta[k] - truth.beta[k + 1];
            m.bias[k] += e;
            m.mse[k] += e * e;
        }
        for (std::size_t j = 0; j < j_count; ++j)
            m.mise[static_cast<Eigen::Index>(j)] +=
                integrated_squared_error(f.gamma_curves[j], truth.gamma_curves[j], grid);
    }
    const double k = double(fits.size());
    m.bias /= k;
    m.mse /= k;
    m.mise /= k;
    return m;
}

struct PredictionErrors
{
    double mspe = 0.0;
    double mape = 0.0;
};

inline PredictionErrors prediction_metrics(const Eigen::VectorXd& predicted,
                                           const Eigen::VectorXd& observed)
{
    if (predicted.size() != observed.size() || predicted.size() == 0)
        throw dimension_error("prediction_metrics: size mismatch");
    const Eigen::ArrayXd e = (predicted - observed).array();
    return {e.square().mean(), e.abs().mean()};
}

inline PredictionErrors prediction_metrics(const model::FLQRModel& m, const SimulatedSet& test)
{
    return prediction_metrics(model::predict(m, test.covariates), test.y);
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct ReplicateRecord
{
    int replicate = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    SelectionOutcome selection;
    Estimates estimates;
    PredictionErrors prediction;
    double lambda = 0.0;
};

struct MetricsReport
{
    model::MethodKind method = model::MethodKind::VSFLQR;
    int replicates = 0;
    int failures = 0;
    SelectionRates selection;
    EstimationMetrics estimation;
    double mspe = 0.0;
    double mape = 0.0;
    std::vector<ReplicateRecord> records;
};

/// Replicate seed = base seed + replicate index.
inline std::uint64_t replicate_seed(std::uint64_t base, int rep)
{
    return base + static_cast<std::uint64_t>(rep);
}

inline SelectionOutcome outcome_from_model(const model::FLQRModel& m)
{
    SelectionOutcome o;
    for (Eigen::Index k = 0; k < m.beta.size(); ++k)
        if (m.beta[k] != 0.0)
            o.scalars.insert(static_cast<int>(k) + 1);
    for (std::size_t j = 0; j < m.functional.size(); ++j)
        if (m.functional[j].selected())
            o.functional.insert(static_cast<int>(j) + 1);
    return o;
}

/// Runs jobs [0, count) on up to `threads` workers; job results must be written by index.
inline void parallel_for(int count, int threads, const std::function<void(int)>& job)
{
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int k = 0; k < count; ++k)
            job(k);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int k = next++; k < count; k = next++)
                    job(k);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

class monte_carlo_failure : public numerical_error
{
public:
    using numerical_error::numerical_error;
};

inline MetricsReport aggregate(model::MethodKind method, std::vector<ReplicateRecord> records,
                               const QuantileCoefficients& truth, const Eigen::VectorXd& grid)
{
    MetricsReport r;
    r.method = method;
    std::vector<SelectionOutcome> outcomes;
    std::vector<Estimates> estimates;
    for (const auto& rec : records) {
        if (rec.failed) {
            ++r.failures;
            continue;
        }
        outcomes.push_back(rec.selection);
        estimates.push_back(rec.estimates);
        r.mspe += rec.prediction.mspe;
        r.mape += rec.prediction.mape;
    }
    r.replicates = static_cast<int>(outcomes.size());
    r.selection = selection_metrics(outcomes);
    if (!estimates.empty()) {
        r.estimation = estimation_metrics(estimates, truth, grid);
        r.mspe /= double(r.replicates);
        r.mape /= double(r.replicates);
    }
    r.records = std::move(records);
    return r;
}

/// One generated dataset scored under one method.
inline ReplicateRecord run_replicate(const Scenario& sc, model::MethodKind method, double tau,
                                     const model::FitOptions& opt)
{
    ReplicateRecord rec;
    const model::FLQRModel m = model::fit(sc.train, tau, method, opt);
    rec.selection = outcome_from_model(m);
    rec.estimates.beta = m.beta;
    for (std::size_t j = 0; j < m.functional.size(); ++j)
        rec.estimates.gamma_curves.push_back(m.coefficient_curve(j));
    if (sc.test.y.size() > 0)
        rec.prediction = prediction_metrics(m, sc.test);
    rec.lambda = m.lambda;
    return rec;
}

inline std::vector<MetricsReport> run_monte_carlo(const ScenarioConfig& cfg,
                                                  const std::vector<model::MethodKind>& methods,
                                                  const model::FitOptions& opt = {}, int threads = 1)
{
    cfg.validate();
    if (methods.empty())
        throw validation_error("run_monte_carlo: no methods requested");
    const std::size_t n_methods = methods.size();
    std::vector<std::vector<ReplicateRecord>> records(
        n_methods, std::vector<ReplicateRecord>(static_cast<std::size_t>(cfg.n_reps)));

    parallel_for(cfg.n_reps, threads, [&](int rep) {
        ScenarioConfig rc = cfg;
        rc.seed = replicate_seed(cfg.seed, rep);
        Scenario sc;
        std::string gen_error;
        try {
            sc = generate_scenario(rc);
        } catch (const error& e) {
            gen_error = e.what();
        }
        for (std::size_t k = 0; k < n_methods; ++k) {
            ReplicateRecord rec;
            if (gen_error.empty()) {
                try {
                    rec = run_replicate(sc, methods[k], cfg.tau, opt);
                } catch (const error& e) {
                    rec.failed = true;
                    rec.failure = e.what();
                }
            } else {
                rec.failed = true;
                rec.failure = gen_error;
            }
            rec.replicate = rep;
            rec.seed = rc.seed;
            records[k][static_cast<std::size_t>(rep)] = std::move(rec);
        }
    });

    const TrueModel truth = true_model(cfg.grid_points);
    const QuantileCoefficients qc = true_quantile_coefficients(truth, cfg.tau);
    std::vector<MetricsReport> reports;
    for (std::size_t k = 0; k < n_methods; ++k) {
        MetricsReport r = aggregate(methods[k], std::move(records[k]), qc, truth.grid);
        if (double(r.failures) > 0.1 * double(cfg.n_reps))
            throw monte_carlo_failure("monte carlo: " + std::to_string(r.failures) + " of " +
                                      std::to_string(cfg.n_reps) + " replicates failed for " +
                                      model::to_string(methods[k]));
        reports.push_back(std::move(r));
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Pseudo-variable experiment

/// a sqrt(10) sin(pi j h / 24) + b sqrt(10) cos(pi j h / 24) on the grid (hours).
inline Eigen::VectorXd pseudo_curve(int frequency, double a, double b, const Eigen::VectorXd& hours)
{
    using std::numbers::pi;
    const double root10 = std::sqrt(10.0);
    const Eigen::ArrayXd arg = (pi * double(frequency) / 24.0) * hours.array();
    return (a * root10 * arg.sin() + b * root10 * arg.cos()).matrix();
}

struct PseudoConfig
{
    int n_pseudo = 10;
    int n_reps = 100;
    std::uint64_t seed = 1;
    double amplitude_sd = 10.0;  // 0 zeroes every pseudo-curve (test hook)
};

struct PseudoTable
{
    std::vector<std::string> variables;
    std::vector<std::string> kinds;  // "scalar", "functional", "pseudo"
    std::vector<int> counts;
    int replicates = 0;

    double percent(std::size_t k) const
    {
        return replicates > 0 ? 100.0 * counts.at(k) / double(replicates) : 0.0;
    }
};

/// Appends pseudo-curves to a copy of the data; frequencies continue after the original covariates.
inline model::TrainingData augment_with_pseudo(const model::TrainingData& data,
                                               const PseudoConfig& cfg, Rng& rng)
{
    if (data.functional.empty())
        throw validation_error("pseudo-variable experiment needs at least one functional covariate");
    const auto& ref = data.functional.front();
    if (std::abs(ref.domain_start) > 1e-9 || std::abs(ref.domain_end - 24.0) > 1e-9)
        throw validation_error("pseudo-variable experiment expects the functional domain [0,24]");
    model::TrainingData out = data;
    const int first_frequency = static_cast<int>(data.functional.size()) + 1;
    for (int k = 0; k < cfg.n_pseudo; ++k) {
        funcdata::FunctionalDataset d;
        d.covariate_id = "P" + std::to_string(k + 1);
        d.domain_start = ref.domain_start;
        d.domain_end = ref.domain_end;
        d.common_grid = ref.common_grid;
        for (const auto& id : data.subject_ids) {
            const double a = rng.normal(0.0, cfg.amplitude_sd);
            const double b = rng.normal(0.0, cfg.amplitude_sd);
            const Eigen::VectorXd curve = pseudo_curve(first_frequency + k, a, b, ref.common_grid);
            funcdata::FunctionalSample s;
            s.subject_id = id;
            s.times.assign(ref.common_grid.data(), ref.common_grid.data() + ref.common_grid.size());
            s.values.assign(curve.data(), curve.data() + curve.size());
            d.samples.push_back(std::move(s));
        }
        out.functional.push_back(std::move(d));
    }
    return out;
}

inline PseudoTable pseudo_variable_experiment(const model::TrainingData& data, double tau,
                                              model::MethodKind method, const model::FitOptions& opt,
                                              const PseudoConfig& cfg, int threads = 1)
{
    if (cfg.n_reps < 1 || cfg.n_pseudo < 0)
        throw validation_error("pseudo-variable experiment: invalid replicate/pseudo counts");
    PseudoTable t;
    for (const auto& s : data.scalar_names) {
        t.variables.push_back(s);
        t.kinds.push_back("scalar");
    }
    for (const auto& f : data.functional) {
        t.variables.push_back(f.covariate_id);
        t.kinds.push_back("functional");
    }
    for (int k = 0; k < cfg.n_pseudo; ++k) {
        t.variables.push_back("P" + std::to_string(k + 1));
        t.kinds.push_back("pseudo");
    }
    std::vector<std::vector<char>> picked(static_cast<std::size_t>(cfg.n_reps));
    parallel_for(cfg.n_reps, threads, [&](int rep) {
        Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(rep));
        const model::TrainingData augmented = augment_with_pseudo(data, cfg, rng);
        const model::FLQRModel m = model::fit(augmented, tau, method, opt);
        std::vector<char> sel;
        for (Eigen::Index k = 0; k < m.beta.size(); ++k)
            sel.push_back(m.beta[k] != 0.0);
        for (const auto& c : m.functional)
            sel.push_back(c.selected());
        picked[static_cast<std::size_t>(rep)] = std::move(sel);
    });
    t.counts.assign(t.variables.size(), 0);
    for (const auto& sel : picked)
        for (std::size_t k = 0; k < sel.size(); ++k)
            t.counts[k] += sel[k];
    t.replicates = cfg.n_reps;
    return t;
}

/// Synthetic stand-in for diurnal data on [0,24]: five scalars (X1..X3 active) and four
/// Fourier-generated curves of which L2 is active.
inline model::TrainingData generate_diurnal_dataset(int n, std::uint64_t seed, int grid_points = 97)
{
    using std::numbers::pi;
    if (n < 10)
        throw validation_error("diurnal dataset: n must be at least 10");
    Rng rng(seed);
    const Eigen::VectorXd grid = funcdata::uniform_grid(0.0, 24.0, grid_points);
    const Eigen::VectorXd w = funcdata::trapezoid_weights(grid);
    constexpr int harmonics = 4;
    // L2-orthonormal Fourier functions on [0,24]
    Eigen::MatrixXd basis(2 * harmonics, grid.size());
    for (int q = 0; q < harmonics; ++q) {
        const Eigen::ArrayXd arg = (2.0 * pi * (q + 1) / 24.0) * grid.array();
        basis.row(2 * q) = (arg.sin() / std::sqrt(12.0)).matrix().transpose();
        basis.row(2 * q + 1) = (arg.cos() / std::sqrt(12.0)).matrix().transpose();
    }
    const Eigen::VectorXd gamma_active =
        (0.4 * (2.0 * pi / 24.0 * grid.array()).sin() + 0.3 * (4.0 * pi / 24.0 * grid.array()).cos()).matrix();

    model::TrainingData d;
    d.scalar_names = {"X1", "X2", "X3", "X4", "X5"};
    d.scalars.resize(n, 5);
    d.y.resize(n);
    std::vector<Eigen::MatrixXd> curves(4, Eigen::MatrixXd(n, grid.size()));
    for (int i = 0; i < n; ++i) {
        d.subject_ids.push_back(detail::subject_name("D", i));
        for (int b = 0; b < 5; ++b)
            d.scalars(i, b) = rng.uniform(-1.0, 1.0);
        for (int j = 0; j < 4; ++j) {
            Eigen::VectorXd omega(2 * harmonics);
            for (int q = 0; q < 2 * harmonics; ++q)
                omega[q] = rng.normal(0.0, std::sqrt(8.0 / double(q / 2 + 1)));
            curves[static_cast<std::size_t>(j)].row(i) = (basis.transpose() * omega).transpose();
        }
        const double signal = 1.0 + 2.0 * d.scalars(i, 0) - 1.5 * d.scalars(i, 1) + d.scalars(i, 2) +
                              curves[1].row(i).dot(w.cwiseProduct(gamma_active));
        d.y[i] = signal + 0.5 * rng.normal();
    }
    for (int j = 0; j < 4; ++j) {
        funcdata::FunctionalDataset fd;
        fd.covariate_id = "L" + std::to_string(j + 1);
        fd.domain_start = 0.0;
        fd.domain_end = 24.0;
        fd.common_grid = grid;
        for (int i = 0; i < n; ++i) {
            funcdata::FunctionalSample s;
            s.subject_id = d.subject_ids[static_cast<std::size_t>(i)];
            s.times.assign(grid.data(), grid.data() + grid.size());
            const Eigen::VectorXd row = curves[static_cast<std::size_t>(j)].row(i).transpose();
            s.values.assign(row.data(), row.data() + row.size());
            fd.samples.push_back(std::move(s));
        }
        d.functional.push_back(std::move(fd));
    }
    return d;
}

} // namespace vsflqr::simbench
