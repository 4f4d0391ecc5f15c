#pragma once
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>
#include <Eigen/Core>
#include <vsflqr/errors.hpp>
#include <vsflqr/funcdata.hpp>
#include <vsflqr/solver.hpp>

// End-to-end functional linear quantile regression with variable selection:
// FPCA per functional covariate, group descent over a lambda path, EBIC
// selection, coefficient-function reconstruction and prediction.
namespace vsflqr::model {

enum class MethodKind {
    VSFLQR,     // group MCP + Huber-quantile loss
    RQ_GLASSO,  // group LASSO + Huber-quantile loss
    LS_GLASSO,  // group LASSO + squared loss (mean regression)
};

inline std::string to_string(MethodKind m)
{
    switch (m) {
    case MethodKind::VSFLQR: return "vsflqr";
    case MethodKind::RQ_GLASSO: return "rq-glasso";
    case MethodKind::LS_GLASSO: return "ls-glasso";
    }
    return "unknown";
}

inline MethodKind parse_method(const std::string& s)
{
    if (s == "vsflqr") return MethodKind::VSFLQR;
    if (s == "rq-glasso") return MethodKind::RQ_GLASSO;
    if (s == "ls-glasso") return MethodKind::LS_GLASSO;
    throw validation_error("unknown method '" + s + "' (expected vsflqr, rq-glasso or ls-glasso)");
}

struct FitOptions
{
    double pve = 0.99;
    double gamma = 0.2;
    double phi = 3.0;
    int n_lambda = 100;
    double min_ratio = 0.0;  // 0 selects the default for the design size
    double tol = 1e-7;
    int max_iter = 10000;
    solver::CriterionForm criterion = solver::CriterionForm::Schwarz;
    funcdata::SparseScoring sparse_scoring = funcdata::SparseScoring::Completion;
};

struct TrainingData
{
    std::vector<std::string> subject_ids;
    std::vector<std::string> scalar_names;
    Eigen::MatrixXd scalars;  // n x B, intercept excluded
    std::vector<funcdata::FunctionalDataset> functional;
    Eigen::VectorXd y;
};

struct PredictionData
{
    std::vector<std::string> subject_ids;
    std::vector<std::string> scalar_names;
    Eigen::MatrixXd scalars;
    std::vector<funcdata::FunctionalDataset> functional;
};

struct FunctionalComponent
{
    std::string covariate_id;
    double domain_start = 0.0;
    double domain_end = 1.0;
    funcdata::EigenSystem eigensystem;
    Eigen::VectorXd alpha;                       // length Q_j
    std::optional<Eigen::VectorXd> gamma_curve;  // present only when selected

    bool selected() const { return gamma_curve.has_value(); }
};

struct FLQRModel
{
    double tau = 0.5;
    MethodKind method = MethodKind::VSFLQR;
    FitOptions options;
    std::vector<std::string> scalar_names;
    double intercept = 0.0;
    Eigen::VectorXd beta;
    std::vector<FunctionalComponent> functional;
    double lambda = 0.0;
    double ebic = 0.0;
    bool converged = true;
    Eigen::VectorXd fitted;  // in-sample linear predictor, not serialized

    /// Gamma_j on its grid; zero for unselected covariates.
    Eigen::VectorXd coefficient_curve(std::size_t j) const
    {
        const auto& c = functional.at(j);
        return c.gamma_curve ? *c.gamma_curve : Eigen::VectorXd::Zero(c.eigensystem.grid.size());
    }
};

inline solver::SolverConfig solver_config(MethodKind method, double tau, const FitOptions& opt)
{
    solver::SolverConfig cfg;
    cfg.tau = tau;
    cfg.gamma = opt.gamma;
    cfg.phi = opt.phi;
    cfg.tol = opt.tol;
    cfg.max_iter = opt.max_iter;
    cfg.penalty = method == MethodKind::VSFLQR ? losspen::PenaltyKind::MCP : losspen::PenaltyKind::LASSO;
    cfg.loss = method == MethodKind::LS_GLASSO ? solver::LossKind::Squared
                                               : solver::LossKind::HuberQuantile;
    return cfg;
}

/// Gamma_hat(s) = alpha^T phi(s) on the eigensystem grid.
inline Eigen::VectorXd reconstruct_coefficient(const Eigen::VectorXd& alpha,
                                               const funcdata::EigenSystem& es)
{
    if (alpha.size() != es.rank())
        throw dimension_error("reconstruct_coefficient: alpha has " + std::to_string(alpha.size()) +
                              " entries but the eigensystem has rank " + std::to_string(es.rank()));
    if (es.rank() == 0)
        return Eigen::VectorXd::Zero(es.eigenfunctions.cols());
    return es.eigenfunctions.transpose() * alpha;
}

namespace detail {

inline funcdata::FunctionalDataset align_subjects(const funcdata::FunctionalDataset& d,
                                                  const std::vector<std::string>& order)
{
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        if (!index.emplace(d.samples[i].subject_id, i).second)
            throw validation_error("covariate '" + d.covariate_id + "': duplicate subject '" +
                                   d.samples[i].subject_id + "'");
    funcdata::FunctionalDataset out = d;
    out.samples.clear();
    out.samples.reserve(order.size());
    for (const auto& id : order) {
        auto it = index.find(id);
        if (it == index.end())
            throw validation_error("covariate '" + d.covariate_id + "': missing subject '" + id + "'");
        out.samples.push_back(d.samples[it->second]);
    }
    return out;
}

inline void check_training(const TrainingData& data)
{
    const auto n = static_cast<Eigen::Index>(data.subject_ids.size());
    if (data.y.size() != n || data.scalars.rows() != n)
        throw dimension_error("training data: inconsistent number of subjects");
    if (static_cast<Eigen::Index>(data.scalar_names.size()) != data.scalars.cols())
        throw dimension_error("training data: scalar names do not match the scalar columns");
    if (data.scalar_names.empty() && data.functional.empty())
        throw validation_error("training data: no covariates");
    for (const auto& f : data.functional)
        if (f.samples.empty())
            throw validation_error("covariate '" + f.covariate_id + "': empty functional dataset");
}

} // namespace detail

/// Full pipeline output: the model plus the path it was selected from.
struct FitOutput
{
    FLQRModel model;
    solver::DesignBlocks design;
    solver::PathResult path;
};

inline FitOutput fit_detailed(const TrainingData& data, double tau, MethodKind method,
                              const FitOptions& opt = {})
{
    detail::check_training(data);
    FitOutput out;
    FLQRModel& m = out.model;
    m.tau = tau;
    m.method = method;
    m.options = opt;
    m.scalar_names = data.scalar_names;

    std::vector<Eigen::MatrixXd> blocks;
    for (const auto& raw : data.functional) {
        funcdata::FpcaResult fr;
        try {
            fr = funcdata::run_fpca(detail::align_subjects(raw, data.subject_ids), opt.pve, opt.sparse_scoring);
        } catch (const error& e) {
            throw validation_error("covariate '" + raw.covariate_id + "': " + e.what());
        }
        FunctionalComponent c;
        c.covariate_id = raw.covariate_id;
        c.domain_start = raw.domain_start;
        c.domain_end = raw.domain_end;
        c.eigensystem = std::move(fr.eigensystem);
        blocks.push_back(std::move(fr.scores.scores));
        m.functional.push_back(std::move(c));
    }

    out.design = solver::build_design(data.scalars, blocks);
    const solver::SolverConfig cfg = solver_config(method, tau, opt);
    const double ratio = opt.min_ratio > 0.0 ? opt.min_ratio : solver::default_min_ratio(out.design);
    out.path = solver::lambda_path(out.design, data.y, cfg, opt.n_lambda, ratio);
    const int p_total = static_cast<int>(data.scalar_names.size() + data.functional.size());
    solver::ebic_select(out.path, out.design, data.y, cfg.loss, tau, p_total, opt.criterion);

    const solver::FitResult& best = out.path.selected_fit();
    m.intercept = best.intercept;
    m.beta = best.beta;
    m.lambda = out.path.lambdas[out.path.selected];
    m.ebic = out.path.ebic[out.path.selected];
    m.converged = best.converged;
    for (std::size_t j = 0; j < m.functional.size(); ++j) {
        auto& c = m.functional[j];
        c.alpha = best.alpha[j];
        if (!c.alpha.isZero(0.0))
            c.gamma_curve = reconstruct_coefficient(c.alpha, c.eigensystem);
    }
    m.fitted = solver::linear_predictor(out.design, best.standardized);
    return out;
}

inline FLQRModel fit(const TrainingData& data, double tau, MethodKind method,
                     const FitOptions& opt = {})
{
    return fit_detailed(data, tau, method, opt).model;
}

/// Scores of new curves against a fitted component (training mean and eigenfunctions).
inline Eigen::MatrixXd project_scores(const FunctionalComponent& c,
                                      const funcdata::FunctionalDataset& d,
                                      const std::vector<std::string>& order,
                                      funcdata::SparseScoring how = funcdata::SparseScoring::Completion)
{
    if (std::abs(d.domain_start - c.domain_start) > 1e-9 || std::abs(d.domain_end - c.domain_end) > 1e-9)
        throw validation_error("covariate '" + c.covariate_id + "': domain does not match the model");
    funcdata::FunctionalDataset aligned = detail::align_subjects(d, order);
    aligned.common_grid = c.eigensystem.grid;
    return funcdata::score_dataset(aligned, c.eigensystem, how).scores;
}

/// Predicted conditional quantiles (conditional means for LS-GLASSO).
inline Eigen::VectorXd predict(const FLQRModel& m, const PredictionData& data)
{
    const auto n = static_cast<Eigen::Index>(data.subject_ids.size());
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, m.intercept);

    if (data.scalars.rows() != n && !(data.scalars.size() == 0 && m.scalar_names.empty()))
        throw dimension_error("prediction data: scalar rows do not match subjects");
    for (std::size_t k = 0; k < m.scalar_names.size(); ++k) {
        const auto it = std::find(data.scalar_names.begin(), data.scalar_names.end(), m.scalar_names[k]);
        if (it == data.scalar_names.end())
            throw validation_error("prediction data: missing scalar covariate '" + m.scalar_names[k] + "'");
        const auto col = static_cast<Eigen::Index>(it - data.scalar_names.begin());
        const double b = m.beta[static_cast<Eigen::Index>(k)];
        if (b != 0.0)
            eta.noalias() += b * data.scalars.col(col);
    }

    std::map<std::string, const funcdata::FunctionalDataset*> provided;
    for (const auto& d : data.functional) {
        const bool known = std::any_of(m.functional.begin(), m.functional.end(),
                                       [&](const FunctionalComponent& c) { return c.covariate_id == d.covariate_id; });
        if (!known)
            throw validation_error("prediction data: unknown covariate '" + d.covariate_id + "'");
        provided[d.covariate_id] = &d;
    }
    for (const auto& c : m.functional) {
        const auto it = provided.find(c.covariate_id);
        if (it == provided.end())
            throw validation_error("prediction data: missing covariate '" + c.covariate_id + "'");
        if (!c.selected())
            continue;
        eta.noalias() += project_scores(c, *it->second, data.subject_ids, m.options.sparse_scoring) * c.alpha;
    }
    return eta;
}

struct SelectionReport
{
    std::vector<std::string> scalars;
    std::vector<std::string> functional;
    std::size_t nu = 0;
    double lambda = 0.0;
    double ebic = 0.0;
};

inline SelectionReport selected_variables(const FLQRModel& m)
{
    SelectionReport r;
    for (Eigen::Index k = 0; k < m.beta.size(); ++k)
        if (m.beta[k] != 0.0)
            r.scalars.push_back(m.scalar_names[static_cast<std::size_t>(k)]);
    for (const auto& c : m.functional)
        if (c.selected())
            r.functional.push_back(c.covariate_id);
    r.nu = r.scalars.size() + r.functional.size();
    r.lambda = m.lambda;
    r.ebic = m.ebic;
    return r;
}

} // namespace vsflqr::model
