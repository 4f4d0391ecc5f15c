#pragma once
#include <cmath>
#include <Eigen/Core>
#include <vsflqr/errors.hpp>

// Scalar losses, penalties and the thresholding operators used by the
// group descent solver.
namespace vsflqr::losspen {

enum class PenaltyKind { MCP, LASSO };

struct LossParams
{
    double tau = 0.5;
    double gamma = 0.2;

    void validate() const
    {
        if (!(tau > 0.0 && tau < 1.0))
            throw validation_error("tau must lie in (0,1)");
        if (!(gamma > 0.0))
            throw validation_error("gamma must be positive");
    }
};

struct PenaltyParams
{
    double lambda = 0.0;
    double phi = 3.0;
    PenaltyKind kind = PenaltyKind::MCP;

    void validate() const
    {
        if (!(lambda >= 0.0))
            throw validation_error("lambda must be nonnegative");
        if (kind == PenaltyKind::MCP && !(phi > 1.0))
            throw validation_error("MCP concavity phi must exceed 1");
    }
};

/// rho_tau(u) = u (tau - I(u < 0)).
inline double check_loss(double u, double tau)
{
    return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

/// Equivalent absolute-value form (|u| + (2 tau - 1) u) / 2.
inline double check_loss_abs_form(double u, double tau)
{
    return 0.5 * (std::abs(u) + (2.0 * tau - 1.0) * u);
}

inline double huber(double u, double gamma)
{
    const double a = std::abs(u);
    return a <= gamma ? u * u / (2.0 * gamma) : a - 0.5 * gamma;
}

/// h_gamma(u) + (2 tau - 1) u. Note this approximates 2 * rho_tau.
inline double huber_quantile_loss(double u, double tau, double gamma)
{
    return huber(u, gamma) + (2.0 * tau - 1.0) * u;
}

/// Half the derivative of huber_quantile_loss.
inline double huber_quantile_derivative(double r, double tau, double gamma)
{
    const double skew = 2.0 * tau - 1.0;
    if (std::abs(r) <= gamma)
        return 0.5 * (r / gamma + skew);
    return 0.5 * ((r > 0.0 ? 1.0 : -1.0) + skew);
}

/// Minimax concave penalty of a nonnegative magnitude t.
inline double mcp_penalty(double t, double lambda, double phi)
{
    if (t < 0.0)
        throw validation_error("mcp_penalty: magnitude must be nonnegative");
    if (t <= lambda * phi)
        return lambda * t - t * t / (2.0 * phi);
    return 0.5 * lambda * lambda * phi;
}

inline double lasso_penalty(double t, double lambda) { return lambda * t; }

inline double penalty(double t, const PenaltyParams& p)
{
    return p.kind == PenaltyKind::MCP ? mcp_penalty(t, p.lambda, p.phi)
                                      : lasso_penalty(t, p.lambda);
}

inline double soft_threshold(double z, double lambda)
{
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

inline double firm_threshold(double z, double lambda, double phi)
{
    if (!(phi > 1.0))
        throw validation_error("firm_threshold: phi must exceed 1");
    if (std::abs(z) > lambda * phi)
        return z;
    return soft_threshold(z, lambda) / (1.0 - 1.0 / phi);
}

inline double scalar_threshold(double z, double lambda, double phi, PenaltyKind kind)
{
    return kind == PenaltyKind::MCP ? firm_threshold(z, lambda, phi) : soft_threshold(z, lambda);
}

/// Groupwise threshold: shrinks the norm of v, keeps its direction.
template <class Derived>
Eigen::VectorXd group_threshold(const Eigen::MatrixBase<Derived>& v, double lambda,
                                double phi, PenaltyKind kind)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    const double norm = v.norm();
    if (norm == 0.0)
        return out;
    const double shrunk = scalar_threshold(norm, lambda, phi, kind);
    if (shrunk == 0.0)
        return out;
    out = v * (shrunk / norm);
    return out;
}

} // namespace vsflqr::losspen
