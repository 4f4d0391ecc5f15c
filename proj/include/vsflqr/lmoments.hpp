#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>
#include <Eigen/Core>
#include <vsflqr/errors.hpp>

// Sample L-moments and time-of-day L-moment curves from minute-level activity.
namespace vsflqr::lmoments {

inline constexpr int kMinutesPerDay = 1440;
inline constexpr double kDefaultZeta = 5.0 / 60.0;

/// l_1..l_{r_max} from unbiased probability-weighted moments.
inline std::vector<double> sample_lmoments(std::vector<double> values, int r_max = 4)
{
    if (r_max < 1 || r_max > 4)
        throw validation_error("sample_lmoments: r_max must lie in [1, 4]");
    const auto n = static_cast<int>(values.size());
    if (n < r_max)
        throw insufficient_data_error("sample_lmoments: need at least " + std::to_string(r_max) +
                                      " values, got " + std::to_string(n));
    std::stable_sort(values.begin(), values.end());

    std::array<double, 4> b{};
    for (int i = 0; i < n; ++i) {
        // weight_k = C(i, k) / C(n-1, k) with i the 0-based rank
        double w = 1.0;
        for (int k = 0; k < r_max; ++k) {
            if (k > 0)
                w *= static_cast<double>(i - k + 1) / static_cast<double>(n - k);
            b[static_cast<std::size_t>(k)] += w * values[static_cast<std::size_t>(i)];
        }
    }
    for (auto& bk : b)
        bk /= n;

    const std::array<double, 4> l{
        b[0],
        2.0 * b[1] - b[0],
        6.0 * b[2] - 6.0 * b[1] + b[0],
        20.0 * b[3] - 30.0 * b[2] + 12.0 * b[1] - b[0],
    };
    return {l.begin(), l.begin() + r_max};
}

inline double log_transform(double x)
{
    if (!(x >= 0.0))
        throw validation_error("log_transform: activity values must be nonnegative");
    return std::log1p(x);
}

inline std::vector<double> log_transform(const std::vector<double>& values)
{
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values)
        out.push_back(log_transform(v));
    return out;
}

/// Minute-level activity for one subject. NaN marks a missing minute.
struct ActivityRecord
{
    std::string subject_id;
    Eigen::MatrixXd days;           // n_days x 1440
    std::vector<bool> valid_days;   // empty means all days valid

    bool day_valid(Eigen::Index d) const
    {
        return valid_days.empty() || valid_days.at(static_cast<std::size_t>(d));
    }

    void validate() const
    {
        if (days.rows() < 1)
            throw validation_error("subject '" + subject_id + "': no days recorded");
        if (days.cols() != kMinutesPerDay)
            throw dimension_error("subject '" + subject_id + "': expected 1440 minutes per day");
        if (!valid_days.empty() && static_cast<Eigen::Index>(valid_days.size()) != days.rows())
            throw dimension_error("subject '" + subject_id + "': valid-day flags do not match days");
        bool any = false;
        for (Eigen::Index d = 0; d < days.rows(); ++d) {
            if (!day_valid(d))
                continue;
            any = true;
            for (Eigen::Index m = 0; m < days.cols(); ++m)
                if (days(d, m) < 0.0)
                    throw validation_error("subject '" + subject_id + "': negative activity on day " +
                                           std::to_string(d) + " minute " + std::to_string(m));
        }
        if (!any)
            throw validation_error("subject '" + subject_id + "': no valid days");
    }
};

/// Four curves on the grid m/60, m = 0..1439. A window pooling k < 4 values
/// counts as a missing point and carries only L_1..L_k (NaN above).
struct LMomentCurves
{
    std::string subject_id;
    Eigen::VectorXd time_hours;
    Eigen::MatrixXd curves;  // 4 x 1440, row r holds L_{r+1}
    int missing_points = 0;
};

inline Eigen::VectorXd minute_grid()
{
    Eigen::VectorXd g(kMinutesPerDay);
    for (int m = 0; m < kMinutesPerDay; ++m)
        g[m] = m / 60.0;
    return g;
}

inline LMomentCurves diurnal_lmoments(const ActivityRecord& record, double zeta_hours = kDefaultZeta,
                                      double max_missing_fraction = 0.05)
{
    record.validate();
    if (!(zeta_hours > 0.0))
        throw validation_error("diurnal_lmoments: window half-width must be positive");

    // At minute resolution a half-width of k minutes pools minutes m-k..m+k;
    // the tolerance absorbs values such as 0.0833333 h for five minutes.
    const int span = static_cast<int>(std::floor(zeta_hours * 60.0 + 1e-3));

    Eigen::MatrixXd logged = Eigen::MatrixXd::Constant(record.days.rows(), kMinutesPerDay,
                                                       std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index d = 0; d < record.days.rows(); ++d) {
        if (!record.day_valid(d))
            continue;
        for (Eigen::Index m = 0; m < kMinutesPerDay; ++m) {
            const double v = record.days(d, m);
            if (!std::isnan(v))
                logged(d, m) = log_transform(v);
        }
    }

    LMomentCurves out;
    out.subject_id = record.subject_id;
    out.time_hours = minute_grid();
    out.curves = Eigen::MatrixXd::Constant(4, kMinutesPerDay, std::numeric_limits<double>::quiet_NaN());

    std::vector<double> pool;
    for (int m = 0; m < kMinutesPerDay; ++m) {
        const int lo = std::max(0, m - span);
        const int hi = std::min(kMinutesPerDay - 1, m + span);
        pool.clear();
        for (Eigen::Index d = 0; d < logged.rows(); ++d)
            for (int u = lo; u <= hi; ++u)
                if (!std::isnan(logged(d, u)))
                    pool.push_back(logged(d, u));
        const int order = static_cast<int>(std::min<std::size_t>(pool.size(), 4));
        if (order < 4)
            ++out.missing_points;
        if (order == 0)
            continue;
        const auto l = sample_lmoments(pool, order);
        for (int r = 0; r < order; ++r)
            out.curves(r, m) = l[static_cast<std::size_t>(r)];
    }
    if (out.missing_points > max_missing_fraction * kMinutesPerDay)
        throw insufficient_data_error("subject '" + record.subject_id + "': " +
                                      std::to_string(out.missing_points) +
                                      " grid points have fewer than 4 pooled values");
    return out;
}

} // namespace vsflqr::lmoments
