#pragma once
#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>
#include <Eigen/Core>
#include <json.hpp>
#include <vsflqr/errors.hpp>
#include <vsflqr/funcdata.hpp>
#include <vsflqr/lmoments.hpp>
#include <vsflqr/model.hpp>
#include <vsflqr/simbench.hpp>

// CSV and JSON formats read and written by the command-line tool.
namespace vsflqr::io {

using json = nlohmann::json;

/// Malformed input file; carries the 1-based line number when known.
class schema_error : public validation_error
{
public:
    schema_error(const std::string& file, std::size_t line, const std::string& what)
        : validation_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line)
    {
    }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Twelve significant digits; NaN is written as NA.
inline std::string fmt(double x)
{
    if (std::isnan(x))
        return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

struct CsvRow
{
    std::size_t line = 0;
    std::vector<std::string> fields;
};

struct CsvTable
{
    std::string source;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    std::size_t column(const std::string& name) const
    {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw schema_error(source, 1, "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

inline std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t\r");
        const auto e = f.find_last_not_of(" \t\r");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

inline CsvTable parse_csv(std::istream& in, const std::string& source)
{
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (t.header.empty()) {
            t.header = split_line(line);
            continue;
        }
        CsvRow row{number, split_line(line)};
        if (row.fields.size() != t.header.size())
            throw schema_error(source, number,
                               "expected " + std::to_string(t.header.size()) + " fields, got " +
                                   std::to_string(row.fields.size()));
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty())
        throw schema_error(source, 0, "empty file");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw validation_error("cannot open '" + path.string() + "' for reading");
    return parse_csv(in, path.string());
}

inline void require_header(const CsvTable& t, const std::vector<std::string>& expected)
{
    if (t.header != expected) {
        std::string want;
        for (const auto& c : expected)
            want += (want.empty() ? "" : ",") + c;
        throw schema_error(t.source, 1, "header must be '" + want + "'");
    }
}

inline double parse_number(const CsvTable& t, const CsvRow& row, std::size_t col, bool allow_na = false)
{
    const std::string& s = row.fields.at(col);
    if (allow_na && (s == "NA" || s == "nan" || s.empty()))
        return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
        throw schema_error(t.source, row.line, "column '" + t.header[col] + "': invalid number '" + s + "'");
    return v;
}

inline long parse_integer(const CsvTable& t, const CsvRow& row, std::size_t col)
{
    const std::string& s = row.fields.at(col);
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw schema_error(t.source, row.line, "column '" + t.header[col] + "': invalid integer '" + s + "'");
    return v;
}

inline const std::string& parse_id(const CsvTable& t, const CsvRow& row, std::size_t col)
{
    const std::string& s = row.fields.at(col);
    if (s.empty())
        throw schema_error(t.source, row.line, "column '" + t.header[col] + "' is empty");
    return s;
}

class CsvWriter
{
public:
    explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path)
    {
        if (!out_)
            throw validation_error("cannot open '" + path.string() + "' for writing");
    }

    template <class... Fields>
    void row(const Fields&... fields)
    {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
        out_ << '\n';
    }

    void row(const std::vector<std::string>& fields)
    {
        for (std::size_t k = 0; k < fields.size(); ++k)
            out_ << (k ? "," : "") << fields[k];
        out_ << '\n';
    }

    ~CsvWriter() = default;

    void close()
    {
        out_.close();
        if (!out_)
            throw validation_error("failed writing '" + path_.string() + "'");
    }

private:
    static std::string cell(double x) { return fmt(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(long x) { return std::to_string(x); }
    static std::string cell(std::size_t x) { return std::to_string(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }

    std::filesystem::path path_;
    std::ofstream out_;
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& t)
{
    CsvWriter w(path);
    w.row(t.header);
    for (const auto& r : t.rows)
        w.row(r.fields);
    w.close();
}

// ---------------------------------------------------------------- functional

struct GridSpec
{
    std::optional<double> domain_start;
    std::optional<double> domain_end;
    std::optional<int> points;
};

/// Sorted distinct values, merging those closer than a relative 1e-9.
inline Eigen::VectorXd distinct_times(std::vector<double> t)
{
    std::sort(t.begin(), t.end());
    std::vector<double> out;
    for (double v : t)
        if (out.empty() || std::abs(v - out.back()) > 1e-9 * std::max(1.0, std::abs(v)))
            out.push_back(v);
    return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

/// Long-format functional CSV, one dataset per covariate in order of first appearance.
/// Without a grid specification the domain spans the observed times and the
/// grid is the set of distinct observed times.
inline std::vector<funcdata::FunctionalDataset> parse_functional(const CsvTable& t, const GridSpec& spec = {})
{
    require_header(t, {"subject_id", "covariate_id", "time", "value"});
    struct Acc
    {
        std::vector<std::string> subjects;
        std::unordered_map<std::string, std::map<double, double>> points;
        std::vector<double> times;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Acc> acc;
    for (const auto& row : t.rows) {
        const std::string& sid = parse_id(t, row, 0);
        const std::string& cid = parse_id(t, row, 1);
        const double time = parse_number(t, row, 2);
        const double value = parse_number(t, row, 3);
        auto [it, fresh] = acc.try_emplace(cid);
        if (fresh)
            order.push_back(cid);
        auto [pit, new_subject] = it->second.points.try_emplace(sid);
        if (new_subject)
            it->second.subjects.push_back(sid);
        if (!pit->second.emplace(time, value).second)
            throw schema_error(t.source, row.line, "duplicate time for subject '" + sid + "', covariate '" + cid + "'");
        it->second.times.push_back(time);
    }
    if (order.empty())
        throw schema_error(t.source, 0, "no functional observations");

    std::vector<funcdata::FunctionalDataset> out;
    for (const auto& cid : order) {
        Acc& a = acc.at(cid);
        funcdata::FunctionalDataset d;
        d.covariate_id = cid;
        const auto [lo, hi] = std::minmax_element(a.times.begin(), a.times.end());
        d.domain_start = spec.domain_start.value_or(*lo);
        d.domain_end = spec.domain_end.value_or(*hi);
        if (!(d.domain_end > d.domain_start))
            throw schema_error(t.source, 0, "covariate '" + cid + "': domain is empty");
        d.common_grid = spec.points ? funcdata::uniform_grid(d.domain_start, d.domain_end, *spec.points)
                                    : distinct_times(a.times);
        for (const auto& sid : a.subjects) {
            funcdata::FunctionalSample s;
            s.subject_id = sid;
            for (const auto& [time, value] : a.points.at(sid)) {
                s.times.push_back(time);
                s.values.push_back(value);
            }
            d.samples.push_back(std::move(s));
        }
        try {
            funcdata::validate_dataset(d);
        } catch (const error& e) {
            throw schema_error(t.source, 0, e.what());
        }
        out.push_back(std::move(d));
    }
    return out;
}

inline std::vector<funcdata::FunctionalDataset> read_functional_csv(const std::filesystem::path& path,
                                                                     const GridSpec& spec = {})
{
    return parse_functional(read_csv(path), spec);
}

inline void write_functional_csv(const std::filesystem::path& path,
                                 const std::vector<funcdata::FunctionalDataset>& data)
{
    CsvWriter w(path);
    w.row("subject_id", "covariate_id", "time", "value");
    for (const auto& d : data)
        for (const auto& s : d.samples)
            for (std::size_t k = 0; k < s.times.size(); ++k)
                w.row(s.subject_id, d.covariate_id, s.times[k], s.values[k]);
    w.close();
}

// ---------------------------------------------------------------- scalars and responses

struct ScalarTable
{
    std::vector<std::string> subject_ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // subjects x names
};

inline ScalarTable parse_scalars(const CsvTable& t)
{
    if (t.header.empty() || t.header.front() != "subject_id")
        throw schema_error(t.source, 1, "first column must be 'subject_id'");
    ScalarTable s;
    s.names.assign(t.header.begin() + 1, t.header.end());
    for (std::size_t k = 0; k < s.names.size(); ++k)
        if (std::count(s.names.begin(), s.names.end(), s.names[k]) > 1)
            throw schema_error(t.source, 1, "duplicate column '" + s.names[k] + "'");
    s.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(s.names.size()));
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string& sid = parse_id(t, row, 0);
        if (!seen.emplace(sid, i).second)
            throw schema_error(t.source, row.line, "duplicate subject '" + sid + "'");
        s.subject_ids.push_back(sid);
        for (std::size_t k = 0; k < s.names.size(); ++k)
            s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = parse_number(t, row, k + 1);
    }
    return s;
}

inline ScalarTable read_scalar_csv(const std::filesystem::path& path) { return parse_scalars(read_csv(path)); }

inline void write_scalar_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                             const std::vector<std::string>& names, const Eigen::MatrixXd& values)
{
    CsvWriter w(path);
    std::vector<std::string> header{"subject_id"};
    header.insert(header.end(), names.begin(), names.end());
    w.row(header);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::vector<std::string> f{ids[static_cast<std::size_t>(i)]};
        for (Eigen::Index k = 0; k < values.cols(); ++k)
            f.push_back(fmt(values(i, k)));
        w.row(f);
    }
    w.close();
}

struct ResponseTable
{
    std::vector<std::string> subject_ids;
    Eigen::VectorXd y;
};

inline ResponseTable parse_response(const CsvTable& t)
{
    require_header(t, {"subject_id", "y"});
    ResponseTable r;
    r.y.resize(static_cast<Eigen::Index>(t.rows.size()));
    std::unordered_map<std::string, int> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::string& sid = parse_id(t, t.rows[i], 0);
        if (!seen.emplace(sid, 0).second)
            throw schema_error(t.source, t.rows[i].line, "duplicate subject '" + sid + "'");
        r.subject_ids.push_back(sid);
        r.y[static_cast<Eigen::Index>(i)] = parse_number(t, t.rows[i], 1);
    }
    if (r.subject_ids.empty())
        throw schema_error(t.source, 0, "no responses");
    return r;
}

inline ResponseTable read_response_csv(const std::filesystem::path& path) { return parse_response(read_csv(path)); }

inline void write_response_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                               const Eigen::VectorXd& y)
{
    CsvWriter w(path);
    w.row("subject_id", "y");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        w.row(ids[static_cast<std::size_t>(i)], y[i]);
    w.close();
}

/// Scalar rows reordered to `order`; fails naming the first missing subject.
inline Eigen::MatrixXd align_scalars(const ScalarTable& s, const std::vector<std::string>& order)
{
    std::unordered_map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < s.subject_ids.size(); ++i)
        index.emplace(s.subject_ids[i], static_cast<Eigen::Index>(i));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(order.size()), s.values.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto it = index.find(order[i]);
        if (it == index.end())
            throw validation_error("scalar covariates: missing subject '" + order[i] + "'");
        out.row(static_cast<Eigen::Index>(i)) = s.values.row(it->second);
    }
    return out;
}

/// Training set ordered by the response file.
inline model::TrainingData assemble_training(const std::optional<ScalarTable>& scalars,
                                             std::vector<funcdata::FunctionalDataset> functional,
                                             const ResponseTable& response)
{
    model::TrainingData d;
    d.subject_ids = response.subject_ids;
    d.y = response.y;
    if (scalars) {
        d.scalar_names = scalars->names;
        d.scalars = align_scalars(*scalars, d.subject_ids);
    } else {
        d.scalars.resize(static_cast<Eigen::Index>(d.subject_ids.size()), 0);
    }
    d.functional = std::move(functional);
    return d;
}

/// Prediction set ordered by the scalar file, or by the first functional covariate.
inline model::PredictionData assemble_prediction(const std::optional<ScalarTable>& scalars,
                                                 std::vector<funcdata::FunctionalDataset> functional)
{
    model::PredictionData d;
    if (scalars) {
        d.subject_ids = scalars->subject_ids;
        d.scalar_names = scalars->names;
        d.scalars = scalars->values;
    } else if (!functional.empty()) {
        for (const auto& s : functional.front().samples)
            d.subject_ids.push_back(s.subject_id);
        d.scalars.resize(static_cast<Eigen::Index>(d.subject_ids.size()), 0);
    } else {
        throw validation_error("prediction data: no covariates supplied");
    }
    d.functional = std::move(functional);
    return d;
}

// ---------------------------------------------------------------- model outputs

inline void write_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                              double tau, const Eigen::VectorXd& predicted)
{
    CsvWriter w(path);
    w.row("subject_id", "tau", "predicted_quantile");
    for (Eigen::Index i = 0; i < predicted.size(); ++i)
        w.row(ids[static_cast<std::size_t>(i)], tau, predicted[i]);
    w.close();
}

inline void write_coefficient_curves(const std::filesystem::path& path, const model::FLQRModel& m)
{
    CsvWriter w(path);
    w.row("covariate_id", "s", "gamma_hat");
    for (std::size_t j = 0; j < m.functional.size(); ++j) {
        const auto& grid = m.functional[j].eigensystem.grid;
        const Eigen::VectorXd g = m.coefficient_curve(j);
        for (Eigen::Index k = 0; k < grid.size(); ++k)
            w.row(m.functional[j].covariate_id, grid[k], g[k]);
    }
    w.close();
}

/// One row per candidate variable: coefficient magnitude is |beta| or the
/// L2 norm of Gamma_hat over its domain.
inline void write_selection_report(const std::filesystem::path& path, const model::FLQRModel& m)
{
    CsvWriter w(path);
    w.row("variable", "kind", "selected", "magnitude", "lambda", "ebic");
    for (std::size_t k = 0; k < m.scalar_names.size(); ++k) {
        const double b = m.beta[static_cast<Eigen::Index>(k)];
        w.row(m.scalar_names[k], "scalar", b != 0.0 ? 1 : 0, std::abs(b), m.lambda, m.ebic);
    }
    for (std::size_t j = 0; j < m.functional.size(); ++j) {
        const auto& c = m.functional[j];
        const Eigen::VectorXd g = m.coefficient_curve(j);
        const double norm = std::sqrt(c.eigensystem.quadrature_weights.dot(g.cwiseAbs2()));
        w.row(c.covariate_id, "functional", c.selected() ? 1 : 0, norm, m.lambda, m.ebic);
    }
    w.close();
}

// ---------------------------------------------------------------- model JSON

inline constexpr const char* kModelFormat = "vsflqr-model";
inline constexpr int kModelVersion = 1;

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json model_to_json(const model::FLQRModel& m)
{
    json opt = {
        {"pve", m.options.pve},
        {"gamma", m.options.gamma},
        {"phi", m.options.phi},
        {"n_lambda", m.options.n_lambda},
        {"min_ratio", m.options.min_ratio},
        {"tol", m.options.tol},
        {"max_iter", m.options.max_iter},
        {"criterion", m.options.criterion == solver::CriterionForm::Printed ? "printed" : "schwarz"},
        {"sparse_scoring",
         m.options.sparse_scoring == funcdata::SparseScoring::Interpolation ? "interpolation" : "completion"},
    };
    json functional = json::array();
    for (const auto& c : m.functional) {
        const auto& es = c.eigensystem;
        json rows = json::array();
        for (Eigen::Index q = 0; q < es.eigenfunctions.rows(); ++q)
            rows.push_back(to_json(Eigen::VectorXd(es.eigenfunctions.row(q).transpose())));
        functional.push_back({
            {"covariate_id", c.covariate_id},
            {"domain", {c.domain_start, c.domain_end}},
            {"grid", to_json(es.grid)},
            {"mean_curve", to_json(es.mean_curve)},
            {"quadrature_weights", to_json(es.quadrature_weights)},
            {"eigenvalues", to_json(es.eigenvalues)},
            {"pve_achieved", es.pve_achieved},
            {"residual_variance", es.residual_variance},
            {"eigenfunctions", rows},
            {"alpha", to_json(c.alpha)},
            {"gamma_hat", c.gamma_curve ? to_json(*c.gamma_curve) : json(nullptr)},
        });
    }
    return {
        {"format", kModelFormat},
        {"version", kModelVersion},
        {"tau", m.tau},
        {"method", model::to_string(m.method)},
        {"options", opt},
        {"scalar_names", m.scalar_names},
        {"intercept", m.intercept},
        {"beta", to_json(m.beta)},
        {"lambda", m.lambda},
        {"ebic", m.ebic},
        {"converged", m.converged},
        {"functional", functional},
    };
}

inline model::FLQRModel model_from_json(const json& j)
{
    try {
        if (j.at("format").get<std::string>() != kModelFormat)
            throw validation_error("model file: unexpected format");
        if (j.at("version").get<int>() != kModelVersion)
            throw validation_error("model file: unsupported version " + std::to_string(j.at("version").get<int>()));
        model::FLQRModel m;
        m.tau = j.at("tau").get<double>();
        m.method = model::parse_method(j.at("method").get<std::string>());
        const json& o = j.at("options");
        m.options.pve = o.at("pve").get<double>();
        m.options.gamma = o.at("gamma").get<double>();
        m.options.phi = o.at("phi").get<double>();
        m.options.n_lambda = o.at("n_lambda").get<int>();
        m.options.min_ratio = o.at("min_ratio").get<double>();
        m.options.tol = o.at("tol").get<double>();
        m.options.max_iter = o.at("max_iter").get<int>();
        m.options.criterion = o.at("criterion").get<std::string>() == "printed" ? solver::CriterionForm::Printed
                                                                                 : solver::CriterionForm::Schwarz;
        m.options.sparse_scoring = o.value("sparse_scoring", std::string("completion")) == "interpolation"
                                       ? funcdata::SparseScoring::Interpolation
                                       : funcdata::SparseScoring::Completion;
        m.scalar_names = j.at("scalar_names").get<std::vector<std::string>>();
        m.intercept = j.at("intercept").get<double>();
        m.beta = vector_from_json(j.at("beta"));
        m.lambda = j.at("lambda").get<double>();
        m.ebic = j.at("ebic").get<double>();
        m.converged = j.at("converged").get<bool>();
        if (static_cast<Eigen::Index>(m.scalar_names.size()) != m.beta.size())
            throw validation_error("model file: beta does not match the scalar names");
        for (const json& f : j.at("functional")) {
            model::FunctionalComponent c;
            c.covariate_id = f.at("covariate_id").get<std::string>();
            c.domain_start = f.at("domain").at(0).get<double>();
            c.domain_end = f.at("domain").at(1).get<double>();
            auto& es = c.eigensystem;
            es.grid = vector_from_json(f.at("grid"));
            es.mean_curve = vector_from_json(f.at("mean_curve"));
            es.quadrature_weights = vector_from_json(f.at("quadrature_weights"));
            es.eigenvalues = vector_from_json(f.at("eigenvalues"));
            es.pve_achieved = f.at("pve_achieved").get<double>();
            es.residual_variance = f.value("residual_variance", 0.0);
            const json& rows = f.at("eigenfunctions");
            es.eigenfunctions.resize(static_cast<Eigen::Index>(rows.size()), es.grid.size());
            for (std::size_t q = 0; q < rows.size(); ++q) {
                const Eigen::VectorXd r = vector_from_json(rows[q]);
                if (r.size() != es.grid.size())
                    throw validation_error("model file: eigenfunction length does not match the grid");
                es.eigenfunctions.row(static_cast<Eigen::Index>(q)) = r.transpose();
            }
            c.alpha = vector_from_json(f.at("alpha"));
            if (c.alpha.size() != es.rank())
                throw validation_error("model file: alpha does not match the eigenfunctions");
            if (!f.at("gamma_hat").is_null())
                c.gamma_curve = vector_from_json(f.at("gamma_hat"));
            m.functional.push_back(std::move(c));
        }
        return m;
    } catch (const json::exception& e) {
        throw validation_error(std::string("model file: ") + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw validation_error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out)
        throw validation_error("failed writing '" + path.string() + "'");
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw validation_error("cannot open '" + path.string() + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw validation_error("'" + path.string() + "': " + e.what());
    }
}

inline void save_model(const std::filesystem::path& path, const model::FLQRModel& m)
{
    write_json(path, model_to_json(m));
}

inline model::FLQRModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

// ---------------------------------------------------------------- activity and L-moments

/// Minute-level activity; days are kept in ascending day_index order and
/// minutes absent from the file (or NA) are missing.
inline std::vector<lmoments::ActivityRecord> parse_activity(const CsvTable& t)
{
    require_header(t, {"subject_id", "day_index", "minute", "value"});
    std::vector<std::string> order;
    std::unordered_map<std::string, std::map<long, std::vector<double>>> days;
    for (const auto& row : t.rows) {
        const std::string& sid = parse_id(t, row, 0);
        const long day = parse_integer(t, row, 1);
        const long minute = parse_integer(t, row, 2);
        if (minute < 0 || minute >= lmoments::kMinutesPerDay)
            throw schema_error(t.source, row.line, "minute " + std::to_string(minute) + " outside 0-1439");
        const double v = parse_number(t, row, 3, true);
        if (v < 0.0)
            throw schema_error(t.source, row.line, "negative activity value");
        auto [it, fresh] = days.try_emplace(sid);
        if (fresh)
            order.push_back(sid);
        auto& minutes = it->second[day];
        if (minutes.empty())
            minutes.assign(lmoments::kMinutesPerDay, std::numeric_limits<double>::quiet_NaN());
        double& slot = minutes[static_cast<std::size_t>(minute)];
        if (!std::isnan(slot))
            throw schema_error(t.source, row.line, "duplicate minute for subject '" + sid + "'");
        slot = v;
    }
    std::vector<lmoments::ActivityRecord> out;
    for (const auto& sid : order) {
        const auto& d = days.at(sid);
        lmoments::ActivityRecord r;
        r.subject_id = sid;
        r.days.resize(static_cast<Eigen::Index>(d.size()), lmoments::kMinutesPerDay);
        Eigen::Index k = 0;
        for (const auto& [day, minutes] : d)
            r.days.row(k++) = Eigen::Map<const Eigen::RowVectorXd>(minutes.data(), lmoments::kMinutesPerDay);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<lmoments::ActivityRecord> read_activity_csv(const std::filesystem::path& path)
{
    return parse_activity(read_csv(path));
}

inline void write_activity_csv(const std::filesystem::path& path, const std::vector<lmoments::ActivityRecord>& records)
{
    CsvWriter w(path);
    w.row("subject_id", "day_index", "minute", "value");
    for (const auto& r : records)
        for (Eigen::Index d = 0; d < r.days.rows(); ++d)
            for (Eigen::Index m = 0; m < r.days.cols(); ++m)
                w.row(r.subject_id, static_cast<long>(d), static_cast<long>(m), r.days(d, m));
    w.close();
}

inline void write_lmoment_csv(const std::filesystem::path& path, const std::vector<lmoments::LMomentCurves>& curves)
{
    CsvWriter w(path);
    w.row("subject_id", "time_hours", "L1", "L2", "L3", "L4");
    for (const auto& c : curves)
        for (Eigen::Index m = 0; m < c.time_hours.size(); ++m)
            w.row(c.subject_id, c.time_hours[m], c.curves(0, m), c.curves(1, m), c.curves(2, m), c.curves(3, m));
    w.close();
}

inline std::vector<lmoments::LMomentCurves> parse_lmoments(const CsvTable& t)
{
    require_header(t, {"subject_id", "time_hours", "L1", "L2", "L3", "L4"});
    std::vector<lmoments::LMomentCurves> out;
    std::vector<std::vector<std::array<double, 5>>> rows;
    for (const auto& row : t.rows) {
        const std::string& sid = parse_id(t, row, 0);
        if (out.empty() || out.back().subject_id != sid) {
            out.emplace_back();
            out.back().subject_id = sid;
            rows.emplace_back();
        }
        std::array<double, 5> v{parse_number(t, row, 1)};
        for (std::size_t r = 0; r < 4; ++r)
            v[r + 1] = parse_number(t, row, r + 2, true);
        rows.back().push_back(v);
    }
    for (std::size_t s = 0; s < out.size(); ++s) {
        const auto m = static_cast<Eigen::Index>(rows[s].size());
        out[s].time_hours.resize(m);
        out[s].curves.resize(4, m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto& v = rows[s][static_cast<std::size_t>(k)];
            out[s].time_hours[k] = v[0];
            for (Eigen::Index r = 0; r < 4; ++r)
                out[s].curves(r, k) = v[static_cast<std::size_t>(r + 1)];
            if (std::isnan(v[1]))
                ++out[s].missing_points;
        }
    }
    return out;
}

/// L-moment curves as functional covariates named L1..L4, each on [0, 24).
inline std::vector<funcdata::FunctionalDataset> lmoment_covariates(const std::vector<lmoments::LMomentCurves>& curves)
{
    std::vector<funcdata::FunctionalDataset> out(4);
    for (int r = 0; r < 4; ++r) {
        auto& d = out[static_cast<std::size_t>(r)];
        d.covariate_id = "L" + std::to_string(r + 1);
        d.domain_start = 0.0;
        d.domain_end = 24.0;
        d.common_grid = lmoments::minute_grid();
        for (const auto& c : curves) {
            funcdata::FunctionalSample s;
            s.subject_id = c.subject_id;
            for (Eigen::Index m = 0; m < c.time_hours.size(); ++m)
                if (!std::isnan(c.curves(r, m))) {
                    s.times.push_back(c.time_hours[m]);
                    s.values.push_back(c.curves(r, m));
                }
            d.samples.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------- simulation outputs

inline json truth_to_json(const simbench::ScenarioConfig& cfg, const simbench::TrueModel& t)
{
    const simbench::QuantileCoefficients q = simbench::true_quantile_coefficients(t, cfg.tau);
    json curves = json::object();
    for (std::size_t j = 0; j < q.gamma_curves.size(); ++j)
        if (!q.gamma_curves[j].isZero(0.0))
            curves["Z" + std::to_string(j + 1)] = to_json(q.gamma_curves[j]);
    return {
        {"n", cfg.n},
        {"tau", cfg.tau},
        {"design", simbench::to_string(cfg.design)},
        {"seed", cfg.seed},
        {"grid", to_json(t.grid)},
        {"active_scalars", t.active_scalars},
        {"active_functional", t.active_functional},
        {"beta", to_json(t.beta)},
        {"beta_tau", to_json(q.beta)},
        {"gamma_tau", curves},
    };
}

/// Functional covariates of a simulated set in the long CSV layout.
inline void write_simulated(const std::filesystem::path& dir, const std::string& prefix,
                            const std::vector<std::string>& ids, const std::vector<std::string>& scalar_names,
                            const Eigen::MatrixXd& scalars,
                            const std::vector<funcdata::FunctionalDataset>& functional, const Eigen::VectorXd& y)
{
    write_scalar_csv(dir / (prefix + "scalars.csv"), ids, scalar_names, scalars);
    write_functional_csv(dir / (prefix + "functional.csv"), functional);
    write_response_csv(dir / (prefix + "response.csv"), ids, y);
}

inline std::vector<std::string> report_columns(std::size_t n_beta = 3, std::size_t n_gamma = 5)
{
    std::vector<std::string> c{"method", "replicates", "failures", "tpr_scalar", "fpr_scalar", "tpr_functional",
                               "fpr_functional", "tpr_all", "fpr_all", "model_size"};
    for (std::size_t k = 1; k <= n_beta; ++k) {
        c.push_back("bias_beta" + std::to_string(k));
        c.push_back("mse_beta" + std::to_string(k));
    }
    for (std::size_t k = 1; k <= n_gamma; ++k)
        c.push_back("mise_gamma" + std::to_string(k));
    c.push_back("mspe");
    c.push_back("mape");
    return c;
}

inline std::vector<double> report_values(const simbench::MetricsReport& r, std::size_t n_beta = 3,
                                         std::size_t n_gamma = 5)
{
    const auto& s = r.selection;
    std::vector<double> v{s.tpr_scalar, s.fpr_scalar, s.tpr_functional, s.fpr_functional,
                          s.tpr_all,    s.fpr_all,    s.model_size};
    const auto& e = r.estimation;
    for (std::size_t k = 0; k < n_beta; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        v.push_back(i < e.bias.size() ? e.bias[i] : std::numeric_limits<double>::quiet_NaN());
        v.push_back(i < e.mse.size() ? e.mse[i] : std::numeric_limits<double>::quiet_NaN());
    }
    for (std::size_t k = 0; k < n_gamma; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        v.push_back(i < e.mise.size() ? e.mise[i] : std::numeric_limits<double>::quiet_NaN());
    }
    v.push_back(r.mspe);
    v.push_back(r.mape);
    return v;
}

inline void write_report_csv(const std::filesystem::path& path, const std::vector<simbench::MetricsReport>& reports)
{
    CsvWriter w(path);
    w.row(report_columns());
    for (const auto& r : reports) {
        std::vector<std::string> f{model::to_string(r.method), std::to_string(r.replicates),
                                   std::to_string(r.failures)};
        for (double v : report_values(r))
            f.push_back(fmt(v));
        w.row(f);
    }
    w.close();
}

/// Same columns as the CSV report, numbers rounded to twelve significant digits.
inline json report_to_json(const simbench::ScenarioConfig& cfg, const std::vector<simbench::MetricsReport>& reports)
{
    const auto cols = report_columns();
    json rows = json::array();
    for (const auto& r : reports) {
        json row = {{"method", model::to_string(r.method)}, {"replicates", r.replicates}, {"failures", r.failures}};
        const auto vals = report_values(r);
        for (std::size_t k = 0; k < vals.size(); ++k)
            row[cols[k + 3]] = std::isnan(vals[k]) ? json(nullptr) : json(std::stod(fmt(vals[k])));
        rows.push_back(row);
    }
    return {{"n", cfg.n}, {"tau", cfg.tau}, {"design", simbench::to_string(cfg.design)},
            {"seed", cfg.seed}, {"replicates", cfg.n_reps}, {"methods", rows}};
}

/// Per-replicate log: selected variables, lambda and prediction errors.
inline void write_replicate_log(const std::filesystem::path& path, const std::vector<simbench::MetricsReport>& reports)
{
    CsvWriter w(path);
    w.row("method", "replicate", "seed", "failed", "selected_scalars", "selected_functional", "lambda", "mspe",
          "mape");
    auto join = [](const std::set<int>& s, char prefix) {
        std::string out;
        for (int v : s)
            out += (out.empty() ? "" : " ") + std::string(1, prefix) + std::to_string(v);
        return out;
    };
    for (const auto& r : reports)
        for (const auto& rec : r.records)
            w.row(model::to_string(r.method), rec.replicate, std::to_string(rec.seed), rec.failed ? 1 : 0,
                  join(rec.selection.scalars, 'X'), join(rec.selection.functional, 'Z'), rec.lambda,
                  rec.prediction.mspe, rec.prediction.mape);
    w.close();
}

inline void write_pseudo_table(const std::filesystem::path& path, const simbench::PseudoTable& t)
{
    CsvWriter w(path);
    w.row("variable", "kind", "selected", "replicates", "percent");
    for (std::size_t k = 0; k < t.variables.size(); ++k)
        w.row(t.variables[k], t.kinds[k], t.counts[k], t.replicates, t.percent(k));
    w.close();
}

} // namespace vsflqr::io
