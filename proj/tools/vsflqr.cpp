// Command-line front end: simulate, fit, predict, mc, lmoments, pseudo.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <vsflqr/io.hpp>
#include <vsflqr/lmoments.hpp>
#include <vsflqr/model.hpp>
#include <vsflqr/simbench.hpp>

namespace fs = std::filesystem;
using namespace vsflqr;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

/// Flat JSON object of flag values: {"tau": 0.5, "n-lambda": 50, "methods": ["vsflqr"]}.
/// Keys apply to whichever subcommand was given on the command line.
class JsonConfig : public CLI::Config
{
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override
    {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file: ") + e.what());
        }
        if (!j.is_object())
            throw CLI::ConversionError("config file: top level must be an object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            CLI::ConfigItem item;
            if (const auto subs = root_->get_subcommands(); !subs.empty())
                item.parents = {subs.front()->get_name()};
            item.name = key;
            std::replace(item.name.begin(), item.name.end(), '_', '-');
            auto text = [&](const nlohmann::json& v) -> std::string {
                if (v.is_string())
                    return v.get<std::string>();
                if (v.is_boolean())
                    return v.get<bool>() ? "true" : "false";
                if (v.is_number() || v.is_null())
                    return v.dump();
                throw CLI::ConversionError("config file: key '" + key + "' has an unsupported value");
            };
            if (value.is_array())
                for (const auto& v : value)
                    item.inputs.push_back(text(v));
            else
                item.inputs.push_back(text(value));
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    const CLI::App* root_;
};

struct Shared
{
    double tau = 0.5;
    model::FitOptions fit;
    std::uint64_t seed = 1;
    int threads = 1;
    fs::path out = ".";
};

void add_config(CLI::App& app)
{
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.set_config("--config", "", "JSON file of flag values for the subcommand; command-line flags take precedence");
    app.allow_config_extras(false);
}

void add_shared(CLI::App* sub, Shared& s, bool fitting)
{
    sub->add_option("--tau", s.tau, "Quantile level in (0,1)")->capture_default_str();
    sub->add_option("--seed", s.seed, "Base random seed")->capture_default_str();
    sub->add_option("--threads", s.threads, "Worker threads")->envname("VSFLQR_THREADS")->check(CLI::PositiveNumber);
    sub->add_option("--out", s.out, "Output directory")->capture_default_str();
    if (!fitting)
        return;
    sub->add_option("--pve", s.fit.pve, "Proportion of variance explained by retained components")
        ->capture_default_str();
    sub->add_option("--gamma", s.fit.gamma, "Huber smoothing parameter")->capture_default_str();
    sub->add_option("--phi", s.fit.phi, "MCP concavity")->capture_default_str();
    sub->add_option("--n-lambda", s.fit.n_lambda, "Number of lambda values on the path")->capture_default_str();
    sub->add_option("--lambda-min-ratio", s.fit.min_ratio,
                    "Smallest lambda as a fraction of lambda_max (0 chooses by design size)")
        ->capture_default_str();
    sub->add_option("--max-iter", s.fit.max_iter, "Sweep budget per lambda")->capture_default_str();
    sub->add_option("--tol", s.fit.tol, "Convergence tolerance on coefficient change")->capture_default_str();
}

struct Choices
{
    std::string criterion = "schwarz";
    std::string sparse_scoring = "completion";
};

void add_choices(CLI::App* sub, Choices& c)
{
    sub->add_option("--criterion", c.criterion, "EBIC form: schwarz or printed")
        ->check(CLI::IsMember({"schwarz", "printed"}))
        ->capture_default_str();
    sub->add_option("--sparse-scoring", c.sparse_scoring,
                    "Curves observed on part of the grid: completion or interpolation")
        ->check(CLI::IsMember({"completion", "interpolation"}))
        ->capture_default_str();
}

void apply(const Choices& c, model::FitOptions& fit)
{
    fit.criterion = c.criterion == "printed" ? solver::CriterionForm::Printed : solver::CriterionForm::Schwarz;
    fit.sparse_scoring = c.sparse_scoring == "interpolation" ? funcdata::SparseScoring::Interpolation
                                                             : funcdata::SparseScoring::Completion;
}

void prepare_out(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw validation_error("cannot create output directory '" + dir.string() + "'");
}

void check_fit_options(const Shared& s)
{
    losspen::LossParams{s.tau, s.fit.gamma}.validate();
    if (!(s.fit.pve > 0.0 && s.fit.pve <= 1.0))
        throw validation_error("--pve must lie in (0,1]");
    if (!(s.fit.phi > 1.0))
        throw validation_error("--phi must exceed 1");
    if (s.fit.n_lambda < 2)
        throw validation_error("--n-lambda must be at least 2");
    if (s.fit.min_ratio != 0.0 && !(s.fit.min_ratio > 0.0 && s.fit.min_ratio < 1.0))
        throw validation_error("--lambda-min-ratio must lie in (0,1)");
}

struct DataFiles
{
    std::string scalars;
    std::string functional;
    std::string lmoment_curves;
    std::string response;
    std::optional<double> domain_start;
    std::optional<double> domain_end;
    std::optional<int> grid_points;
};

void add_data_flags(CLI::App* sub, DataFiles& f, bool with_response)
{
    sub->add_option("--scalars", f.scalars, "Scalar covariate CSV (subject_id,X1,...)");
    sub->add_option("--functional", f.functional, "Long functional CSV (subject_id,covariate_id,time,value)");
    sub->add_option("--lmoments", f.lmoment_curves, "L-moment curves written by the lmoments command (covariates L1..L4)");
    if (with_response) {
        sub->add_option("--response", f.response, "Response CSV (subject_id,y)")->required();
        sub->add_option("--domain-start", f.domain_start, "Functional domain start (default: smallest time)");
        sub->add_option("--domain-end", f.domain_end, "Functional domain end (default: largest time)");
        sub->add_option("--grid-points", f.grid_points, "Uniform grid size (default: distinct observed times)")
            ->check(CLI::Range(2, 100000));
    }
}

void append_lmoments(const DataFiles& f, std::vector<funcdata::FunctionalDataset>& functional)
{
    if (f.lmoment_curves.empty())
        return;
    for (auto& d : io::lmoment_covariates(io::parse_lmoments(io::read_csv(f.lmoment_curves)))) {
        for (const auto& other : functional)
            if (other.covariate_id == d.covariate_id)
                throw validation_error("covariate '" + d.covariate_id + "' appears in both --functional and --lmoments");
        functional.push_back(std::move(d));
    }
}

model::TrainingData load_training(const DataFiles& f)
{
    if (f.scalars.empty() && f.functional.empty() && f.lmoment_curves.empty())
        throw validation_error("supply --scalars, --functional and/or --lmoments");
    std::optional<io::ScalarTable> scalars;
    if (!f.scalars.empty())
        scalars = io::read_scalar_csv(f.scalars);
    std::vector<funcdata::FunctionalDataset> functional;
    if (!f.functional.empty())
        functional = io::read_functional_csv(f.functional, {f.domain_start, f.domain_end, f.grid_points});
    append_lmoments(f, functional);
    return io::assemble_training(scalars, std::move(functional), io::read_response_csv(f.response));
}

// ---------------------------------------------------------------- commands

struct SimulateArgs
{
    Shared s;
    int n = 400;
    std::string design = "dense";
    double test_fraction = 0.0;
    int grid_points = simbench::kGridPoints;
};

void run_simulate(const SimulateArgs& a)
{
    simbench::ScenarioConfig cfg;
    cfg.n = a.n;
    cfg.tau = a.s.tau;
    cfg.design = simbench::parse_design(a.design);
    cfg.seed = a.s.seed;
    cfg.test_fraction = a.test_fraction;
    cfg.grid_points = a.grid_points;
    cfg.n_reps = 1;
    const simbench::Scenario sc = simbench::generate_scenario(cfg);
    prepare_out(a.s.out);
    io::write_simulated(a.s.out, "", sc.train.subject_ids, sc.train.scalar_names, sc.train.scalars,
                        sc.train.functional, sc.train.y);
    io::write_json(a.s.out / "truth.json", io::truth_to_json(cfg, sc.truth));
    if (sc.test.y.size() > 0) {
        const auto& c = sc.test.covariates;
        io::write_simulated(a.s.out, "test_", c.subject_ids, c.scalar_names, c.scalars, c.functional, sc.test.y);
    }
}

struct FitArgs
{
    Shared s;
    DataFiles files;
    std::string method = "vsflqr";
    Choices choices;
};

void run_fit(FitArgs a)
{
    check_fit_options(a.s);
    apply(a.choices, a.s.fit);
    const model::TrainingData data = load_training(a.files);
    const model::FLQRModel m = model::fit(data, a.s.tau, model::parse_method(a.method), a.s.fit);
    prepare_out(a.s.out);
    io::save_model(a.s.out / "model.json", m);
    io::write_selection_report(a.s.out / "selection.csv", m);
    io::write_coefficient_curves(a.s.out / "coefficients.csv", m);
    const auto report = model::selected_variables(m);
    std::cout << "selected " << report.nu << " variables at lambda " << io::fmt(report.lambda) << ":";
    for (const auto& v : report.scalars)
        std::cout << ' ' << v;
    for (const auto& v : report.functional)
        std::cout << ' ' << v;
    std::cout << '\n';
}

struct PredictArgs
{
    Shared s;
    DataFiles files;
    std::string model_path;
};

void run_predict(const PredictArgs& a)
{
    const model::FLQRModel m = io::load_model(a.model_path);
    std::optional<io::ScalarTable> scalars;
    if (!a.files.scalars.empty())
        scalars = io::read_scalar_csv(a.files.scalars);
    std::vector<funcdata::FunctionalDataset> functional;
    if (!a.files.functional.empty())
        functional = io::read_functional_csv(a.files.functional);
    append_lmoments(a.files, functional);
    // New curves are evaluated on the model's domain regardless of their observed range.
    for (auto& d : functional)
        for (const auto& c : m.functional)
            if (c.covariate_id == d.covariate_id) {
                d.domain_start = c.domain_start;
                d.domain_end = c.domain_end;
                d.common_grid = c.eigensystem.grid;
                funcdata::validate_dataset(d);
            }
    if (!scalars && functional.empty()) {
        if (!m.scalar_names.empty() || !m.functional.empty())
            throw validation_error("supply --scalars, --functional and/or --lmoments");
    }
    const model::PredictionData data = io::assemble_prediction(scalars, std::move(functional));
    const Eigen::VectorXd eta = model::predict(m, data);
    prepare_out(a.s.out);
    io::write_predictions(a.s.out / "predictions.csv", data.subject_ids, m.tau, eta);
}

struct McArgs
{
    Shared s;
    int n = 400;
    int reps = 20;
    std::string design = "dense";
    std::vector<std::string> methods{"vsflqr", "rq-glasso", "ls-glasso"};
    double test_fraction = 0.25;
    int grid_points = simbench::kGridPoints;
    bool log = false;
    Choices choices;
};

void run_mc(McArgs a)
{
    check_fit_options(a.s);
    apply(a.choices, a.s.fit);
    simbench::ScenarioConfig cfg;
    cfg.n = a.n;
    cfg.tau = a.s.tau;
    cfg.design = simbench::parse_design(a.design);
    cfg.seed = a.s.seed;
    cfg.n_reps = a.reps;
    cfg.test_fraction = a.test_fraction;
    cfg.grid_points = a.grid_points;
    std::vector<model::MethodKind> methods;
    for (const auto& m : a.methods)
        methods.push_back(model::parse_method(m));
    const auto reports = simbench::run_monte_carlo(cfg, methods, a.s.fit, a.s.threads);
    prepare_out(a.s.out);
    io::write_report_csv(a.s.out / "report.csv", reports);
    io::write_json(a.s.out / "report.json", io::report_to_json(cfg, reports));
    if (a.log)
        io::write_replicate_log(a.s.out / "replicates.csv", reports);
    for (const auto& r : reports)
        std::cout << model::to_string(r.method) << ": TPR " << io::fmt(r.selection.tpr_all) << ", FPR "
                  << io::fmt(r.selection.fpr_all) << ", MSPE " << io::fmt(r.mspe) << '\n';
}

struct LmomentArgs
{
    Shared s;
    std::string input;
    double zeta = lmoments::kDefaultZeta;
};

void run_lmoments(const LmomentArgs& a)
{
    const auto records = io::read_activity_csv(a.input);
    std::vector<lmoments::LMomentCurves> curves(records.size());
    simbench::parallel_for(static_cast<int>(records.size()), a.s.threads, [&](int i) {
        curves[static_cast<std::size_t>(i)] = lmoments::diurnal_lmoments(records[static_cast<std::size_t>(i)], a.zeta);
    });
    prepare_out(a.s.out);
    io::write_lmoment_csv(a.s.out / "lmoments.csv", curves);
}

struct PseudoArgs
{
    Shared s;
    DataFiles files;
    std::string method = "vsflqr";
    int reps = 100;
    int n_pseudo = 10;
    double amplitude_sd = 10.0;
    int synthetic = 0;
    Choices choices;
};

void run_pseudo(PseudoArgs a)
{
    check_fit_options(a.s);
    apply(a.choices, a.s.fit);
    model::TrainingData data;
    if (a.synthetic > 0) {
        data = simbench::generate_diurnal_dataset(a.synthetic, a.s.seed);
    } else {
        if (a.files.response.empty())
            throw validation_error("supply --response (or --synthetic N)");
        data = load_training(a.files);
    }
    simbench::PseudoConfig cfg;
    cfg.n_reps = a.reps;
    cfg.n_pseudo = a.n_pseudo;
    cfg.seed = a.s.seed;
    cfg.amplitude_sd = a.amplitude_sd;
    const auto table = simbench::pseudo_variable_experiment(data, a.s.tau, model::parse_method(a.method),
                                                            a.s.fit, cfg, a.s.threads);
    prepare_out(a.s.out);
    io::write_pseudo_table(a.s.out / "pseudo.csv", table);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Variable selection for functional linear quantile regression"};
    app.require_subcommand(1);
    add_config(app);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate a simulated data set");
    c_sim->fallthrough();
    add_shared(c_sim, sim.s, false);
    c_sim->add_option("--n", sim.n, "Training sample size")->capture_default_str();
    c_sim->add_option("--design", sim.design, "dense or sparse")->check(CLI::IsMember({"dense", "sparse"}));
    c_sim->add_option("--test-fraction", sim.test_fraction, "Also write a test set of this relative size")
        ->capture_default_str();
    c_sim->add_option("--grid-points", sim.grid_points, "Points on [0,1]")->capture_default_str();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "Fit a model and select variables");
    c_fit->fallthrough();
    add_shared(c_fit, fit.s, true);
    add_data_flags(c_fit, fit.files, true);
    add_choices(c_fit, fit.choices);
    c_fit->add_option("--method", fit.method, "vsflqr, rq-glasso or ls-glasso")
        ->check(CLI::IsMember({"vsflqr", "rq-glasso", "ls-glasso"}));

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Predict conditional quantiles from a saved model");
    c_pred->fallthrough();
    add_shared(c_pred, pred.s, false);
    add_data_flags(c_pred, pred.files, false);
    c_pred->add_option("--model", pred.model_path, "Model JSON written by fit")->required();

    McArgs mc;
    auto* c_mc = app.add_subcommand("mc", "Monte Carlo benchmark on the simulation scenario");
    c_mc->fallthrough();
    add_shared(c_mc, mc.s, true);
    add_choices(c_mc, mc.choices);
    c_mc->add_option("--n", mc.n, "Training sample size")->capture_default_str();
    c_mc->add_option("--reps", mc.reps, "Replicates")->capture_default_str()->check(CLI::PositiveNumber);
    c_mc->add_option("--design", mc.design, "dense or sparse")->check(CLI::IsMember({"dense", "sparse"}));
    c_mc->add_option("--methods", mc.methods, "Comma-separated methods")->delimiter(',');
    c_mc->add_option("--test-fraction", mc.test_fraction, "Test set size relative to n")->capture_default_str();
    c_mc->add_option("--grid-points", mc.grid_points, "Points on [0,1]")->capture_default_str();
    c_mc->add_flag("--log", mc.log, "Also write a per-replicate log");

    LmomentArgs lm;
    auto* c_lm = app.add_subcommand("lmoments", "Diurnal L-moment curves from minute-level activity");
    c_lm->fallthrough();
    add_shared(c_lm, lm.s, false);
    c_lm->add_option("--input", lm.input, "Activity CSV (subject_id,day_index,minute,value)")->required();
    c_lm->add_option("--zeta", lm.zeta, "Window half-width in hours")->capture_default_str();

    PseudoArgs ps;
    auto* c_ps = app.add_subcommand("pseudo", "Pseudo-variable selection frequency test");
    c_ps->fallthrough();
    add_shared(c_ps, ps.s, true);
    add_data_flags(c_ps, ps.files, true);
    c_ps->get_option("--response")->required(false);
    add_choices(c_ps, ps.choices);
    c_ps->add_option("--method", ps.method, "vsflqr, rq-glasso or ls-glasso")
        ->check(CLI::IsMember({"vsflqr", "rq-glasso", "ls-glasso"}));
    c_ps->add_option("--reps", ps.reps, "Replicates")->capture_default_str()->check(CLI::PositiveNumber);
    c_ps->add_option("--n-pseudo", ps.n_pseudo, "Pseudo-curves added per replicate")->capture_default_str();
    c_ps->add_option("--pseudo-sd", ps.amplitude_sd, "Pseudo-curve amplitude sd (0 disables them)")
        ->capture_default_str();
    c_ps->add_option("--synthetic", ps.synthetic, "Use a synthetic diurnal data set of this size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ConfigError& e) {
        std::string what = e.what();
        if (const std::string prefix = "INI was not able to parse "; what.rfind(prefix, 0) == 0)
            what = "unknown key '" + what.substr(prefix.size()) + "'";
        std::cerr << "error: config file: " << what << '\n';
        return kExitInput;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (c_sim->parsed())
            run_simulate(sim);
        else if (c_fit->parsed())
            run_fit(fit);
        else if (c_pred->parsed())
            run_predict(pred);
        else if (c_mc->parsed())
            run_mc(mc);
        else if (c_lm->parsed())
            run_lmoments(lm);
        else if (c_ps->parsed())
            run_pseudo(ps);
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return EXIT_FAILURE;
    }
    return EXIT_SUCCESS;
}
