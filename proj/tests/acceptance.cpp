// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>
#include <sys/wait.h>
#include <unistd.h>
#include <vsflqr/funcdata.hpp>
#include <vsflqr/lmoments.hpp>
#include <vsflqr/losspen.hpp>
#include <vsflqr/model.hpp>
#include <vsflqr/simbench.hpp>
#include <vsflqr/solver.hpp>
#include "oracles.hpp"

using namespace vsflqr;
namespace fs = std::filesystem;

namespace {

struct Check
{
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what)
    {
        if (!cond) {
            ok = false;
            detail << " [failed: " << what << ']';
        }
    }
    void near(double got, double want, double tol, const std::string& what)
    {
        expect(std::abs(got - want) <= tol, what + " = " + std::to_string(got) + ", want " + std::to_string(want));
    }
};

int failures = 0;

void report(int id, const std::string& name, Check& c, std::chrono::steady_clock::time_point start)
{
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (c.ok ? "PASS" : "FAIL") << "  criterion " << id << " (" << name << ")" << c.detail.str()
              << "  [" << std::fixed << std::setprecision(1) << secs << " s]" << std::endl;
    std::cout.unsetf(std::ios::fixed);
    if (!c.ok)
        ++failures;
}

int worker_threads()
{
    if (const char* env = std::getenv("VSFLQR_THREADS"))
        return std::max(1, std::atoi(env));
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string fmt(double v)
{
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

const simbench::MetricsReport& find(const std::vector<simbench::MetricsReport>& rs, model::MethodKind m)
{
    return *std::find_if(rs.begin(), rs.end(), [&](const auto& r) { return r.method == m; });
}

// ---------------------------------------------------------------------------

void dense_scenario()
{
    using model::MethodKind;
    const auto start = std::chrono::steady_clock::now();
    simbench::ScenarioConfig cfg;
    cfg.n = 400;
    cfg.tau = 0.5;
    cfg.n_reps = 20;
    cfg.seed = 1;
    const auto reports = simbench::run_monte_carlo(
        cfg, {MethodKind::VSFLQR, MethodKind::RQ_GLASSO, MethodKind::LS_GLASSO}, {}, worker_threads());
    const auto& v = find(reports, MethodKind::VSFLQR);
    const auto& rq = find(reports, MethodKind::RQ_GLASSO);
    const auto& ls = find(reports, MethodKind::LS_GLASSO);

    Check sel;
    sel.detail << " vsflqr TPR " << fmt(v.selection.tpr_all) << " FPR " << fmt(v.selection.fpr_all)
               << "; rq-glasso TPR " << fmt(rq.selection.tpr_all);
    sel.expect(v.selection.tpr_all >= 0.95, "vsflqr TPR >= 0.95");
    sel.expect(v.selection.fpr_all <= 0.03, "vsflqr FPR <= 0.03");
    sel.expect(rq.selection.tpr_all <= 0.6, "rq-glasso TPR <= 0.6");
    report(1, "dense selection, n=400, tau=0.5, 20 reps", sel, start);

    Check est;
    const double bias2 = v.estimation.bias[1];
    const double mse2 = v.estimation.mse[1];
    const double mise1 = v.estimation.mise[0];
    const double mise1_rq = rq.estimation.mise[0];
    est.detail << " bias(b2) " << fmt(bias2) << " MSE(b2) " << fmt(mse2) << " MISE(G1) " << fmt(mise1)
               << " vs rq-glasso " << fmt(mise1_rq);
    est.expect(std::abs(bias2) <= 0.05, "|bias(b2)| <= 0.05");
    est.expect(mse2 <= 0.02, "MSE(b2) <= 0.02");
    est.expect(mise1 <= 0.15, "MISE(G1) <= 0.15");
    est.expect(mise1 <= 0.2 * mise1_rq, "MISE(G1) <= 0.2 x rq-glasso");
    report(2, "dense estimation", est, start);

    Check pred;
    int ordered = 0, counted = 0;
    for (int r = 0; r < cfg.n_reps; ++r) {
        const auto& a = v.records[static_cast<std::size_t>(r)];
        const auto& b = ls.records[static_cast<std::size_t>(r)];
        const auto& c = rq.records[static_cast<std::size_t>(r)];
        ++counted;
        if (!a.failed && !b.failed && !c.failed && a.prediction.mspe < b.prediction.mspe &&
            b.prediction.mspe < c.prediction.mspe)
            ++ordered;
    }
    const double share = double(ordered) / double(counted);
    pred.detail << " MSPE " << fmt(v.mspe) << " MAPE " << fmt(v.mape) << "; ls-glasso " << fmt(ls.mspe)
                << " rq-glasso " << fmt(rq.mspe) << "; ordering held in " << ordered << "/" << counted;
    pred.expect(v.mspe <= 0.6, "MSPE <= 0.6");
    pred.expect(v.mape <= 0.6, "MAPE <= 0.6");
    pred.expect(share >= 0.8, "ordering in >= 80% of replicates");
    report(3, "dense prediction", pred, start);
}

void selection_scenario(int id, const std::string& name, simbench::Design design, int n, double tau)
{
    const auto start = std::chrono::steady_clock::now();
    simbench::ScenarioConfig cfg;
    cfg.n = n;
    cfg.tau = tau;
    cfg.design = design;
    cfg.n_reps = 10;
    cfg.seed = 1;
    cfg.test_fraction = 0.0;
    const auto reports = simbench::run_monte_carlo(cfg, {model::MethodKind::VSFLQR}, {}, worker_threads());
    const auto& v = reports.front();
    Check c;
    c.detail << " TPR " << fmt(v.selection.tpr_all) << " FPR " << fmt(v.selection.fpr_all) << " failures "
             << v.failures;
    c.expect(v.selection.tpr_all >= 0.9, "TPR >= 0.9");
    c.expect(v.selection.fpr_all <= 0.05, "FPR <= 0.05");
    report(id, name, c, start);
}

// ---------------------------------------------------------------------------

void solver_oracle()
{
    const auto start = std::chrono::steady_clock::now();
    Check c;
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const auto inst = oracle::random_instance(rng, losspen::PenaltyKind::LASSO);
        const auto f = solver::group_descent_fit(inst.design, inst.y, inst.cfg);
        const auto fn = [&](const Eigen::VectorXd& th) {
            return oracle::penalized_objective(inst.design, inst.y, th, inst.cfg);
        };
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(oracle::flatten(f.standardized).size());
        x0[0] = oracle::sample_median(std::vector<double>(inst.y.data(), inst.y.data() + inst.y.size()));
        const auto ref = oracle::nelder_mead(fn, x0, 0.5);
        worst = std::max(worst, std::abs(fn(oracle::flatten(f.standardized)) - ref.value));
    }
    c.detail << " LASSO worst objective gap " << fmt(worst);
    c.expect(worst <= 1e-4, "LASSO objective within 1e-4 of Nelder-Mead");

    double worst_sweep = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        auto inst = oracle::random_instance(rng, losspen::PenaltyKind::MCP);
        inst.cfg.tol = 1e-7;
        const auto f = solver::group_descent_fit(inst.design, inst.y, inst.cfg);
        c.expect(f.converged, "MCP instance " + std::to_string(rep) + " converged");
        worst_sweep = std::max(worst_sweep, solver::one_sweep_change(inst.design, inst.y, inst.cfg, f));
    }
    c.detail << "; MCP worst one-sweep change " << fmt(worst_sweep);
    c.expect(worst_sweep <= 1e-7, "MCP fixed point at 1e-7");
    report(6, "solver oracle equivalence", c, start);
}

// l_r as the average over r-subsets of the order-statistic contrast
std::vector<double> brute_lmoments(std::vector<double> x)
{
    std::sort(x.begin(), x.end());
    const int n = static_cast<int>(x.size());
    std::vector<double> l(4, std::nan(""));
    for (int r = 1; r <= std::min(4, n); ++r) {
        std::vector<int> pick(static_cast<std::size_t>(r));
        std::iota(pick.begin(), pick.end(), 0);
        double sum = 0.0;
        long count = 0;
        while (true) {
            double term = 0.0;
            for (int k = 0; k < r; ++k) {
                const double binom = std::tgamma(r) / (std::tgamma(k + 1) * std::tgamma(r - k));
                term += (k % 2 ? -1.0 : 1.0) * binom * x[static_cast<std::size_t>(pick[static_cast<std::size_t>(r - 1 - k)])];
            }
            sum += term / r;
            ++count;
            int pos = r - 1;
            while (pos >= 0 && pick[static_cast<std::size_t>(pos)] == n - r + pos)
                --pos;
            if (pos < 0)
                break;
            ++pick[static_cast<std::size_t>(pos)];
            for (int k = pos + 1; k < r; ++k)
                pick[static_cast<std::size_t>(k)] = pick[static_cast<std::size_t>(k - 1)] + 1;
        }
        l[static_cast<std::size_t>(r - 1)] = sum / double(count);
    }
    return l;
}

void closed_forms()
{
    using namespace losspen;
    const auto start = std::chrono::steady_clock::now();
    Check c;
    c.near(check_loss(2.0, 0.5), 1.0, 0.0, "rho(2; 0.5)");
    c.near(check_loss(-1.0, 0.1), 0.9, 1e-15, "rho(-1; 0.1)");
    c.near(huber(0.1, 0.2), 0.025, 1e-15, "h(0.1; 0.2)");
    c.near(huber(1.0, 0.2), 0.9, 1e-15, "h(1; 0.2)");
    c.near(huber_quantile_loss(1.0, 0.9, 0.2), 1.7, 1e-12, "hq(1; 0.9, 0.2)");
    c.near(huber_quantile_loss(-1.0, 0.9, 0.2), 0.1, 1e-12, "hq(-1; 0.9, 0.2)");
    c.near(huber_quantile_derivative(0.1, 0.5, 0.2), 0.25, 1e-15, "hq'(0.1)");
    c.near(huber_quantile_derivative(1.0, 0.5, 0.2), 0.5, 1e-15, "hq'(1)");
    c.near(huber_quantile_derivative(-1.0, 0.1, 0.2), -0.9, 1e-15, "hq'(-1; 0.1)");
    c.near(mcp_penalty(10.0, 1.0, 3.0), 1.5, 1e-15, "MCP(10)");
    c.near(mcp_penalty(0.5, 1.0, 3.0), 0.4583333333333333, 1e-12, "MCP(0.5)");
    c.near(soft_threshold(3.0, 1.0), 2.0, 0.0, "S(3, 1)");
    c.near(soft_threshold(0.5, 1.0), 0.0, 0.0, "S(0.5, 1)");
    c.near(soft_threshold(-3.0, 1.0), -2.0, 0.0, "S(-3, 1)");
    c.near(firm_threshold(0.5, 1.0, 3.0), 0.0, 0.0, "F(0.5)");
    c.near(firm_threshold(2.0, 1.0, 3.0), 1.5, 1e-15, "F(2)");
    c.near(firm_threshold(-4.0, 1.0, 3.0), -4.0, 0.0, "F(-4)");
    const Eigen::Vector2d big(3.0, 4.0), small(0.3, 0.4);
    c.expect(group_threshold(big, 1.0, 3.0, PenaltyKind::MCP) == Eigen::VectorXd(big), "group MCP keeps large");
    c.expect(group_threshold(small, 1.0, 3.0, PenaltyKind::MCP).isZero(0.0), "group MCP kills small");
    const Eigen::VectorXd gs = group_threshold(Eigen::Vector2d(1.5, 2.0), 1.0, 3.0, PenaltyKind::LASSO);
    c.near(gs[0], 0.9, 1e-12, "group LASSO[0]");
    c.near(gs[1], 1.2, 1e-12, "group LASSO[1]");

    double fd_worst = 0.0;
    const double h = 1e-5;
    for (double tau : {0.1, 0.5, 0.9})
        for (double gamma : {0.05, 0.2, 1.0})
            for (double r = -2.0; r <= 2.0; r += 0.0137) {
                const double fd = (huber_quantile_loss(r + h, tau, gamma) - huber_quantile_loss(r - h, tau, gamma)) /
                                  (2.0 * h) / 2.0;
                fd_worst = std::max(fd_worst, std::abs(huber_quantile_derivative(r, tau, gamma) - fd));
            }
    c.expect(fd_worst <= 1e-6, "derivative finite difference within 1e-6 (" + fmt(fd_worst) + ")");

    const auto l3 = lmoments::sample_lmoments({1.0, 2.0, 3.0}, 3);
    c.near(l3[0], 2.0, 1e-15, "l1{1,2,3}");
    c.near(l3[1], 2.0 / 3.0, 1e-15, "l2{1,2,3}");
    c.near(l3[2], 0.0, 1e-15, "l3{1,2,3}");
    c.near(lmoments::sample_lmoments({1.0, 2.0, 3.0, 4.0})[3], 0.0, 1e-15, "l4{1..4}");
    const std::vector<double> pool{-1.5, 0.0, 0.7, 2.0, 3.25, 9.0};
    double lm_worst = 0.0;
    long multisets = 0;
    for (int n = 1; n <= 6; ++n) {
        std::vector<int> idx(static_cast<std::size_t>(n), 0);
        while (true) {
            std::vector<double> x;
            for (int k : idx)
                x.push_back(pool[static_cast<std::size_t>(k)]);
            const int orders = std::min(4, n);
            const auto got = lmoments::sample_lmoments(x, orders);
            const auto want = brute_lmoments(x);
            for (int r = 0; r < orders; ++r)
                lm_worst = std::max(lm_worst, std::abs(got[static_cast<std::size_t>(r)] - want[static_cast<std::size_t>(r)]));
            ++multisets;
            int pos = n - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == static_cast<int>(pool.size()) - 1)
                --pos;
            if (pos < 0)
                break;
            ++idx[static_cast<std::size_t>(pos)];
            for (int k = pos + 1; k < n; ++k)
                idx[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(pos)];
        }
    }
    c.expect(lm_worst <= 1e-10, "L-moment brute force (" + fmt(lm_worst) + ")");
    c.near(lmoments::log_transform(std::expm1(2.0)), 2.0, 1e-12, "log(1 + x)");

    c.near(solver::ebic_value(3.25, 17, 0), 3.25, 1e-15, "EBIC with nu = 0");
    c.near(2.0 * solver::log_binomial(17, 4), 2.0 * std::log(2380.0), 1e-10, "2 log C(17, 4)");
    c.near(solver::bic_value(std::exp(1.0), 10, 2), 1.0 + 2.0 * std::log(10.0), 1e-12, "BIC(n=10, nu=2)");
    const Eigen::Vector3d r(1.0, -2.0, 0.5);
    c.near(solver::criterion_loss(r, solver::LossKind::HuberQuantile, 0.25), 1.875, 1e-15, "check-loss sum");
    c.detail << " " << multisets << " multisets, FD worst " << fmt(fd_worst);
    report(7, "closed-form suite", c, start);
}

funcdata::FunctionalDataset fourier_dataset(int n, int rank, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    funcdata::FunctionalDataset d;
    d.covariate_id = "Z";
    d.common_grid = funcdata::uniform_grid(0.0, 1.0, 61);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd curve = Eigen::VectorXd::Constant(d.common_grid.size(), 0.5);
        for (int q = 0; q < rank; ++q) {
            const double score = normal(rng) * std::sqrt(8.0 / (q + 1));
            for (Eigen::Index m = 0; m < curve.size(); ++m) {
                const double k = std::numbers::pi * 2.0 * (q / 2 + 1) * d.common_grid[m];
                curve[m] += score * std::sqrt(2.0) * (q % 2 ? std::cos(k) : std::sin(k));
            }
        }
        funcdata::FunctionalSample s;
        s.subject_id = "S" + std::to_string(i);
        s.times.assign(d.common_grid.data(), d.common_grid.data() + d.common_grid.size());
        s.values.assign(curve.data(), curve.data() + curve.size());
        d.samples.push_back(std::move(s));
    }
    return d;
}

void fpca_properties()
{
    const auto start = std::chrono::steady_clock::now();
    Check c;
    const auto noisy = fourier_dataset(150, 8, 7);
    const auto cm = funcdata::as_curve_matrix(noisy);
    const auto cc = funcdata::center_dataset(cm);
    const Eigen::MatrixXd cov = funcdata::estimate_covariance(cc.centered);
    const Eigen::VectorXd w = funcdata::trapezoid_weights(cm.grid);
    double ortho = 0.0;
    Eigen::Index previous = 0;
    double previous_pve = 0.0;
    for (double pve : {0.8, 0.9, 0.95, 0.99}) {
        const auto es = funcdata::fpca(cov, w, pve);
        const Eigen::MatrixXd g = funcdata::gram(es);
        ortho = std::max(ortho, (g - Eigen::MatrixXd::Identity(es.rank(), es.rank())).cwiseAbs().maxCoeff());
        c.expect(es.rank() >= previous, "rank monotone in the PVE threshold");
        c.expect(es.pve_achieved >= previous_pve && es.pve_achieved >= pve - 1e-12, "PVE monotone and reached");
        previous = es.rank();
        previous_pve = es.pve_achieved;
    }
    c.expect(ortho <= 1e-8, "orthonormality within 1e-8 (" + fmt(ortho) + ")");

    const auto span = fourier_dataset(200, 5, 11);
    const auto r = funcdata::run_fpca(span, 0.999999);
    const auto sm = funcdata::as_curve_matrix(span);
    const Eigen::MatrixXd rebuilt =
        (r.scores.scores * r.eigensystem.eigenfunctions).rowwise() + r.eigensystem.mean_curve.transpose();
    const double recovery = (rebuilt - sm.values).cwiseAbs().maxCoeff();
    c.expect(r.eigensystem.rank() == 5, "rank-5 span recovered");
    c.expect(recovery <= 1e-6, "score recovery within 1e-6 (" + fmt(recovery) + ")");
    c.detail << " orthonormality " << fmt(ortho) << ", recovery " << fmt(recovery) << ", ranks up to " << previous;
    report(8, "FPCA properties", c, start);
}

void pseudo_specificity()
{
    const auto start = std::chrono::steady_clock::now();
    const model::TrainingData data = simbench::generate_diurnal_dataset(300, 11);
    simbench::PseudoConfig pc;
    pc.n_pseudo = 10;
    pc.n_reps = 25;
    pc.seed = 3;
    const auto t = simbench::pseudo_variable_experiment(data, 0.5, model::MethodKind::VSFLQR, {}, pc,
                                                        worker_threads());
    const std::vector<std::string> truth{"X1", "X2", "X3", "L2"};
    Check c;
    double worst_pseudo = 0.0, worst_true = 100.0;
    for (std::size_t k = 0; k < t.variables.size(); ++k) {
        const double pct = t.percent(k);
        if (t.kinds[k] == "pseudo") {
            worst_pseudo = std::max(worst_pseudo, pct);
            c.expect(pct <= 10.0, t.variables[k] + " selected " + fmt(pct) + "%");
        } else if (std::find(truth.begin(), truth.end(), t.variables[k]) != truth.end()) {
            worst_true = std::min(worst_true, pct);
            c.expect(pct >= 90.0, t.variables[k] + " selected " + fmt(pct) + "%");
        }
    }
    c.detail << " max pseudo " << fmt(worst_pseudo) << "%, min true " << fmt(worst_true) << "%";
    report(9, "pseudo-variable specificity", c, start);
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return files;
}

int cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string("\"") + VSFLQR_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism()
{
    const auto start = std::chrono::steady_clock::now();
    Check c;
    const fs::path root = fs::temp_directory_path() / ("vsflqr_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const auto q = [&](const std::string& rel) { return "\"" + (root / rel).string() + "\""; };

    {
        std::ofstream act(root / "act.csv");
        act << "subject_id,day_index,minute,value\n";
        std::mt19937_64 rng(8);
        std::exponential_distribution<double> e(0.5);
        for (const char* id : {"A", "B"})
            for (int day = 0; day < 2; ++day)
                for (int m = 0; m < 1440; ++m)
                    act << id << ',' << day << ',' << m << ',' << e(rng) << '\n';
    }

    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "simulate --n 80 --seed 4 --test-fraction 0.5 --out @"},
        {"simulate-sparse", "simulate --n 60 --seed 4 --design sparse --out @"},
        {"fit", "fit --scalars " + q("simulate1/scalars.csv") + " --functional " + q("simulate1/functional.csv") +
                    " --response " + q("simulate1/response.csv") + " --out @"},
        {"predict", "predict --model " + q("fit1/model.json") + " --scalars " + q("simulate1/test_scalars.csv") +
                        " --functional " + q("simulate1/test_functional.csv") + " --out @"},
        {"mc", "mc --n 60 --reps 3 --seed 2 --methods vsflqr,ls-glasso --log --out @"},
        {"lmoments", "lmoments --input " + q("act.csv") + " --out @"},
        {"pseudo", "pseudo --synthetic 80 --reps 2 --seed 3 --out @"},
    };
    for (const auto& [name, args] : commands) {
        for (int run = 1; run <= 2; ++run) {
            std::string a = args;
            a.replace(a.find('@'), 1, q(name + std::to_string(run)));
            const int code = cli(a, root / (name + std::to_string(run) + ".log"));
            c.expect(code == 0, name + " exited " + std::to_string(code));
        }
        if (!fs::exists(root / (name + "1")) || !fs::exists(root / (name + "2")))
            continue;
        const auto a = tree(root / (name + "1"));
        const auto b = tree(root / (name + "2"));
        c.expect(!a.empty() && a == b, name + " outputs differ between reruns");
    }

    simbench::ScenarioConfig cfg;
    cfg.n = 60;
    cfg.n_reps = 6;
    cfg.seed = 9;
    const std::vector<model::MethodKind> methods{model::MethodKind::VSFLQR, model::MethodKind::LS_GLASSO};
    const auto serial = simbench::run_monte_carlo(cfg, methods, {}, 1);
    const auto parallel = simbench::run_monte_carlo(cfg, methods, {}, 4);
    bool same = serial.size() == parallel.size();
    for (std::size_t k = 0; same && k < serial.size(); ++k) {
        same = serial[k].mspe == parallel[k].mspe && serial[k].mape == parallel[k].mape &&
               serial[k].selection.tpr_all == parallel[k].selection.tpr_all &&
               serial[k].selection.fpr_all == parallel[k].selection.fpr_all &&
               serial[k].estimation.mise == parallel[k].estimation.mise &&
               serial[k].estimation.bias == parallel[k].estimation.bias;
        for (std::size_t r = 0; same && r < serial[k].records.size(); ++r)
            same = serial[k].records[r].lambda == parallel[k].records[r].lambda &&
                   serial[k].records[r].prediction.mspe == parallel[k].records[r].prediction.mspe;
    }
    c.expect(same, "serial and 4-thread Monte Carlo reports differ");
    const std::string mc = "mc --n 60 --reps 4 --seed 5 --methods vsflqr,rq-glasso --log ";
    c.expect(cli(mc + "--threads 1 --out " + q("mc_serial"), root / "mcs.log") == 0, "mc serial run");
    c.expect(cli(mc + "--threads 4 --out " + q("mc_parallel"), root / "mcp.log") == 0, "mc parallel run");
    c.expect(tree(root / "mc_serial") == tree(root / "mc_parallel"), "CLI mc serial and parallel files differ");
    c.detail << " " << commands.size() << " commands rerun, serial/parallel Monte Carlo compared";
    fs::remove_all(root);
    report(10, "determinism", c, start);
}

} // namespace

int main()
{
    std::cout << "vsflqr acceptance run, " << worker_threads() << " worker thread(s)" << std::endl;
    closed_forms();
    fpca_properties();
    solver_oracle();
    determinism();
    pseudo_specificity();
    dense_scenario();
    selection_scenario(4, "sparse design selection, n=800, tau=0.5, 10 reps", simbench::Design::Sparse, 800, 0.5);
    selection_scenario(5, "tail quantile selection, n=800, tau=0.1, 10 reps", simbench::Design::Dense, 800, 0.1);
    std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL") << std::endl;
    return failures == 0 ? 0 : 1;
}
