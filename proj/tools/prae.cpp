// Command-line driver: experiment execution, under-estimation diagnostics,
// hull/threshold inspection, and benchmark constant calibration.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prae/benchmarks.hpp"
#include "prae/experiment.hpp"
#include "prae/kappa.hpp"
#include "prae/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

double phi_bar(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

std::string default_out_dir() {
    if (const char* env = std::getenv("PRAE_OUT_DIR")) return env;
    return "results";
}

int cmd_estimate(const std::string& config_path, const std::string& out_dir,
                 int jobs, bool resume, std::uint64_t seed_offset) {
    prae::ExperimentConfig cfg = prae::ExperimentConfig::load(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    auto report = prae::run_experiment(cfg, jobs, resume, seed_offset);
    std::cout << "wrote " << report.rows.size() << " rows to " << cfg.out_dir
              << "/results.csv";
    if (report.failures > 0)
        std::cout << " (" << report.failures << " cell(s) failed; see audits)";
    std::cout << "\n";
    return report.failures > 0 ? kExitRuntime : kExitOk;
}

int cmd_diagnose(const std::string& config_path, const std::string& out_dir) {
    prae::ExperimentConfig cfg = prae::ExperimentConfig::load(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const auto problem_name = cfg.problem.at("name").get<std::string>();

    auto report = prae::run_experiment(cfg, 1, false, 0);
    if (report.failures > 0) return kExitRuntime;

    // Truth per gamma: analytic for two_sided, the known-set mixture IS for
    // sigmoid2d, otherwise only the Deep-PrAE bounds.
    std::map<double, double> truth;
    const bool has_truth =
        problem_name == "two_sided" || problem_name == "sigmoid2d";
    for (double g : cfg.gammas) {
        if (problem_name == "two_sided") {
            const double k = cfg.problem.value("k", 1.0);
            truth[g] = phi_bar(g) + phi_bar(k * g);
        } else if (problem_name == "sigmoid2d") {
            truth[g] = prae::sigmoid2d_truth(g).value;
        }
    }

    struct Agg {
        double sum = 0.0, sum_sq = 0.0;
        long n = 0;
        void add(double v) {
            sum += v;
            sum_sq += v * v;
            ++n;
        }
        double mean() const { return sum / n; }
        double sem() const {
            if (n < 2) return 0.0;
            const double var = (sum_sq - sum * mean()) / (n - 1);
            return std::sqrt(std::max(0.0, var) / n);
        }
    };
    std::map<std::pair<std::string, double>, Agg> agg;
    for (const auto& row : report.rows)
        if (std::isfinite(row.value)) agg[{row.estimator, row.gamma}].add(row.value);

    const bool has_lb = std::any_of(
        cfg.estimators.begin(), cfg.estimators.end(),
        [](const auto& e) { return e.name == "deep_prae_lb"; });
    if (!has_truth && !has_lb)
        throw prae::MissingTruth(
            "diagnose: no truth oracle and no deep_prae_lb bound configured");

    nlohmann::json out;
    std::cout << std::left << std::setw(16) << "estimator" << std::setw(8)
              << "gamma" << std::setw(14) << "mean" << std::setw(12)
              << "%error" << "flag\n";
    for (double g : cfg.gammas) {
        const Agg* lb = nullptr;
        if (auto it = agg.find({"deep_prae_lb", g}); it != agg.end())
            lb = &it->second;
        for (const auto& est : cfg.estimators) {
            auto it = agg.find({est.name, g});
            if (it == agg.end()) continue;
            const double mean = it->second.mean();
            double pct = std::numeric_limits<double>::quiet_NaN();
            if (has_truth && truth[g] > 0.0)
                pct = 100.0 * (mean - truth[g]) / truth[g];
            bool flagged = false;
            if (lb && est.name != "deep_prae_lb")
                flagged = mean < lb->mean() - 3.0 * lb->sem();
            std::cout << std::left << std::setw(16) << est.name << std::setw(8)
                      << g << std::setw(14) << mean << std::setw(12) << pct
                      << (flagged ? "UNDER-ESTIMATE" : "") << "\n";
            nlohmann::json row;
            row["estimator"] = est.name;
            row["gamma"] = g;
            row["mean"] = mean;
            if (has_truth) {
                row["truth"] = truth[g];
                row["pct_error"] = pct;
            }
            row["flagged_under"] = flagged;
            out["rows"].push_back(row);
        }
    }
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream f(cfg.out_dir + "/diagnose.json");
    f << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_hull_check(const std::string& samples_path, double thin,
                   const std::vector<int>& hidden, double bisection_tol) {
    std::ifstream in(samples_path);
    if (!in) throw prae::ConfigError("hull-check: cannot open " + samples_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw prae::ConfigError(std::string("hull-check parse: ") + e.what());
    }
    std::vector<prae::LabeledSample> samples;
    int dim = 0;
    for (const auto& s : j.at("samples")) {
        prae::Vec x(s.at("x").size());
        for (std::size_t i = 0; i < s["x"].size(); ++i)
            x[static_cast<Eigen::Index>(i)] = s["x"][i].get<double>();
        dim = static_cast<int>(x.size());
        samples.push_back({x, s.at("y").get<int>()});
    }

    std::vector<prae::Vec> t0;
    double max_coord = 1.0;
    for (const auto& s : samples) {
        if (s.y == 0) t0.push_back(s.x);
        max_coord = std::max(max_coord, s.x.maxCoeff());
    }

    prae::Stage1Config train_cfg;
    if (!hidden.empty()) train_cfg.hidden_widths = hidden;
    auto net = prae::train_erm(samples, train_cfg);  // DegenerateLabels here

    auto full_hull =
        prae::MonotoneHull::build(t0, prae::HullOrientation::Lower, dim);
    std::cout << "samples: " << samples.size() << " (non-rare " << t0.size()
              << ")\n";
    std::cout << "hull extreme points: " << full_hull.extreme().size() << "\n";
    auto hull = full_hull;
    if (thin < 1.0) {
        prae::CounterRng rng(1, 7);
        auto thinned = prae::MonotoneHull::thin(t0, thin, rng);
        hull = prae::MonotoneHull::build(thinned, prae::HullOrientation::Lower,
                                         dim);
        std::cout << "after thinning (keep " << thin
                  << "): " << hull.extreme().size() << " extreme points\n";
    }

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : samples) {
        const double g = net.score(s.x);
        lo = std::min(lo, g);
        hi = std::max(hi, g);
    }
    prae::MiqpOptions opts;
    opts.box_m = 10.0 * max_coord;
    opts.decision_only = true;
    prae::KappaTrace trace;
    auto set =
        prae::tune_kappa_outer(net, hull, lo, hi, bisection_tol, opts, &trace);
    std::cout << "kappa bisection trace:\n";
    for (const auto& step : trace.steps)
        std::cout << "  kappa=" << std::setprecision(10) << step.kappa
                  << " contained=" << (step.contained ? "yes" : "no")
                  << " nodes=" << step.nodes << "\n";
    std::cout << "kappa_hat = " << set.kappa_hat << "\n";
    return kExitOk;
}

int cmd_calibrate(const std::string& benchmark, double gamma, double sigma,
                  double target, std::uint64_t seed) {
    if (benchmark == "sigmoid2d") {
        auto spec = prae::Sigmoid2DSpec::make(gamma);
        const double face = prae::sigmoid2d_face(spec, gamma);
        auto ds = prae::sigmoid2d_known_dominating(gamma);
        auto truth = prae::sigmoid2d_truth(gamma, 50000, seed);
        std::cout << "gamma=" << gamma << " slab face t=" << face
                  << " rate=" << 4.0 * (face - 5.0) * (face - 5.0) << "\n";
        std::cout << "dominating points:\n";
        for (std::size_t i = 0; i < ds.points.size(); ++i)
            std::cout << "  (" << ds.points[i][0] << ", " << ds.points[i][1]
                      << ") rate " << ds.objectives[i] << "\n";
        std::cout << "mu (known-set mixture IS, 50k) = " << truth.value
                  << "  RE=" << truth.empirical_re << "\n";
        if (target > 0.0)
            std::cout << "target " << target << ": ratio mu/target = "
                      << truth.value / target << "\n";
        std::cout << "constants: " << spec.to_json().dump() << "\n";
        return kExitOk;
    }
    if (benchmark == "idm") {
        auto problem = prae::idm_problem(gamma, sigma);
        prae::CeConfig ce;
        ce.n_per_level = 2000;
        ce.n_final = 20000;
        auto out = prae::cross_entropy(problem, ce, seed);
        std::cout << "gamma=" << gamma << " sigma=" << sigma
                  << " crash probability (CE+IS) = " << out.estimate.value
                  << " RE=" << out.estimate.empirical_re
                  << " levels=" << out.level_path.size() << "\n";
        if (target > 0.0)
            std::cout << "target " << target << ": ratio = "
                      << out.estimate.value / target << "\n";
        return kExitOk;
    }
    throw prae::ConfigError("calibrate-benchmark: unknown benchmark " +
                            benchmark);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prae: certifiable rare-event probability estimation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, samples_path;
    int jobs = 1;
    bool resume = false;
    std::uint64_t seed_offset = 0;

    auto* est = app.add_subcommand("estimate", "run an experiment config");
    est->add_option("--config", config_path, "JSON experiment config")
        ->required();
    est->add_option("--out", out_dir, "output directory");
    est->add_option("--jobs", jobs, "worker threads");
    est->add_flag("--resume", resume, "skip cells already in the journal");
    est->add_option("--seed-offset", seed_offset, "added to every seed");

    auto* diag = app.add_subcommand("diagnose", "under-estimation report");
    diag->add_option("--config", config_path, "JSON experiment config")
        ->required();
    diag->add_option("--out", out_dir, "output directory");

    double thin = 1.0, bisection_tol = 1e-3;
    std::vector<int> hidden;
    auto* hc = app.add_subcommand("hull-check", "hull stats and kappa trace");
    hc->add_option("--samples", samples_path, "labeled samples JSON")
        ->required();
    hc->add_option("--thin", thin, "random thinning keep fraction");
    hc->add_option("--hidden", hidden, "hidden layer widths");
    hc->add_option("--tol", bisection_tol, "kappa bisection tolerance");

    std::string benchmark = "sigmoid2d";
    double gamma = 1.8, sigma = 0.8, target = 0.0;
    std::uint64_t seed = 777;
    auto* cal = app.add_subcommand("calibrate-benchmark",
                                   "report benchmark constants and scales");
    cal->add_option("--benchmark", benchmark, "sigmoid2d or idm");
    cal->add_option("--gamma", gamma, "rarity");
    cal->add_option("--sigma", sigma, "idm increment scale");
    cal->add_option("--target", target, "target probability to compare");
    cal->add_option("--seed", seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (out_dir.empty() && (est->parsed() || diag->parsed()))
            out_dir = default_out_dir();
        if (est->parsed())
            return cmd_estimate(config_path, out_dir, jobs, resume, seed_offset);
        if (diag->parsed()) return cmd_diagnose(config_path, out_dir);
        if (hc->parsed())
            return cmd_hull_check(samples_path, thin, hidden, bisection_tol);
        if (cal->parsed())
            return cmd_calibrate(benchmark, gamma, sigma, target, seed);
    } catch (const prae::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const prae::PraeError& e) {
        std::cerr << "estimator error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
