#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prae/ams.hpp"
#include "prae/benchmarks.hpp"
#include "prae/core.hpp"
#include "prae/cross_entropy.hpp"
#include "prae/estimators.hpp"

namespace prae {

struct EstimatorSpec {
    std::string name;
    nlohmann::json params;
};

struct ExperimentConfig {
    int schema_version = 1;
    nlohmann::json problem;  // {"name": ..., problem parameters}
    std::vector<double> gammas;
    std::vector<std::uint64_t> seeds;
    std::vector<EstimatorSpec> estimators;
    long n1 = 10000;  // shared Stage-1 budget for the learning estimators
    std::string out_dir = "results";
    long cell_budget_ms = 600000;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        cfg.schema_version = j.at("schema_version").get<int>();
        if (cfg.schema_version != 1)
            throw ConfigError("config: unsupported schema_version");
        cfg.problem = j.at("problem");
        if (!cfg.problem.contains("name"))
            throw ConfigError("config: problem.name missing");
        cfg.gammas = j.at("gammas").get<std::vector<double>>();
        if (j.at("seeds").is_array()) {
            cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        } else {
            const auto count = j["seeds"].at("count").get<int>();
            const auto base = j["seeds"].at("base").get<std::uint64_t>();
            for (int i = 0; i < count; ++i)
                cfg.seeds.push_back(base + static_cast<std::uint64_t>(i));
        }
        if (cfg.seeds.empty()) throw ConfigError("config: seeds empty");
        for (const auto& e : j.at("estimators")) {
            EstimatorSpec spec;
            spec.name = e.at("name").get<std::string>();
            spec.params = e;
            cfg.estimators.push_back(spec);
        }
        cfg.n1 = j.value("n1", 10000L);
        if (cfg.n1 <= 0) throw ConfigError("config: n1 must be positive");
        cfg.out_dir = j.value("out", std::string("results"));
        cfg.cell_budget_ms = j.value("cell_budget_ms", 600000L);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    return ExperimentConfig::from_json(j);
}

struct ResultRow {
    std::string estimator;
    double gamma;
    std::uint64_t seed;
    double value;
    double empirical_re;
    long n;
    long hits;
    std::string audit_file;

    static std::string csv_header() {
        return "estimator,gamma,seed,value,empirical_re,n,hits,audit";
    }
    std::string csv() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << estimator << ',' << gamma << ',' << seed << ',' << value << ','
           << empirical_re << ',' << n << ',' << hits << ',' << audit_file;
        return os.str();
    }
    std::string key() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << estimator << '|' << gamma << '|' << seed;
        return os.str();
    }
};

inline Problem make_problem(const nlohmann::json& spec, double gamma) {
    const auto name = spec.at("name").get<std::string>();
    if (name == "sigmoid2d") return sigmoid2d_problem(gamma);
    if (name == "two_sided")
        return two_sided_problem(gamma, spec.value("k", 1.0));
    if (name == "idm")
        return idm_problem(gamma, spec.value("sigma", 0.8),
                           spec.value("epochs", 15), spec.value("dt", 0.1),
                           spec.value("flip_shift", 6.0),
                           spec.value("iid_actions", false));
    throw ConfigError("config: unknown problem " + name);
}

namespace detail {

inline DeepPraeConfig deep_cfg_from(const nlohmann::json& p) {
    DeepPraeConfig cfg;
    if (p.contains("hidden"))
        cfg.train.hidden_widths = p["hidden"].get<std::vector<int>>();
    cfg.train.epochs = p.value("train_epochs", cfg.train.epochs);
    cfg.train.batch_size = p.value("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = p.value("learning_rate", cfg.train.learning_rate);
    if (p.value("loss", std::string("cross_entropy")) == std::string("squared"))
        cfg.train.loss = LossKind::Squared;
    cfg.bisection_tol = p.value("bisection_tol", cfg.bisection_tol);
    cfg.thin_keep = p.value("thin_keep", cfg.thin_keep);
    cfg.n2 = p.value("n2", cfg.n2);
    cfg.limits.max_points = p.value("max_points", cfg.limits.max_points);
    cfg.limits.miqp.max_nodes = p.value("max_nodes", cfg.limits.miqp.max_nodes);
    cfg.box_m_factor = p.value("box_m_factor", cfg.box_m_factor);
    return cfg;
}

inline CeConfig ce_cfg_from(const nlohmann::json& p) {
    CeConfig cfg;
    cfg.rho = p.value("rho", cfg.rho);
    cfg.n_per_level = p.value("n_per_level", cfg.n_per_level);
    cfg.max_levels = p.value("max_levels", cfg.max_levels);
    cfg.n_final = p.value("n_final", cfg.n_final);
    cfg.em_iters = p.value("em_iters", cfg.em_iters);
    return cfg;
}

}  // namespace detail

// Stage-1 sample batches are shared by every learning estimator in the same
// (gamma, seed) cell group, mirroring the single-batch experimental setup.
class Stage1Cache {
  public:
    const std::vector<LabeledSample>& get(const Problem& problem, double gamma,
                                          std::uint64_t seed, long n1,
                                          const CeConfig& ce) {
        const std::string key =
            std::to_string(gamma) + "|" + std::to_string(seed) + "|" +
            std::to_string(n1);
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        auto samples = stage1_from_ce(problem, n1, ce, seed);
        return cache_.emplace(key, std::move(samples)).first->second;
    }

  private:
    std::mutex mu_;
    std::map<std::string, std::vector<LabeledSample>> cache_;
};

// Runs one (estimator, gamma, seed) cell.
inline Estimate run_cell(const Problem& problem, const EstimatorSpec& spec,
                         double gamma, std::uint64_t seed, long n1,
                         Stage1Cache* cache) {
    const auto& p = spec.params;
    auto stage1 = [&]() -> const std::vector<LabeledSample>& {
        static Stage1Cache fallback;
        Stage1Cache& c = cache ? *cache : fallback;
        return c.get(problem, gamma, seed, p.value("n1", n1),
                     detail::ce_cfg_from(p));
    };

    if (spec.name == "naive_mc")
        return naive_mc(problem, p.value("n", 100000L), seed);
    if (spec.name == "deep_prae_ub")
        return deep_prae(problem, stage1(), detail::deep_cfg_from(p),
                         BoundSide::Upper, seed);
    if (spec.name == "deep_prae_lb")
        return deep_prae(problem, stage1(), detail::deep_cfg_from(p),
                         BoundSide::Lower, seed);
    if (spec.name == "deep_prae_mod")
        return deep_prae_mod(problem, stage1(), detail::deep_cfg_from(p), seed);
    if (spec.name == "lazy_ub")
        return lazy_learner(problem, stage1(), detail::deep_cfg_from(p),
                            BoundSide::Upper, seed);
    if (spec.name == "lazy_lb")
        return lazy_learner(problem, stage1(), detail::deep_cfg_from(p),
                            BoundSide::Lower, seed);
    if (spec.name == "ce_naive") {
        CeConfig cfg = detail::ce_cfg_from(p);
        cfg.family = CeFamily::SingleGaussian;
        return cross_entropy(problem, cfg, seed).estimate;
    }
    if (spec.name == "ce_gmm") {
        CeConfig cfg = detail::ce_cfg_from(p);
        cfg.family = CeFamily::Gmm;
        cfg.gmm_k = p.value("k", 2);
        return cross_entropy(problem, cfg, seed).estimate;
    }
    if (spec.name == "ams") {
        AmsConfig cfg;
        cfg.n_particles = p.value("particles", cfg.n_particles);
        cfg.rho = p.value("rho", cfg.rho);
        cfg.mh_steps = p.value("mh_steps", cfg.mh_steps);
        cfg.step_scale = p.value("step_scale", cfg.step_scale);
        return ams(problem, cfg, seed);
    }
    if (spec.name == "mixture_is_known") {
        // Known-set mixture IS; defined for the sigmoid2d benchmark.
        DominatingSet ds = sigmoid2d_known_dominating(gamma);
        return mixture_is(problem.indicator, ds, problem.law,
                          p.value("n2", 10000L), seed);
    }
    throw ConfigError("config: unknown estimator " + spec.name);
}

struct RunReport {
    std::vector<ResultRow> rows;
    int failures = 0;
};

// Executes every (estimator, gamma, seed) cell, persisting one journal line
// per finished cell (resume granularity) and a sorted results.csv at the
// end, whose bytes depend only on the config.
inline RunReport run_experiment(const ExperimentConfig& cfg, int jobs = 1,
                                bool resume = false,
                                std::uint64_t seed_offset = 0) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.out_dir + "/audit");
    const std::string journal_path = cfg.out_dir + "/journal.csv";

    std::map<std::string, ResultRow> done;
    if (resume && fs::exists(journal_path)) {
        std::ifstream in(journal_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            ResultRow row;
            std::string tok;
            std::getline(ls, row.estimator, ',');
            std::getline(ls, tok, ',');
            row.gamma = std::stod(tok);
            std::getline(ls, tok, ',');
            row.seed = std::stoull(tok);
            std::getline(ls, tok, ',');
            row.value = std::stod(tok);
            std::getline(ls, tok, ',');
            row.empirical_re = std::stod(tok);
            std::getline(ls, tok, ',');
            row.n = std::stol(tok);
            std::getline(ls, tok, ',');
            row.hits = std::stol(tok);
            std::getline(ls, row.audit_file);
            done[row.key()] = row;
        }
    }

    std::ofstream journal(journal_path, resume ? std::ios::app : std::ios::out);
    if (!resume) journal << ResultRow::csv_header() << "\n";
    std::mutex io_mu;

    struct Cell {
        std::size_t est_idx;
        double gamma;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (double g : cfg.gammas)
        for (auto s : cfg.seeds)
            for (std::size_t e = 0; e < cfg.estimators.size(); ++e)
                cells.push_back({e, g, s + seed_offset});

    Stage1Cache stage1_cache;
    RunReport report;
    std::mutex report_mu;

    auto worker = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < cells.size(); i += stride) {
            const auto& cell = cells[i];
            const auto& spec = cfg.estimators[cell.est_idx];
            ResultRow row;
            row.estimator = spec.name;
            row.gamma = cell.gamma;
            row.seed = cell.seed;
            if (auto it = done.find(row.key()); it != done.end()) {
                std::lock_guard<std::mutex> lock(report_mu);
                report.rows.push_back(it->second);
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            nlohmann::json audit;
            try {
                Problem problem = make_problem(cfg.problem, cell.gamma);
                Estimate est = run_cell(problem, spec, cell.gamma, cell.seed,
                                        cfg.n1, &stage1_cache);
                row.value = est.value;
                row.empirical_re = est.empirical_re;
                row.n = est.n_used;
                row.hits = est.hits;
                audit = est.to_json();
            } catch (const ConfigError&) {
                throw;
            } catch (const PraeError& e) {
                std::lock_guard<std::mutex> lock(report_mu);
                ++report.failures;
                audit["error"] = e.what();
                row.value = std::numeric_limits<double>::quiet_NaN();
                row.n = 0;
                row.hits = 0;
                row.empirical_re = std::numeric_limits<double>::quiet_NaN();
            }
            const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
            // Runtime lives in the audit only: result rows must be
            // byte-stable across reruns.
            audit["runtime_ms"] = ms;
            audit["over_budget"] = ms > cfg.cell_budget_ms;
            std::ostringstream fname;
            fname << "audit/" << spec.name << "_g" << std::setprecision(17)
                  << cell.gamma << "_s" << cell.seed << ".json";
            row.audit_file = fname.str();
            {
                std::lock_guard<std::mutex> lock(io_mu);
                std::ofstream af(cfg.out_dir + "/" + row.audit_file);
                af << audit.dump(2) << "\n";
                journal << row.csv() << "\n";
                journal.flush();
            }
            {
                std::lock_guard<std::mutex> lock(report_mu);
                report.rows.push_back(row);
            }
        }
    };

    if (jobs <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back(worker, static_cast<std::size_t>(t),
                              static_cast<std::size_t>(jobs));
        for (auto& t : pool) t.join();
    }

    // Deterministic final table: config order for estimators, then gamma,
    // then seed.
    std::map<std::string, std::size_t> est_order;
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e)
        est_order.emplace(cfg.estimators[e].name, e);
    std::sort(report.rows.begin(), report.rows.end(),
              [&](const ResultRow& a, const ResultRow& b) {
                  const auto ea = est_order.at(a.estimator);
                  const auto eb = est_order.at(b.estimator);
                  if (ea != eb) return ea < eb;
                  if (a.gamma != b.gamma) return a.gamma < b.gamma;
                  return a.seed < b.seed;
              });
    std::ofstream out(cfg.out_dir + "/results.csv");
    out << ResultRow::csv_header() << "\n";
    for (const auto& row : report.rows) out << row.csv() << "\n";
    return report;
}

}  // namespace prae
