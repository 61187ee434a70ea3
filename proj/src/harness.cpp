#include "lqr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace lqr {

namespace {

// JSON has no NaN/Inf literals; encode them as strings so records survive a
// round trip.
json double_to_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double double_from_json(const json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ConfigError("unexpected string where a number was required: " + s);
    }
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

Matrix matrix_from_json(const json& j) {
    require(j.is_array() && !j.empty(), "matrix must be a nonempty array of rows");
    const auto rows = j.size();
    const auto cols = j.front().size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        require(j[i].is_array() && j[i].size() == cols, "matrix rows have differing lengths");
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (long i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

NoiseFamily noise_family_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseFamily::gaussian;
    if (s == "truncated_gaussian") return NoiseFamily::truncated_gaussian;
    if (s == "symmetric_weibull_tail") return NoiseFamily::symmetric_weibull_tail;
    throw ConfigError("unknown noise family: " + s);
}

std::string noise_family_to_string(NoiseFamily f) {
    switch (f) {
        case NoiseFamily::gaussian: return "gaussian";
        case NoiseFamily::truncated_gaussian: return "truncated_gaussian";
        case NoiseFamily::symmetric_weibull_tail: return "symmetric_weibull_tail";
    }
    return "unknown";
}

PolicyConfig policy_config_from_json(const json& j) {
    PolicyConfig cfg;
    cfg.kind = policy_kind_from_string(j.value("kind", "perturbed_greedy"));
    cfg.label = j.value("label", std::string());
    cfg.perturb.gamma = j.value("gamma", cfg.perturb.gamma);
    cfg.perturb.c_low = j.value("c_low", cfg.perturb.c_low);
    cfg.perturb.c_high = j.value("c_high", cfg.perturb.c_high);
    std::string mode = j.value("mode", cfg.kind == PolicyKind::restricted_greedy
                                           ? std::string("restricted")
                                           : std::string("algorithm1"));
    if (mode == "algorithm1")
        cfg.perturb.mode = PerturbationConfig::Mode::algorithm1;
    else if (mode == "restricted")
        cfg.perturb.mode = PerturbationConfig::Mode::restricted;
    else
        throw ConfigError("unknown perturbation mode: " + mode);
    cfg.perturb.rho_lo = j.value("rho_lo", cfg.perturb.rho_lo);
    cfg.perturb.rho_hi = j.value("rho_hi", cfg.perturb.rho_hi);
    cfg.perturb.kappa = j.value("kappa", cfg.perturb.kappa);
    cfg.perturb_enabled = j.value("perturb_enabled", cfg.kind == PolicyKind::perturbed_greedy ||
                                                         cfg.kind == PolicyKind::restricted_greedy);
    cfg.persistent_sd = j.value("persistent_sd", 0.0);
    cfg.sigma_rce = j.value("sigma_rce", cfg.sigma_rce);
    cfg.ts_lambda = j.value("ts_lambda", cfg.ts_lambda);
    cfg.ts_scale = j.value("ts_scale", cfg.ts_scale);
    cfg.ts_floor = j.value("ts_floor", cfg.ts_floor);
    cfg.constraint = j.value("constraint", std::string("none"));
    if (j.contains("support_mask")) {
        for (const auto& row : j.at("support_mask")) {
            std::vector<bool> r;
            for (const auto& cell : row) r.push_back(cell.get<bool>());
            cfg.support_mask.push_back(std::move(r));
        }
    }
    cfg.init = j.value("init", std::string("bootstrap"));
    cfg.bootstrap_samples = j.value("bootstrap_samples", cfg.bootstrap_samples);
    cfg.init_scale = j.value("init_scale", cfg.init_scale);
    if (cfg.label.empty()) cfg.label = to_string(cfg.kind);
    return cfg;
}

json policy_config_to_json(const PolicyConfig& cfg) {
    json j;
    j["kind"] = to_string(cfg.kind);
    j["label"] = cfg.label;
    j["gamma"] = cfg.perturb.gamma;
    j["c_low"] = cfg.perturb.c_low;
    j["c_high"] = cfg.perturb.c_high;
    j["mode"] = cfg.perturb.mode == PerturbationConfig::Mode::algorithm1 ? "algorithm1"
                                                                         : "restricted";
    j["rho_lo"] = cfg.perturb.rho_lo;
    j["rho_hi"] = cfg.perturb.rho_hi;
    j["kappa"] = cfg.perturb.kappa;
    j["perturb_enabled"] = cfg.perturb_enabled;
    j["persistent_sd"] = cfg.persistent_sd;
    j["sigma_rce"] = cfg.sigma_rce;
    j["ts_lambda"] = cfg.ts_lambda;
    j["ts_scale"] = cfg.ts_scale;
    j["ts_floor"] = cfg.ts_floor;
    j["constraint"] = cfg.constraint;
    if (!cfg.support_mask.empty()) {
        json mask = json::array();
        for (const auto& row : cfg.support_mask) {
            json r = json::array();
            for (bool b : row) r.push_back(b);
            mask.push_back(r);
        }
        j["support_mask"] = mask;
    }
    j["init"] = cfg.init;
    j["bootstrap_samples"] = cfg.bootstrap_samples;
    j["init_scale"] = cfg.init_scale;
    return j;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    // nearest-rank percentile
    auto idx = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(values.size())));
    idx = std::min(std::max<std::size_t>(idx, 1), values.size());
    return values[idx - 1];
}

}  // namespace

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.policies.push_back(PolicyConfig{});
    cfg.policies.front().label = to_string(cfg.policies.front().kind);
    return cfg;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    if (j.contains("system")) {
        const auto& s = j.at("system");
        if (s.contains("preset")) {
            cfg.system.source = SystemConfig::Source::preset;
            cfg.system.preset = s.at("preset").get<std::string>();
        } else if (s.contains("A")) {
            cfg.system.source = SystemConfig::Source::inline_matrices;
            cfg.system.A = matrix_from_json(s.at("A"));
            cfg.system.B = matrix_from_json(s.at("B"));
            cfg.system.Q = matrix_from_json(s.at("Q"));
            cfg.system.R = matrix_from_json(s.at("R"));
        } else if (s.contains("random_stable")) {
            cfg.system.source = SystemConfig::Source::random_stable;
            const auto& rs = s.at("random_stable");
            cfg.system.p = rs.value("p", 3);
            cfg.system.r = rs.value("r", 3);
            cfg.system.system_seed = rs.value("seed", 0ULL);
        } else {
            throw ConfigError("system section needs preset, inline matrices, or random_stable");
        }
    }
    if (j.contains("noise")) {
        const auto& nj = j.at("noise");
        cfg.noise.family = noise_family_from_string(nj.value("family", "gaussian"));
        if (nj.contains("covariance")) {
            const auto& cov = nj.at("covariance");
            if (cov.is_object() && cov.contains("identity_scale"))
                cfg.noise.identity_scale = cov.at("identity_scale").get<double>();
            else
                cfg.noise.covariance = matrix_from_json(cov);
        }
        if (nj.contains("schedule"))
            for (const auto& entry : nj.at("schedule"))
                cfg.noise.schedule.push_back(matrix_from_json(entry));
        cfg.noise.alpha = nj.value("alpha", 2.0);
        cfg.noise.bound = nj.value("bound", 0.0);
    }
    if (j.contains("policy")) cfg.policies.push_back(policy_config_from_json(j.at("policy")));
    if (j.contains("policies"))
        for (const auto& pj : j.at("policies"))
            cfg.policies.push_back(policy_config_from_json(pj));
    if (cfg.policies.empty()) cfg.policies.push_back(PolicyConfig{});
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.replicates = j.value("replicates", cfg.replicates);
    cfg.base_seed = j.value("base_seed", cfg.base_seed);
    cfg.record_every = j.value("record_every", cfg.record_every);
    cfg.oracle_checks = j.value("oracle_checks", cfg.oracle_checks);
    cfg.excitation_delta = j.value("excitation_delta", cfg.excitation_delta);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    switch (cfg.system.source) {
        case SystemConfig::Source::preset:
            j["system"] = {{"preset", cfg.system.preset}};
            break;
        case SystemConfig::Source::inline_matrices:
            j["system"] = {{"A", matrix_to_json(cfg.system.A)},
                           {"B", matrix_to_json(cfg.system.B)},
                           {"Q", matrix_to_json(cfg.system.Q)},
                           {"R", matrix_to_json(cfg.system.R)}};
            break;
        case SystemConfig::Source::random_stable:
            j["system"] = {{"random_stable",
                            {{"p", cfg.system.p}, {"r", cfg.system.r},
                             {"seed", cfg.system.system_seed}}}};
            break;
    }
    json nj;
    nj["family"] = noise_family_to_string(cfg.noise.family);
    if (cfg.noise.covariance)
        nj["covariance"] = matrix_to_json(*cfg.noise.covariance);
    else if (cfg.noise.schedule.empty())
        nj["covariance"] = {{"identity_scale", cfg.noise.identity_scale}};
    if (!cfg.noise.schedule.empty()) {
        json sched = json::array();
        for (const auto& m : cfg.noise.schedule) sched.push_back(matrix_to_json(m));
        nj["schedule"] = sched;
    }
    nj["alpha"] = cfg.noise.alpha;
    nj["bound"] = cfg.noise.bound;
    j["noise"] = nj;
    json policies = json::array();
    for (const auto& p : cfg.policies) policies.push_back(policy_config_to_json(p));
    j["policies"] = policies;
    j["horizon"] = cfg.horizon;
    j["replicates"] = cfg.replicates;
    j["base_seed"] = cfg.base_seed;
    j["record_every"] = cfg.record_every;
    j["oracle_checks"] = cfg.oracle_checks;
    j["excitation_delta"] = cfg.excitation_delta;
    return j;
}

SystemSpec paper_eq11() {
    Matrix a(3, 3), b(3, 3), q(3, 3), r(3, 3);
    a << 0.13, 0.35, -0.26,
        -1.34, -0.30, -1.75,
         1.18, 0.00, -0.29;
    b << -0.83, -0.53, 0.52,
         -0.98, -2.00, 0.00,
         -1.16, 0.96, -0.04;
    q << 0.79, -0.15, 0.09,
        -0.15, 0.60, -0.04,
         0.09, -0.04, 0.61;
    r << 0.52, -0.06, -0.07,
        -0.06, 0.39, -0.04,
        -0.07, -0.04, 0.67;
    return SystemSpec::make(DynamicsPair(a, b), CostPair(q, r));
}

SystemSpec make_random_stable_system(int p, int r, std::uint64_t seed) {
    require(p >= 1 && r >= 1, "dimensions must be positive");
    RngStream rng(derive_seed(seed, StreamTag::aux));
    for (int tries = 0; tries < 64; ++tries) {
        Matrix a(p, p), b(p, r);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) a(i, j) = rng.gaussian();
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < r; ++j) b(i, j) = rng.gaussian();
        double rho = spectral_radius(a);
        double target = 0.3 + 0.6 * rng.uniform();
        if (rho > 1e-12) a *= target / rho;
        auto random_spd = [&](int d) {
            Matrix c(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) c(i, j) = rng.gaussian();
            return Matrix(0.5 / d * (c.transpose() * c) + 0.2 * Matrix::Identity(d, d));
        };
        try {
            return SystemSpec::make(DynamicsPair(a, b), CostPair(random_spd(p), random_spd(r)));
        } catch (const NumericalError&) {
            continue;
        }
    }
    throw NumericalError("failed to generate a random stable system");
}

SystemSpec build_system(const SystemConfig& cfg) {
    switch (cfg.source) {
        case SystemConfig::Source::preset:
            if (cfg.preset == "paper-eq11") return paper_eq11();
            throw ConfigError("unknown system preset: " + cfg.preset);
        case SystemConfig::Source::inline_matrices:
            return SystemSpec::make(DynamicsPair(cfg.A, cfg.B), CostPair(cfg.Q, cfg.R));
        case SystemConfig::Source::random_stable:
            return make_random_stable_system(cfg.p, cfg.r, cfg.system_seed);
    }
    throw ConfigError("unknown system source");
}

NoiseModel build_noise(const NoiseConfig& cfg, int p) {
    std::vector<Matrix> schedule;
    if (!cfg.schedule.empty())
        schedule = cfg.schedule;
    else if (cfg.covariance)
        schedule = {*cfg.covariance};
    else
        schedule = {cfg.identity_scale * Matrix::Identity(p, p)};
    for (const auto& m : schedule)
        require(m.rows() == p && m.cols() == p, "noise covariance has wrong dimension");
    return NoiseModel::make(cfg.family, std::move(schedule), cfg.alpha, cfg.bound);
}

void validate_config(const ExperimentConfig& cfg) {
    require(cfg.horizon >= 1, "horizon must be at least 1");
    require(cfg.replicates >= 1, "replicates must be at least 1");
    require(cfg.record_every >= 0, "record_every must be nonnegative");
    require(!cfg.policies.empty(), "at least one policy is required");
    SystemSpec sys = build_system(cfg.system);
    NoiseModel noise = build_noise(cfg.noise, sys.p());
    require(noise.sigma0() > 0.0,
            "noise covariance schedule must have positive time-averaged minimum eigenvalue");
    if (cfg.noise.family == NoiseFamily::truncated_gaussian) {
        double trace_cov = 0.0;
        for (const auto& m : noise.covariance_schedule) trace_cov += m.trace();
        trace_cov /= static_cast<double>(noise.covariance_schedule.size());
        require(cfg.noise.bound * cfg.noise.bound >= trace_cov,
                "truncated_gaussian bound rejects too many draws; raise bound");
    }
    for (const auto& pcfg : cfg.policies) {
        if (pcfg.perturb_enabled) validate_perturbation(pcfg.perturb, sys.r());
        if (pcfg.kind == PolicyKind::restricted_greedy)
            require(pcfg.constraint == "known_b" || pcfg.constraint == "support" ||
                        pcfg.constraint == "none",
                    "unknown constraint kind: " + pcfg.constraint);
        if (pcfg.constraint == "support") {
            require(!pcfg.support_mask.empty(), "support constraint needs a support_mask");
            require(static_cast<int>(pcfg.support_mask.size()) == sys.p(),
                    "support_mask must have p rows");
            for (const auto& row : pcfg.support_mask)
                require(static_cast<int>(row.size()) == sys.q(), "support_mask must have q cols");
        }
        require(pcfg.init == "bootstrap" || pcfg.init == "optimal" ||
                    pcfg.init == "perturbed_truth",
                "unknown init mode: " + pcfg.init);
        if (pcfg.init == "bootstrap" &&
            (pcfg.kind != PolicyKind::optimal && pcfg.kind != PolicyKind::perturbed_linear))
            require(pcfg.bootstrap_samples >= sys.p() + sys.r(),
                    "bootstrap_samples must be at least p + r");
    }
}

PolicyState make_policy(const SystemSpec& sys, const NoiseModel& noise, const PolicyConfig& cfg,
                        std::uint64_t seed) {
    PolicyState st(cfg.kind, sys.cost, sys.p(), sys.r());
    st.gamma = cfg.perturb.gamma;
    st.sigma_rce = cfg.sigma_rce;
    st.ts_lambda = cfg.ts_lambda;
    st.ts_scale = cfg.ts_scale;
    st.ts_floor = cfg.ts_floor;
    st.persistent_sd = cfg.persistent_sd;
    if (cfg.perturb_enabled &&
        (cfg.kind == PolicyKind::perturbed_greedy || cfg.kind == PolicyKind::restricted_greedy)) {
        validate_perturbation(cfg.perturb, sys.r());
        st.perturb = cfg.perturb;
        if (cfg.kind == PolicyKind::restricted_greedy)
            st.perturb->mode = PerturbationConfig::Mode::restricted;
    }
    if (cfg.kind == PolicyKind::restricted_greedy) {
        if (cfg.constraint == "known_b")
            st.constraint = ConstraintSet::known_b(sys.theta0.B, sys.p());
        else if (cfg.constraint == "support") {
            Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(sys.p(), sys.q());
            for (int i = 0; i < sys.p(); ++i)
                for (int j = 0; j < sys.q(); ++j) mask(i, j) = cfg.support_mask[i][j];
            st.constraint = ConstraintSet::support(mask);
        }
    }

    if (cfg.kind == PolicyKind::optimal || cfg.kind == PolicyKind::perturbed_linear) {
        st.gain = sys.opt.L;
        return st;
    }
    if (cfg.init == "optimal") {
        st.gain = sys.opt.L;
        st.estimate = sys.theta0.stacked();
        st.estimator.theta_hat = st.estimate;
        return st;
    }
    if (cfg.init == "perturbed_truth") {
        // Oracle-style initializer: gain of a slightly perturbed truth, kept
        // only when it stabilizes the true loop.
        RngStream rng(derive_seed(seed, StreamTag::bootstrap));
        for (int tries = 0; tries < 64; ++tries) {
            Matrix delta(sys.p(), sys.q());
            for (int i = 0; i < delta.rows(); ++i)
                for (int j = 0; j < delta.cols(); ++j) delta(i, j) = rng.gaussian();
            delta *= cfg.init_scale / std::max(spectral_norm(delta), 1e-300);
            Matrix theta = sys.theta0.stacked() + delta;
            try {
                DynamicsPair pair = DynamicsPair::from_stacked(theta, sys.p(), sys.r());
                Matrix gain = solve_riccati(pair, sys.cost).L;
                if (spectral_radius(sys.theta0.A + sys.theta0.B * gain) < 1.0) {
                    st.gain = gain;
                    st.estimate = theta;
                    st.estimator.theta_hat = theta;
                    return st;
                }
            } catch (const NumericalError&) {
            }
        }
        st.gain = sys.opt.L;
        st.estimate = sys.theta0.stacked();
        return st;
    }
    // Default: excite-estimate-certify bootstrap on its own substream.
    RngStream rng(derive_seed(seed, StreamTag::bootstrap));
    BootstrapResult boot = bootstrap_stabilizer(sys, noise, cfg.bootstrap_samples, rng);
    st.gain = boot.gain;
    st.estimate = boot.theta_hat;
    st.estimator = boot.estimator;
    st.fallback_flag = boot.fallback;
    return st;
}

std::vector<PolicyRun> run_experiment(const ExperimentConfig& cfg, int threads) {
    validate_config(cfg);
    SystemSpec sys = build_system(cfg.system);
    NoiseModel noise = build_noise(cfg.noise, sys.p());
    RecordSpec recs{cfg.record_every, true};

    std::vector<PolicyRun> runs(cfg.policies.size());
    for (std::size_t pi = 0; pi < cfg.policies.size(); ++pi) {
        runs[pi].name = cfg.policies[pi].label;
        runs[pi].results.resize(static_cast<std::size_t>(cfg.replicates));
    }

    struct Task {
        std::size_t policy;
        int replicate;
    };
    std::vector<Task> tasks;
    for (std::size_t pi = 0; pi < cfg.policies.size(); ++pi)
        for (int i = 0; i < cfg.replicates; ++i) tasks.push_back({pi, i});

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            std::size_t idx = next.fetch_add(1);
            if (idx >= tasks.size() || failed.load()) return;
            const Task& task = tasks[idx];
            try {
                auto start = std::chrono::steady_clock::now();
                std::uint64_t seed = replicate_seed(cfg.base_seed,
                                                    static_cast<std::uint64_t>(task.replicate));
                PolicyState st = make_policy(sys, noise, cfg.policies[task.policy], seed);
                CoupledRun run = coupled_regret(sys, st, cfg.horizon, seed, noise, recs);

                ReplicateResult res;
                res.replicate_id = task.replicate;
                res.seed = seed;
                res.records = std::move(run.records);
                res.fallback_flag = st.fallback_flag;
                res.riccati_failures = st.riccati_failures;
                res.diverged = run.diverged;
                if (!run.diverged)
                    res.excitation = excitation_report(st.estimator, sys, noise, run.trace,
                                                       cfg.excitation_delta);
                if (cfg.oracle_checks && !run.diverged) {
                    DecompositionTerms terms = closed_form_decomposition(sys, run.trace);
                    double rel = std::abs(terms.total() - run.final_regret) /
                                 (1.0 + std::abs(run.final_regret));
                    res.oracle_rel_err = rel;
                    res.oracle_ok = rel <= 1e-6;
                }
                auto end = std::chrono::steady_clock::now();
                res.wall_time_s = std::chrono::duration<double>(end - start).count();
                runs[task.policy].results[static_cast<std::size_t>(task.replicate)] =
                    std::move(res);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failure = e.what();
                failed.store(true);
                return;
            }
        }
    };

    int n_threads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(tasks.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw NumericalError("replicate failed: " + failure);
    return runs;
}

ComparisonSummary summarize_comparison(const std::vector<PolicyRun>& runs) {
    ComparisonSummary summary;
    for (const auto& run : runs) {
        ComparisonSummary::PolicyStats stats;
        stats.name = run.name;
        std::map<long, double> max_regret;
        std::map<long, double> max_err;
        for (const auto& rep : run.results) {
            double sup_r = -std::numeric_limits<double>::infinity();
            double sup_e = -std::numeric_limits<double>::infinity();
            for (const auto& rec : rep.records) {
                if (rec.t < 1) continue;
                double nr = rec.regret / std::sqrt(static_cast<double>(rec.t));
                sup_r = std::max(sup_r, nr);
                auto [it, inserted] = max_regret.try_emplace(rec.t, nr);
                if (!inserted) it->second = std::max(it->second, nr);
                if (!std::isnan(rec.est_err_sq)) {
                    double ne = std::sqrt(static_cast<double>(rec.t)) * rec.est_err_sq;
                    sup_e = std::max(sup_e, ne);
                    auto [eit, einserted] = max_err.try_emplace(rec.t, ne);
                    if (!einserted) eit->second = std::max(eit->second, ne);
                }
            }
            stats.sup_norm_regret.push_back(sup_r);
            stats.sup_norm_err.push_back(std::isinf(sup_e) && sup_e < 0
                                             ? std::numeric_limits<double>::quiet_NaN()
                                             : sup_e);
        }
        stats.regret_q25 = percentile(stats.sup_norm_regret, 0.25);
        stats.regret_q50 = percentile(stats.sup_norm_regret, 0.50);
        stats.regret_q75 = percentile(stats.sup_norm_regret, 0.75);
        for (const auto& [t, v] : max_regret) {
            stats.grid.push_back(t);
            stats.max_norm_regret.push_back(v);
            auto it = max_err.find(t);
            stats.max_norm_err.push_back(it == max_err.end()
                                             ? std::numeric_limits<double>::quiet_NaN()
                                             : it->second);
        }
        summary.policies.push_back(std::move(stats));
    }
    return summary;
}

std::string csv_string(const std::vector<PolicyRun>& runs) {
    std::string out =
        "replicate_id,seed,t,epoch,regret,norm_regret_thm3,est_err_sq,norm_err_thm3,"
        "policy,fallback_flag\n";
    char buf[256];
    for (const auto& run : runs) {
        for (const auto& rep : run.results) {
            for (const auto& rec : rep.records) {
                std::snprintf(buf, sizeof(buf), "%d,%" PRIu64 ",%ld,%d,", rep.replicate_id,
                              rep.seed, rec.t, rec.epoch);
                out += buf;
                out += format_double(rec.regret);
                out += ',';
                out += format_double(rec.norm_regret_thm3);
                out += ',';
                out += format_double(rec.est_err_sq);
                out += ',';
                out += format_double(rec.norm_err_thm3);
                out += ',';
                out += run.name;
                out += ',';
                out += rep.fallback_flag ? '1' : '0';
                out += '\n';
            }
        }
    }
    return out;
}

void emit_csv(const std::vector<PolicyRun>& runs, const std::string& path) {
    require(!runs.empty(), "emit needs nonempty results");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericalError("cannot open output file: " + path);
    out << csv_string(runs);
    if (!out) throw NumericalError("write failed: " + path);
}

json results_to_json(const std::vector<PolicyRun>& runs, const ExperimentConfig& cfg) {
    json j;
    j["config"] = config_to_json(cfg);
    json policies = json::array();
    for (const auto& run : runs) {
        json pj;
        pj["name"] = run.name;
        json results = json::array();
        for (const auto& rep : run.results) {
            json rj;
            rj["replicate_id"] = rep.replicate_id;
            rj["seed"] = rep.seed;
            rj["fallback_flag"] = rep.fallback_flag;
            rj["riccati_failures"] = rep.riccati_failures;
            rj["diverged"] = rep.diverged;
            rj["oracle_ok"] = rep.oracle_ok;
            rj["oracle_rel_err"] = rep.oracle_rel_err;
            rj["wall_time_s"] = rep.wall_time_s;
            rj["excitation"] = {{"lambda_min_gram", rep.excitation.lambda_min_gram},
                                {"lambda_w", rep.excitation.lambda_w},
                                {"lambda_v", rep.excitation.lambda_v},
                                {"lambda_lower", rep.excitation.lambda_lower},
                                {"v1", rep.excitation.v1},
                                {"v2", rep.excitation.v2},
                                {"cond_w_satisfied", rep.excitation.cond_w_satisfied},
                                {"cond_v_satisfied", rep.excitation.cond_v_satisfied}};
            json records = json::array();
            for (const auto& rec : rep.records) {
                json rr = json::array();
                rr.push_back(rec.t);
                rr.push_back(rec.epoch);
                rr.push_back(double_to_json(rec.regret));
                rr.push_back(double_to_json(rec.norm_regret_thm3));
                rr.push_back(double_to_json(rec.est_err_sq));
                rr.push_back(double_to_json(rec.norm_err_thm3));
                records.push_back(rr);
            }
            rj["records"] = records;
            results.push_back(rj);
        }
        pj["results"] = results;
        policies.push_back(pj);
    }
    j["policies"] = policies;
    return j;
}

std::vector<PolicyRun> results_from_json(const json& j) {
    std::vector<PolicyRun> runs;
    for (const auto& pj : j.at("policies")) {
        PolicyRun run;
        run.name = pj.at("name").get<std::string>();
        for (const auto& rj : pj.at("results")) {
            ReplicateResult rep;
            rep.replicate_id = rj.at("replicate_id").get<int>();
            rep.seed = rj.at("seed").get<std::uint64_t>();
            rep.fallback_flag = rj.at("fallback_flag").get<bool>();
            rep.riccati_failures = rj.at("riccati_failures").get<int>();
            rep.diverged = rj.at("diverged").get<bool>();
            rep.oracle_ok = rj.at("oracle_ok").get<bool>();
            rep.oracle_rel_err = rj.at("oracle_rel_err").get<double>();
            rep.wall_time_s = rj.at("wall_time_s").get<double>();
            const auto& ej = rj.at("excitation");
            rep.excitation.lambda_min_gram = ej.at("lambda_min_gram").get<double>();
            rep.excitation.lambda_w = ej.at("lambda_w").get<double>();
            rep.excitation.lambda_v = ej.at("lambda_v").get<double>();
            rep.excitation.lambda_lower = ej.at("lambda_lower").get<double>();
            rep.excitation.v1 = ej.at("v1").get<double>();
            rep.excitation.v2 = ej.at("v2").get<double>();
            rep.excitation.cond_w_satisfied = ej.at("cond_w_satisfied").get<bool>();
            rep.excitation.cond_v_satisfied = ej.at("cond_v_satisfied").get<bool>();
            for (const auto& rr : rj.at("records")) {
                RegretRecord rec;
                rec.t = rr.at(0).get<long>();
                rec.epoch = rr.at(1).get<int>();
                rec.regret = double_from_json(rr.at(2));
                rec.norm_regret_thm3 = double_from_json(rr.at(3));
                rec.est_err_sq = double_from_json(rr.at(4));
                rec.norm_err_thm3 = double_from_json(rr.at(5));
                rep.records.push_back(rec);
            }
            run.results.push_back(std::move(rep));
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

void emit_json(const std::vector<PolicyRun>& runs, const ExperimentConfig& cfg,
               const std::string& path) {
    require(!runs.empty(), "emit needs nonempty results");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericalError("cannot open output file: " + path);
    out << results_to_json(runs, cfg).dump(2) << '\n';
    if (!out) throw NumericalError("write failed: " + path);
}

}  // namespace lqr
