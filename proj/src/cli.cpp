#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "lqr/harness.hpp"

namespace lqr {

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_path;
    std::string format = "csv";
    std::string preset;
    long horizon = -1;
    int replicates = -1;
    long long seed = -1;
    int threads = 0;
};

int env_threads() {
    const char* env = std::getenv("ADAPTIVE_LQR_THREADS");
    if (!env) return 0;
    return std::atoi(env);
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_run_opts) {
    cmd->add_option("--config", opts.config_path, "Path to a JSON experiment config");
    if (with_run_opts) {
        cmd->add_option("--out", opts.out_path, "Output file path");
        cmd->add_option("--format", opts.format, "Output format: csv or json")
            ->check(CLI::IsMember({"csv", "json"}));
        cmd->add_option("--horizon", opts.horizon, "Override the configured horizon");
        cmd->add_option("--replicates", opts.replicates, "Override the replicate count");
        cmd->add_option("--seed", opts.seed, "Override the base seed");
        cmd->add_option("--threads", opts.threads, "Worker threads (0 = auto)");
    }
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg =
        opts.config_path.empty() ? default_config() : load_config(opts.config_path);
    if (!opts.preset.empty()) {
        cfg.system.source = SystemConfig::Source::preset;
        cfg.system.preset = opts.preset;
    }
    if (opts.horizon > 0) cfg.horizon = opts.horizon;
    if (opts.replicates > 0) cfg.replicates = opts.replicates;
    if (opts.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(opts.seed);
    return cfg;
}

void print_matrix(const char* name, const Matrix& m) {
    std::printf("%s =\n", name);
    for (long i = 0; i < m.rows(); ++i) {
        std::printf("  ");
        for (long j = 0; j < m.cols(); ++j) std::printf("% .10f ", m(i, j));
        std::printf("\n");
    }
}

int run_riccati(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    SystemSpec sys = build_system(cfg.system);
    print_matrix("K", sys.opt.K);
    print_matrix("L", sys.opt.L);
    std::printf("residual            = %.3e\n", sys.opt.residual);
    std::printf("iterations          = %d\n", sys.opt.iterations);
    std::printf("spectral_radius(A)  = %.10f\n", spectral_radius(sys.theta0.A));
    std::printf("spectral_radius(A+BL) = %.10f\n",
                spectral_radius(sys.theta0.A + sys.theta0.B * sys.opt.L));
    return 0;
}

int run_validate(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    validate_config(cfg);
    SystemSpec sys = build_system(cfg.system);
    NoiseModel noise = build_noise(cfg.noise, sys.p());
    std::printf("config OK\n");
    std::printf("system: p=%d r=%d, rho(A0)=%.4f, rho(A0+B0L*)=%.4f\n", sys.p(), sys.r(),
                spectral_radius(sys.theta0.A),
                spectral_radius(sys.theta0.A + sys.theta0.B * sys.opt.L));
    std::printf("noise: sigma0=%.6f alpha=%.3f\n", noise.sigma0(), noise.alpha);
    for (const auto& pcfg : cfg.policies) {
        std::printf("policy %s:", pcfg.label.c_str());
        if (pcfg.perturb_enabled) {
            double acc = perturbation_acceptance(pcfg.perturb, sys.r());
            std::printf(" gamma=%.3f c_low=%.3f c_high=%.3f (r*c_low=%.3f < c_high ok)",
                        pcfg.perturb.gamma, pcfg.perturb.c_low, pcfg.perturb.c_high,
                        sys.r() * pcfg.perturb.c_low);
            std::printf(" margins rho_lo=%.2f rho_hi=%.2f kappa=%.2f -> acceptance=%.4f",
                        pcfg.perturb.rho_lo, pcfg.perturb.rho_hi, pcfg.perturb.kappa, acc);
        }
        std::printf("\n");
    }
    return 0;
}

int run_simulate(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    validate_config(cfg);
    SystemSpec sys = build_system(cfg.system);
    NoiseModel noise = build_noise(cfg.noise, sys.p());
    std::uint64_t seed = replicate_seed(cfg.base_seed, 0);
    PolicyState st = make_policy(sys, noise, cfg.policies.front(), seed);
    RecordSpec recs{cfg.record_every, true};
    CoupledRun run = coupled_regret(sys, st, cfg.horizon, seed, noise, recs);

    std::string out;
    out += "t,epoch";
    for (int i = 0; i < sys.p(); ++i) out += ",x" + std::to_string(i);
    for (int i = 0; i < sys.r(); ++i) out += ",u" + std::to_string(i);
    for (int i = 0; i < sys.r(); ++i) out += ",v" + std::to_string(i);
    for (int i = 0; i < sys.p(); ++i) out += ",w" + std::to_string(i);
    out += ",cost\n";
    char buf[64];
    const auto& traj = run.trace.traj;
    for (long t = 0; t < run.trace.length(); ++t) {
        const auto ts = static_cast<std::size_t>(t);
        std::snprintf(buf, sizeof(buf), "%ld,%d", t, epoch_of(t, st.gamma));
        out += buf;
        auto append_vec = [&](const Vector& v) {
            for (long i = 0; i < v.size(); ++i) {
                std::snprintf(buf, sizeof(buf), ",%.17g", v(i));
                out += buf;
            }
        };
        append_vec(traj.x[ts]);
        append_vec(traj.u[ts]);
        append_vec(traj.v[ts]);
        append_vec(traj.w[ts]);
        std::snprintf(buf, sizeof(buf), ",%.17g\n", traj.cost[ts]);
        out += buf;
    }
    if (opts.out_path.empty()) {
        std::fputs(out.c_str(), stdout);
    } else {
        std::ofstream f(opts.out_path, std::ios::binary);
        if (!f) throw NumericalError("cannot open output file: " + opts.out_path);
        f << out;
    }
    std::fprintf(stderr, "final regret = %.6f (diverged=%d, riccati_failures=%d)\n",
                 run.final_regret, run.diverged ? 1 : 0, st.riccati_failures);
    return 0;
}

int run_experiment_cmd(const CommonOpts& opts, bool compare) {
    ExperimentConfig cfg = resolve_config(opts);
    if (compare && cfg.policies.size() < 2)
        throw ConfigError("compare needs at least 2 policies in the config");
    int threads = opts.threads > 0 ? opts.threads : env_threads();
    auto runs = run_experiment(cfg, threads);

    if (compare) {
        ComparisonSummary summary = summarize_comparison(runs);
        std::printf("%-20s %12s %12s %12s\n", "policy", "sup-nreg q25", "q50", "q75");
        for (const auto& st : summary.policies)
            std::printf("%-20s %12.4f %12.4f %12.4f\n", st.name.c_str(), st.regret_q25,
                        st.regret_q50, st.regret_q75);
    }
    if (!opts.out_path.empty()) {
        if (opts.format == "csv")
            emit_csv(runs, opts.out_path);
        else
            emit_json(runs, cfg, opts.out_path);
        std::fprintf(stderr, "wrote %s\n", opts.out_path.c_str());
    } else if (!compare) {
        std::fputs(csv_string(runs).c_str(), stdout);
    }
    bool any_oracle_failure = false;
    for (const auto& run : runs)
        for (const auto& rep : run.results)
            if (!rep.oracle_ok) any_oracle_failure = true;
    if (any_oracle_failure) {
        std::fprintf(stderr, "oracle identity check failed on at least one replicate\n");
        return 2;
    }
    return 0;
}

int run_oracle(std::uint64_t seed, int systems, long horizon) {
    int failures = 0;
    for (int s = 0; s < systems; ++s) {
        int p = 1 + static_cast<int>((seed + s) % 3);
        int r = 1 + static_cast<int>((seed + 2 * s + 1) % 3);
        SystemSpec sys = make_random_stable_system(p, r, seed + 1000 * s);
        NoiseModel noise = NoiseModel::isotropic_gaussian(p, 0.5);

        PolicyConfig pcfg;
        pcfg.kind = PolicyKind::perturbed_greedy;
        pcfg.init = "perturbed_truth";
        pcfg.perturb.c_high = 4.0;
        pcfg.perturb.c_low = 4.0 / (r + 1.0);
        std::uint64_t run_seed = replicate_seed(seed, static_cast<std::uint64_t>(s));
        PolicyState st = make_policy(sys, noise, pcfg, run_seed);
        CoupledRun run = coupled_regret(sys, st, horizon, run_seed, noise, RecordSpec{0, false});

        double tele = telescoping_oracle(sys, run.trace);
        DecompositionTerms terms = closed_form_decomposition(sys, run.trace);
        double direct = run.final_regret;
        double tele_err = std::abs(tele - direct) / (1.0 + std::abs(direct));
        double closed_err = std::abs(terms.total() - tele) / (1.0 + std::abs(tele));
        bool ok = tele_err <= 1e-8 && closed_err <= 1e-6;
        if (!ok) ++failures;
        std::printf("system %2d (p=%d r=%d): direct=%12.4f telescoping_err=%.2e "
                    "closed_form_err=%.2e %s\n",
                    s, p, r, direct, tele_err, closed_err, ok ? "ok" : "FAIL");
    }
    if (failures > 0) {
        std::printf("%d oracle check(s) failed\n", failures);
        return 2;
    }
    std::printf("all oracle checks passed\n");
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Adaptive LQR benchmark: perturbed greedy regulation under unknown dynamics"};
    app.require_subcommand(1);

    CommonOpts riccati_opts, validate_opts, simulate_opts, experiment_opts, compare_opts;

    auto* riccati_cmd =
        app.add_subcommand("riccati", "Solve the Riccati equation for the configured system");
    add_common(riccati_cmd, riccati_opts, false);
    riccati_cmd->add_option("--preset", riccati_opts.preset,
                            "System preset overriding the config");

    auto* simulate_cmd = app.add_subcommand("simulate", "Run one replicate and dump the trace");
    add_common(simulate_cmd, simulate_opts, true);

    auto* experiment_cmd =
        app.add_subcommand("experiment", "Run replicated experiments and emit records");
    add_common(experiment_cmd, experiment_opts, true);

    auto* compare_cmd = app.add_subcommand("compare", "Paired comparison of configured policies");
    add_common(compare_cmd, compare_opts, true);

    auto* validate_cmd = app.add_subcommand("validate", "Validate a config and report margins");
    add_common(validate_cmd, validate_opts, false);

    long long oracle_seed = 7;
    int oracle_systems = 20;
    long oracle_horizon = 300;
    auto* oracle_cmd =
        app.add_subcommand("oracle", "Regret decomposition identity checks on random systems");
    oracle_cmd->add_option("--seed", oracle_seed, "Oracle sweep seed");
    oracle_cmd->add_option("--systems", oracle_systems, "Number of random systems");
    oracle_cmd->add_option("--horizon", oracle_horizon, "Trace length per system");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        app.exit(e);
        return 1;
    }

    try {
        if (riccati_cmd->parsed()) return run_riccati(riccati_opts);
        if (simulate_cmd->parsed()) return run_simulate(simulate_opts);
        if (experiment_cmd->parsed()) return run_experiment_cmd(experiment_opts, false);
        if (compare_cmd->parsed()) return run_experiment_cmd(compare_opts, true);
        if (validate_cmd->parsed()) return run_validate(validate_opts);
        if (oracle_cmd->parsed())
            return run_oracle(static_cast<std::uint64_t>(oracle_seed), oracle_systems,
                              oracle_horizon);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

}  // namespace lqr
