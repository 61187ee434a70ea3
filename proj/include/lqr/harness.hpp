#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lqr/dynamics.hpp"
#include "lqr/estimation.hpp"
#include "lqr/metrics.hpp"
#include "lqr/policies.hpp"

namespace lqr {

using json = nlohmann::ordered_json;

// System source: named preset, inline matrices, or a seeded random stable
// instance.
struct SystemConfig {
    enum class Source { preset, inline_matrices, random_stable };

    Source source = Source::preset;
    std::string preset = "paper-eq11";
    Matrix A, B, Q, R;             // inline_matrices
    int p = 3, r = 3;              // random_stable
    std::uint64_t system_seed = 0;
};

struct NoiseConfig {
    NoiseFamily family = NoiseFamily::gaussian;
    double identity_scale = 1.0;         // used when no explicit covariance given
    std::optional<Matrix> covariance;    // single-matrix schedule
    std::vector<Matrix> schedule;        // explicit heteroscedastic schedule
    double alpha = 2.0;
    double bound = 0.0;
};

struct PolicyConfig {
    PolicyKind kind = PolicyKind::perturbed_greedy;
    std::string label;  // defaults to the kind name

    PerturbationConfig perturb;
    bool perturb_enabled = true;

    // perturbed_linear only
    double persistent_sd = 0.0;

    // baselines
    double sigma_rce = 1.5;
    double ts_lambda = 1.0;
    double ts_scale = 1.0;
    double ts_floor = 1.5;

    // restricted_greedy
    std::string constraint = "none";  // none | known_b | support
    std::vector<std::vector<bool>> support_mask;

    // initial stabilizer: bootstrap (default), optimal (true gain, flagged
    // use-case: oracle sweeps), perturbed_truth (gain of a slightly perturbed
    // truth; oracle sweeps that exercise nonzero gain deviation)
    std::string init = "bootstrap";
    long bootstrap_samples = 17;
    double init_scale = 0.05;
};

struct ExperimentConfig {
    SystemConfig system;
    NoiseConfig noise;
    std::vector<PolicyConfig> policies;
    long horizon = 10000;
    int replicates = 20;
    std::uint64_t base_seed = 1;
    long record_every = 100;
    bool oracle_checks = false;
    double excitation_delta = 0.05;
};

ExperimentConfig default_config();
ExperimentConfig config_from_json(const json& j);
ExperimentConfig load_config(const std::string& path);
json config_to_json(const ExperimentConfig& cfg);

/// Throws ConfigError on any invalid field; called before any simulation.
void validate_config(const ExperimentConfig& cfg);

/// The simulation instance of the benchmark: the printed two-decimal
/// A0, B0, Q, R matrices with first row 0.13, 0.35, -0.26.
SystemSpec paper_eq11();

SystemSpec build_system(const SystemConfig& cfg);
NoiseModel build_noise(const NoiseConfig& cfg, int p);

/// Random stable instance: A scaled to a spectral radius in [0.3, 0.9],
/// Gaussian B, random SPD cost matrices.
SystemSpec make_random_stable_system(int p, int r, std::uint64_t seed);

/// Assembles an initialized PolicyState for one replicate, running the
/// bootstrap phase on its own substream when configured.
PolicyState make_policy(const SystemSpec& sys, const NoiseModel& noise,
                        const PolicyConfig& cfg, std::uint64_t seed);

struct ReplicateResult {
    int replicate_id = 0;
    std::uint64_t seed = 0;
    std::vector<RegretRecord> records;
    bool fallback_flag = false;
    int riccati_failures = 0;
    bool diverged = false;
    bool oracle_ok = true;
    double oracle_rel_err = 0.0;
    ExcitationReport excitation;
    double wall_time_s = 0.0;
};

struct PolicyRun {
    std::string name;
    std::vector<ReplicateResult> results;
};

/// Runs `cfg.replicates` paired replicates of every configured policy.
/// Replicate i uses seed base_seed ^ i with separate substreams for noise,
/// perturbation, baseline randomization and bootstrap; outputs are
/// bit-identical regardless of the number of worker threads.
std::vector<PolicyRun> run_experiment(const ExperimentConfig& cfg, int threads = 1);

struct ComparisonSummary {
    struct PolicyStats {
        std::string name;
        // per replicate: sup over recorded n of n^{-1/2} R_n and of
        // sqrt(n) ||theta_hat - theta0||^2
        std::vector<double> sup_norm_regret;
        std::vector<double> sup_norm_err;
        double regret_q25 = 0.0, regret_q50 = 0.0, regret_q75 = 0.0;
        // per recorded n: max over replicates (the envelope curves)
        std::vector<long> grid;
        std::vector<double> max_norm_regret;
        std::vector<double> max_norm_err;
    };
    std::vector<PolicyStats> policies;
};

ComparisonSummary summarize_comparison(const std::vector<PolicyRun>& runs);

/// CSV with the exact column set
/// replicate_id,seed,t,epoch,regret,norm_regret_thm3,est_err_sq,norm_err_thm3,policy,fallback_flag
/// and full-precision decimal numbers.
void emit_csv(const std::vector<PolicyRun>& runs, const std::string& path);
std::string csv_string(const std::vector<PolicyRun>& runs);

/// JSON mirror of the records plus resolved-config echo and diagnostics.
void emit_json(const std::vector<PolicyRun>& runs, const ExperimentConfig& cfg,
               const std::string& path);
json results_to_json(const std::vector<PolicyRun>& runs, const ExperimentConfig& cfg);
std::vector<PolicyRun> results_from_json(const json& j);

int cli_main(int argc, char** argv);

}  // namespace lqr
