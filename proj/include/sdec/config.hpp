#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace sdec {

struct FamilySpec {
    std::string kind = "tabular";  // tabular | linear | rbf
    int n_centers = 100;           // rbf only
    double bandwidth = -1.0;       // rbf only; <= 0 selects the median trick
    std::uint64_t seed = 0;        // rbf center draw
};

struct EnvSpec {
    std::string name = "chain";
    nlohmann::json params = nlohmann::json::object();  // discount excluded: cfg.gamma rules
};

/// All training hyperparameters. Defaults follow the reference setting:
/// gamma = 0.995, stepsize 0.01, eta = 0.001, lambda = 0.004 (the midpoint of
/// the {0.001, 0.004, 0.016} grid).
struct SdecConfig {
    double lambda = 0.004;
    double eta = 0.001;
    double gamma = 0.995;

    // optimizer
    std::string divergence = "euclidean";  // euclidean | kl_simplex | kl_penalized
    double zeta0 = 0.01;
    double zeta0_pi = -1.0;  // <= 0: same as zeta0
    std::string decay = "one_over_j";  // one_over_j | constant
    int kl_inner_iters = 20;

    // loop sizes (Algorithm indices T, K, N)
    int episodes = 100;
    int collect_per_episode = 52;
    int inner_iters = 50;
    std::size_t replay_capacity = 100000;
    int batch_size = 64;
    int rollout_horizon = 32;

    // multi-step / eligibility trace
    int multi_step_T = 0;
    double trace_zeta = 0.0;

    std::uint64_t seed = 0;

    // function families
    FamilySpec v_family;
    FamilySpec pi_family;
    FamilySpec rho_family;

    // evaluation cadence (0 disables in-loop evaluation)
    int eval_every = 0;
    int eval_episodes = 20;
    int eval_horizon = 0;  // 0: environment horizon (tabular: rollout_horizon)

    // behavior policy
    bool freeze_behavior = false;
    std::string behavior_init = "policy";  // policy | uniform
    double behavior_epsilon = -1.0;        // < 0: 0.05 tabular, 0 continuous

    bool randomized_iterate = false;  // emit a randomly selected iterate as the result
    bool record_timing = false;       // wall_ms stays NaN when off (reproducible CSV)
    bool force_segment_path = false;  // run T=0 through the multi-step machinery
    bool monitor_heldout = false;     // track L_eta on a frozen held-out batch

    EnvSpec env;

    double policy_stepsize_base() const { return zeta0_pi > 0.0 ? zeta0_pi : zeta0; }
};

/// Parse a config JSON document. Missing keys take the defaults above;
/// unknown keys are rejected. The SDEC_SEED environment variable overrides
/// the seed.
SdecConfig parse_config(const nlohmann::json& j);
SdecConfig load_config(const std::string& path);

nlohmann::json config_to_json(const SdecConfig& cfg);

/// Empty string when valid, otherwise a description of the first violation.
std::string config_violation(const SdecConfig& cfg);

}  // namespace sdec
