#pragma once

#include <vector>

#include "sdec/config.hpp"
#include "sdec/metrics.hpp"
#include "sdec/mdp.hpp"
#include "sdec/saddle.hpp"

namespace sdec {

struct TrainResult {
    ParamFunction v;
    ParamFunction pi;
    ParamFunction rho;
    std::vector<MetricsRecord> metrics;  // one record per completed inner iteration
    long long gradient_steps = 0;
    double wall_ms_total = 0.0;
    double final_avg_return = 0.0;
    double final_return_half_width = 0.0;
    // tabular diagnostics (NaN / empty for continuous environments)
    double final_consistency_residual = 0.0;
    std::vector<double> v_error_per_episode;  // sup-norm error vs the fixed-point oracle
    std::vector<double> heldout_objective;    // filled when monitor_heldout is set
    double dual_param_norm = 0.0;             // diagnostic |w_rho|_2 at exit
};

/// Full training loop: collect K transitions per episode under the behavior
/// policy, then N inner iterations of (dual fit, stepsize decay, stochastic
/// gradients, prox updates for V then pi from the same pre-update snapshot),
/// then refresh the behavior policy. Deterministic given (config, rng state).
TrainResult sdec_train(const AnyEnv& env, const SdecConfig& cfg, Rng& rng);

/// Convenience: builds the environment named in the config (with cfg.gamma as
/// its discount) and trains on it.
TrainResult sdec_train(const SdecConfig& cfg);

struct EvalResult {
    double mean = 0.0;
    double half_width = 0.0;  // 50% normal-approximation confidence half-width
    int episodes = 0;
};

EvalResult evaluate_policy(const TabularMdp& mdp, const TabularPolicySampler& policy,
                           int episodes, int horizon, Rng& rng);
EvalResult evaluate_policy(const TabularMdp& mdp, const ParamFunction& pi, int episodes,
                           int horizon, Rng& rng);
EvalResult evaluate_policy(const ContinuousEnv& env, const ParamFunction& pi, int episodes,
                           int horizon, Rng& rng);

/// Tabular views of learned functions (states are passed as index vectors).
TabularValue tabular_value_table(const ParamFunction& v, int n_states);
TabularPolicy tabular_policy_table(const ParamFunction& pi, int n_states);

/// Action sampler for a parametric policy, optionally epsilon-mixed with the
/// uniform distribution (tabular exploration floor).
TabularPolicySampler tabular_sampler(const ParamFunction& pi, double epsilon);

nlohmann::json checkpoint_to_json(const TrainResult& result, const SdecConfig& cfg);

}  // namespace sdec
