#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sdec/features.hpp"
#include "sdec/rng.hpp"

namespace sdec {

enum class FunctionKind { value, log_policy_discrete, log_policy_gaussian, dual };

/// A differentiable parametric family with a flat parameter vector and
/// hand-derived gradients. Values and duals are linear in their features;
/// the discrete policy is a softmax over per-action logits; the Gaussian
/// policy has a feature-linear mean and state-independent diagonal scale
/// parametrized through log standard deviations clamped to [-5, 2].
class ParamFunction {
  public:
    FunctionKind kind = FunctionKind::value;
    Eigen::VectorXd params;
    FeatureMap features = FeatureMap::linear(1);
    int n_actions = 0;   // discrete policy
    int action_dim = 0;  // gaussian policy
    Eigen::VectorXd action_low, action_high;  // metadata for gaussian policies

    static constexpr double kLogStdMin = -5.0;
    static constexpr double kLogStdMax = 2.0;

    int n_params() const { return static_cast<int>(params.size()); }

    // parameter layout helpers
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    weight_matrix() const;  // policy weights, rows = actions/action dims
    Eigen::VectorXd log_std() const;  // gaussian tail of the parameter vector (clamped)
};

ParamFunction make_value_function(FeatureMap features);
ParamFunction make_discrete_policy(FeatureMap features, int n_actions);
ParamFunction make_gaussian_policy(FeatureMap features, int action_dim,
                                   Eigen::VectorXd action_low = {},
                                   Eigen::VectorXd action_high = {});
ParamFunction make_dual_function(FeatureMap pair_features);

struct Eval {
    double value = 0.0;
    Eigen::VectorXd grad;  // same length as params
};

/// V(s) and its parameter gradient.
Eval eval_value(const ParamFunction& f, const Eigen::VectorXd& state);

/// log pi(a|s) and its parameter gradient. Discrete actions are passed as
/// 1-dim vectors holding the index.
Eval eval_log_policy(const ParamFunction& f, const Eigen::VectorXd& state,
                     const Eigen::VectorXd& action);

/// rho(s,a) and its parameter gradient; the pair input is concat(state, action).
Eval eval_dual(const ParamFunction& f, const Eigen::VectorXd& state,
               const Eigen::VectorXd& action);

/// Feature vector the dual is linear in, phi(concat(state, action)).
Eigen::VectorXd dual_features(const ParamFunction& f, const Eigen::VectorXd& state,
                              const Eigen::VectorXd& action);
Eigen::VectorXd dual_features_input(const ParamFunction& f, const Eigen::VectorXd& input);

/// Per-action logits of a discrete policy at one state.
Eigen::VectorXd policy_logits(const ParamFunction& f, const Eigen::VectorXd& state);

/// Draw an action from the policy; discrete policies return a 1-dim index vector.
Eigen::VectorXd sample_action(const ParamFunction& f, const Eigen::VectorXd& state, Rng& rng);

/// Differential entropy of a Gaussian policy (state-independent).
double gaussian_entropy(const ParamFunction& f);

struct GradProbe {
    Eigen::VectorXd state;
    Eigen::VectorXd action;  // ignored for value functions
};

/// Worst relative error between analytic and central-difference gradients over
/// the probes, with denominator max(1, |analytic|). Reports, never throws.
double grad_check(const ParamFunction& f, const std::vector<GradProbe>& probes,
                  double eps = 1e-5);

nlohmann::json param_function_to_json(const ParamFunction& f);
ParamFunction param_function_from_json(const nlohmann::json& j);

}  // namespace sdec
