#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdec {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

nlohmann::json check_results_to_json(const std::vector<CheckResult>& results);
bool all_pass(const std::vector<CheckResult>& results);

/// Contraction of the smoothed backup on random MDPs and random value pairs:
/// |T~V1 - T~V2|_inf <= gamma |V1 - V2|_inf must hold with zero violations.
std::vector<CheckResult> check_contraction(int n_seeds, std::uint64_t seed,
                                           int n_states = 20, int n_actions = 4,
                                           double gamma = 0.9);

/// Smoothing bias bound, its monotonicity in lambda, and vanishing at small
/// lambda relative to larger lambda.
std::vector<CheckResult> check_bias(int n_mdps, std::uint64_t seed, int n_states = 20,
                                    int n_actions = 4, double gamma = 0.9);

/// Zero temporal-consistency residual at the tabular optimum; nonzero residual
/// after a 0.1 value perturbation.
std::vector<CheckResult> check_consistency(std::uint64_t seed, int n_mdps = 5);

/// Exact variance-cancellation identity f~ = f + Var[gamma V(s')] plus the
/// closed-form dual maximizer attaining the variance.
std::vector<CheckResult> check_variance(int n_mdps, std::uint64_t seed);

/// Gradient estimators averaged over the fully enumerated transition
/// distribution vs central differences of L_eta at the fitted dual, for
/// eta in {0, 0.5, 1}. inject_fault corrupts one estimator coordinate to show
/// the check catches broken gradients.
std::vector<CheckResult> check_gradients(std::uint64_t seed, bool inject_fault = false);

/// Multi-step and eligibility-trace reductions and the worked mixtures.
std::vector<CheckResult> check_reductions(std::uint64_t seed);

/// Dispatch by selector: all | contraction | bias | consistency | variance |
/// gradients | reductions.
std::vector<CheckResult> run_checks(const std::string& selector, std::uint64_t seed,
                                    int n_seeds = 100, bool inject_fault = false);

}  // namespace sdec
