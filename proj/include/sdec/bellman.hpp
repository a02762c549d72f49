#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sdec/mdp.hpp"

namespace sdec {

using TabularValue = Eigen::VectorXd;

/// Row-stochastic action distribution per state.
struct TabularPolicy {
    Eigen::MatrixXd probs;  // n_states x n_actions

    int n_states() const { return static_cast<int>(probs.rows()); }
    int n_actions() const { return static_cast<int>(probs.cols()); }
};

/// Q(s,a) = R(s,a) + gamma * E_{s'|s,a}[V(s')].
Eigen::MatrixXd q_values(const TabularMdp& mdp, const TabularValue& v);

/// Hard Bellman optimality backup: (T V)(s) = max_a Q(s,a).
TabularValue bellman_apply(const TabularMdp& mdp, const TabularValue& v);

/// Entropy-smoothed backup: (T~ V)(s) = lambda * log sum_a exp(Q(s,a)/lambda),
/// computed with a subtract-max shift.
TabularValue smoothed_bellman_apply(const TabularMdp& mdp, const TabularValue& v,
                                    double lambda);

struct FixedPointResult {
    TabularValue v;
    int iterations = 0;
    double residual = 0.0;  // sup-norm of T V - V at exit
};

/// Iterate the (smoothed) backup to a sup-norm fixed point. lambda = 0 selects
/// the hard-max operator. Plain iteration, run until the backup residual drops
/// below tol * (1 - gamma) so the result lies within tol of the unique fixed
/// point regardless of the initial guess.
FixedPointResult solve_fixed_point(const TabularMdp& mdp, double lambda, double tol = 1e-10,
                                   long long max_iter = 1'000'000,
                                   const TabularValue* init = nullptr);

/// Softmax of Q(s,.)/lambda per state: the policy attaining the smoothed backup.
TabularPolicy smoothed_optimal_policy(const TabularMdp& mdp, const TabularValue& v,
                                      double lambda);

/// Per-state argmax of Q(s,.); ties broken toward the lowest action index.
std::vector<int> greedy_policy(const TabularMdp& mdp, const TabularValue& v);

struct ResidualResult {
    Eigen::MatrixXd table;  // n_states x n_actions
    double max_abs = 0.0;
};

/// Temporal-consistency residual
///   residual(s,a) = R(s,a) + gamma E[V(s')] - lambda log pi(a|s) - V(s),
/// zero for every (s,a) exactly at the smoothed optimum.
ResidualResult consistency_residual(const TabularMdp& mdp, const TabularValue& v,
                                    const TabularPolicy& pi, double lambda);

/// Upper bound gamma * lambda * max_entropy / (1 - gamma) on |V* - V~*|_inf.
/// Discrete action sets pass max_entropy = log |A|.
double smoothing_bias_bound(double gamma, double lambda, double max_entropy);

/// log sum_i exp(x_i) with subtract-max shift.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Exact policy evaluation: solve (I - gamma P_pi) v = r_pi.
TabularValue policy_evaluation(const TabularMdp& mdp, const TabularPolicy& pi);

/// State-transition matrix P_pi(s'|s) induced by a policy.
Eigen::MatrixXd induced_chain(const TabularMdp& mdp, const TabularPolicy& pi);

}  // namespace sdec
