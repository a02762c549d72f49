#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sdec/bellman.hpp"
#include "sdec/mdp.hpp"
#include "sdec/param_function.hpp"

namespace sdec {

/// Primal/dual functions and weights of the saddle objective
///   L_eta(V, pi; rho) = E[(delta - V(s))^2] - eta * E[(delta - rho(s,a))^2],
///   delta(s,a,s') = r + gamma * V(s') - lambda * log pi(a|s).
struct SaddleState {
    ParamFunction v;
    ParamFunction pi;
    ParamFunction rho;
    double lambda = 0.01;
    double eta = 1.0;
    double gamma = 0.9;
};

/// delta for one sampled transition. lambda = 0 is a diagnostic mode that
/// skips the policy term entirely.
double delta_one_step(const SaddleState& state, const Transition& t);

/// Exact mean-square consistency error f(V, pi) by full enumeration: the
/// expectation over s' sits inside the square. Outer weighting uniform over
/// (s,a) unless `weights` is given (normalized internally).
double consistency_loss_exact(const TabularMdp& mdp, const TabularValue& v,
                              const TabularPolicy& pi, double lambda,
                              const Eigen::MatrixXd* weights = nullptr);

/// Surrogate upper bound f~(V, pi): the expectation over s' moved outside the
/// square.
double surrogate_loss_exact(const TabularMdp& mdp, const TabularValue& v,
                            const TabularPolicy& pi, double lambda,
                            const Eigen::MatrixXd* weights = nullptr);

struct VarianceIdentity {
    double consistency_loss = 0.0;  // f
    double surrogate_loss = 0.0;    // f~
    double variance_term = 0.0;     // E_{s,a} Var_{s'|s,a}[gamma V(s')]
    double defect = 0.0;            // |f~ - f - variance_term|
    double dual_maximizer_gap = 0.0;  // |E[(delta - rho*)^2] - variance_term|
};

/// Checks f~ = f + Var[gamma V(s')] exactly, and that the closed-form dual
/// maximizer rho*(s,a) = R + gamma E[V(s')] - lambda log pi attains it.
VarianceIdentity variance_identity_check(const TabularMdp& mdp, const TabularValue& v,
                                         const TabularPolicy& pi, double lambda,
                                         const Eigen::MatrixXd* weights = nullptr);

struct ObjectiveTerms {
    double first_term = 0.0;   // mean (delta - V(s))^2
    double second_term = 0.0;  // mean (delta - rho(s,a))^2
    double objective(double eta) const { return first_term - eta * second_term; }
};

ObjectiveTerms saddle_objective_terms(const SaddleState& state,
                                      const std::vector<Transition>& batch,
                                      const std::vector<double>& weights = {});

/// Batch estimate of L_eta; eta = 1 is the full saddle objective, eta = 0 the
/// surrogate.
double saddle_objective_eta(const SaddleState& state, const std::vector<Transition>& batch,
                            const std::vector<double>& weights = {});

struct DualFitResult {
    Eigen::VectorXd params;
    double loss = 0.0;  // weighted mean squared dual residual after the fit
};

/// Exact ridge least squares for the dual subproblem
///   min_rho E[(delta - rho(s,a))^2]
/// on the batch; updates state.rho in place. For tabular duals this yields
/// per-(s,a) sample means of delta. ridge = 0 raises SingularSystem on
/// rank-deficient batches.
DualFitResult fit_dual(SaddleState& state, const std::vector<Transition>& batch,
                       const std::vector<double>& weights = {}, double ridge = 1e-8);

/// SGD fallback for duals that are not linear in trainable features.
DualFitResult fit_dual_sgd(SaddleState& state, const std::vector<Transition>& batch,
                           int iterations, double step,
                           const std::vector<double>& weights = {});

/// Batch-mean gradient of L_eta w.r.t. the value parameters at a fixed dual:
///   mean 2 (delta - V(s)) (gamma grad V(s') - grad V(s))
///      - 2 eta gamma (delta - rho(s,a)) grad V(s').
/// Unbiased for the gradient of max_rho L_eta when rho was freshly fitted.
Eigen::VectorXd grad_V_estimator(const SaddleState& state,
                                 const std::vector<Transition>& batch,
                                 const std::vector<double>& weights = {});

/// Batch-mean gradient w.r.t. the policy parameters:
///   mean -2 lambda ((1-eta) delta + eta rho(s,a) - V(s)) grad log pi(a|s).
Eigen::VectorXd grad_pi_estimator(const SaddleState& state,
                                  const std::vector<Transition>& batch,
                                  const std::vector<double>& weights = {});

/// Debugging aid: per-sample deltas as CSV (s, a, r, s_next, delta,
/// delta_minus_v, delta_minus_rho), one row per batch item.
void dump_deltas_csv(const SaddleState& state, const std::vector<Transition>& batch,
                     const std::string& path);

/// Multi-step consistency delta over a stored sub-trajectory:
///   sum_{t=0..T} gamma^t (r_t - lambda log pi(a_t|s_t)) + gamma^{T+1} V(s_{T+1}).
double delta_multi_step(const SaddleState& state, const Trajectory& segment, int T);

/// Truncated eligibility-trace delta: geometric (1-zeta) zeta^T mixture of the
/// multi-step deltas for T = 0..T_max, weights renormalized to sum to one.
double delta_trace(const SaddleState& state, const Trajectory& trajectory, double zeta,
                   int T_max);

/// Selects the segment objective: zeta = 0 is the plain T-step delta, zeta > 0
/// the trace mixture truncated at T.
struct SegmentMode {
    int T = 0;
    double zeta = 0.0;
};

/// Dual input for a segment: concat(s_0, a_0, ..., a_T).
Eigen::VectorXd segment_dual_input(const Trajectory& segment, int T);

double segment_delta(const SaddleState& state, const Trajectory& segment,
                     const SegmentMode& mode);

ObjectiveTerms saddle_objective_terms_segments(const SaddleState& state,
                                               const std::vector<Trajectory>& segments,
                                               const SegmentMode& mode,
                                               const std::vector<double>& weights = {});

DualFitResult fit_dual_segments(SaddleState& state, const std::vector<Trajectory>& segments,
                                const SegmentMode& mode,
                                const std::vector<double>& weights = {}, double ridge = 1e-8);

Eigen::VectorXd grad_V_estimator_segments(const SaddleState& state,
                                          const std::vector<Trajectory>& segments,
                                          const SegmentMode& mode,
                                          const std::vector<double>& weights = {});

Eigen::VectorXd grad_pi_estimator_segments(const SaddleState& state,
                                           const std::vector<Trajectory>& segments,
                                           const SegmentMode& mode,
                                           const std::vector<double>& weights = {});

}  // namespace sdec
