#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sdec/param_function.hpp"

namespace sdec {

/// Mirror-descent step under the Euclidean divergence: w = z - step * g.
Eigen::VectorXd prox_euclidean(const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                               double step);

/// Mirror-descent step on the simplex under KL: w_i proportional to
/// z_i * exp(-step * g_i), computed with a subtract-max shift.
Eigen::VectorXd prox_kl_simplex(const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                                double step);

struct KlProxResult {
    Eigen::VectorXd params;
    double kl = 0.0;  // batch-estimated KL(pi_new || pi_old) at the returned params
};

/// Penalized KL prox for parametric policies: approximately solves
///   min_w  <w, g> + (1/step) KL^(pi_w || pi_old)
/// by `inner_iters` gradient steps with backtracking, where KL^ is averaged
/// over the batch states.
KlProxResult prox_kl_penalized(const ParamFunction& pi_old, const Eigen::VectorXd& g,
                               double step, int inner_iters,
                               const std::vector<Eigen::VectorXd>& batch_states);

/// Batch-averaged KL(pi_new || pi_old) and its gradient w.r.t. pi_new's params.
double policy_kl(const ParamFunction& pi_new, const ParamFunction& pi_old,
                 const std::vector<Eigen::VectorXd>& batch_states,
                 Eigen::VectorXd* grad = nullptr);

/// zeta_j = zeta0 / j for j >= 1.
double stepsize(long long j, double zeta0);

/// Stepsize law behind Algorithm-style O(1/j) decay or the constant stepsize
/// of the convergence analysis.
struct StepSchedule {
    enum class Law { one_over_j, constant };
    Law law = Law::one_over_j;
    double zeta0 = 0.01;

    double at(long long j) const {
        return law == Law::constant ? zeta0 : stepsize(j, zeta0);
    }
    static Law parse_law(const std::string& name);
};

}  // namespace sdec
