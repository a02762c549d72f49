#include "sdec/prox.hpp"

#include <cmath>

#include "sdec/bellman.hpp"

namespace sdec {

Eigen::VectorXd prox_euclidean(const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                               double step) {
    if (z.size() != g.size()) throw ShapeMismatch("prox_euclidean: shape mismatch");
    if (!(step > 0.0)) throw BadParams("prox step must be positive");
    return z - step * g;
}

Eigen::VectorXd prox_kl_simplex(const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                                double step) {
    if (z.size() != g.size()) throw ShapeMismatch("prox_kl_simplex: shape mismatch");
    if (!(step > 0.0)) throw BadParams("prox step must be positive");
    if (std::abs(z.sum() - 1.0) > 1e-9 || (z.array() < 0.0).any())
        throw NotADistribution("prox_kl_simplex input is not a distribution");
    if ((z.array() <= 0.0).any())
        throw ZeroEntry("prox_kl_simplex needs strictly positive entries");
    Eigen::VectorXd logw = z.array().log() - step * g.array();
    logw.array() -= logw.maxCoeff();
    Eigen::VectorXd w = logw.array().exp();
    return w / w.sum();
}

double policy_kl(const ParamFunction& pi_new, const ParamFunction& pi_old,
                 const std::vector<Eigen::VectorXd>& batch_states, Eigen::VectorXd* grad) {
    if (batch_states.empty()) throw EmptyBatch("policy_kl needs at least one state");
    if (pi_new.kind != pi_old.kind) throw KindMismatch("policy_kl: mismatched policy kinds");
    double kl = 0.0;
    if (grad) *grad = Eigen::VectorXd::Zero(pi_new.n_params());

    if (pi_new.kind == FunctionKind::log_policy_discrete) {
        const int fdim = pi_new.features.output_dim();
        for (const auto& s : batch_states) {
            Eigen::VectorXd phi = pi_new.features(s);
            Eigen::VectorXd z_new = pi_new.weight_matrix() * phi;
            Eigen::VectorXd z_old = pi_old.weight_matrix() * pi_old.features(s);
            double lse_new = log_sum_exp(z_new);
            double lse_old = log_sum_exp(z_old);
            Eigen::VectorXd log_p = z_new.array() - lse_new;
            Eigen::VectorXd log_q = z_old.array() - lse_old;
            Eigen::VectorXd p = log_p.array().exp();
            double kl_s = p.dot(log_p - log_q);
            kl += kl_s;
            if (grad) {
                // d KL / d z_b = p_b ((log p_b - log q_b) - KL)
                for (int b = 0; b < pi_new.n_actions; ++b) {
                    double coef = p[b] * ((log_p[b] - log_q[b]) - kl_s);
                    if (coef != 0.0)
                        grad->segment(static_cast<long>(b) * fdim, fdim).noalias() +=
                            coef * phi;
                }
            }
        }
    } else if (pi_new.kind == FunctionKind::log_policy_gaussian) {
        const int fdim = pi_new.features.output_dim();
        const int adim = pi_new.action_dim;
        Eigen::VectorXd ls_new_raw = pi_new.params.tail(adim);
        Eigen::VectorXd ls_new = pi_new.log_std();
        Eigen::VectorXd ls_old = pi_old.log_std();
        Eigen::VectorXd var_new = (2.0 * ls_new.array()).exp();
        Eigen::VectorXd var_old = (2.0 * ls_old.array()).exp();
        for (const auto& s : batch_states) {
            Eigen::VectorXd phi = pi_new.features(s);
            Eigen::VectorXd mu_new = pi_new.weight_matrix() * phi;
            Eigen::VectorXd mu_old = pi_old.weight_matrix() * pi_old.features(s);
            for (int i = 0; i < adim; ++i) {
                double dmu = mu_new[i] - mu_old[i];
                kl += ls_old[i] - ls_new[i] +
                      (var_new[i] + dmu * dmu) / (2.0 * var_old[i]) - 0.5;
                if (grad) {
                    grad->segment(static_cast<long>(i) * fdim, fdim).noalias() +=
                        (dmu / var_old[i]) * phi;
                    bool interior = ls_new_raw[i] > ParamFunction::kLogStdMin &&
                                    ls_new_raw[i] < ParamFunction::kLogStdMax;
                    if (interior)
                        (*grad)[static_cast<long>(adim) * fdim + i] +=
                            var_new[i] / var_old[i] - 1.0;
                }
            }
        }
    } else {
        throw KindMismatch("policy_kl: not a policy function");
    }
    double n = static_cast<double>(batch_states.size());
    kl /= n;
    if (grad) *grad /= n;
    return kl;
}

KlProxResult prox_kl_penalized(const ParamFunction& pi_old, const Eigen::VectorXd& g,
                               double step, int inner_iters,
                               const std::vector<Eigen::VectorXd>& batch_states) {
    if (g.size() != pi_old.params.size())
        throw ShapeMismatch("prox_kl_penalized: gradient shape mismatch");
    if (!(step > 0.0)) throw BadParams("prox step must be positive");
    if (inner_iters < 1) throw BadParams("prox_kl_penalized needs inner_iters >= 1");

    ParamFunction pi = pi_old;
    auto objective = [&](const ParamFunction& cand, Eigen::VectorXd* grad_out) {
        Eigen::VectorXd kl_grad;
        double kl = policy_kl(cand, pi_old, batch_states, grad_out ? &kl_grad : nullptr);
        if (grad_out) *grad_out = g + kl_grad / step;
        return g.dot(cand.params) + kl / step;
    };

    double best = objective(pi, nullptr);
    double trial_step = step;  // natural scale: the KL term has curvature 1/step
    for (int it = 0; it < inner_iters; ++it) {
        Eigen::VectorXd grad;
        objective(pi, &grad);
        // backtracking on the penalized objective
        bool moved = false;
        double alpha = trial_step;
        for (int bt = 0; bt < 40; ++bt) {
            ParamFunction cand = pi;
            cand.params = pi.params - alpha * grad;
            double val = objective(cand, nullptr);
            if (val <= best) {
                pi = std::move(cand);
                best = val;
                moved = true;
                trial_step = alpha * 2.0;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
            if (grad.lpNorm<Eigen::Infinity>() > 1e-6 * scale)
                throw DivergedInnerSolve(
                    "penalized KL prox could not decrease the objective");
            break;  // stationary to line-search resolution
        }
    }
    KlProxResult out;
    out.kl = policy_kl(pi, pi_old, batch_states, nullptr);
    out.params = std::move(pi.params);
    return out;
}

double stepsize(long long j, double zeta0) {
    if (j < 1) throw BadIteration("stepsize index must be >= 1");
    if (!(zeta0 > 0.0)) throw BadParams("zeta0 must be positive");
    return zeta0 / static_cast<double>(j);
}

StepSchedule::Law StepSchedule::parse_law(const std::string& name) {
    if (name == "one_over_j") return Law::one_over_j;
    if (name == "constant") return Law::constant;
    throw InvalidValue("unknown stepsize decay law '" + name + "'");
}

}  // namespace sdec
