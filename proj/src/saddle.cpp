#include "sdec/saddle.hpp"

#include <cmath>
#include <fstream>

namespace sdec {

namespace {

double log_pi_at(const SaddleState& state, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    double lp = eval_log_policy(state.pi, s, a).value;
    if (!std::isfinite(lp))
        throw ZeroPolicyProbability("log pi(a|s) is not finite at a sampled pair");
    return lp;
}

void check_batch(std::size_t n, const std::vector<double>& weights) {
    if (n == 0) throw EmptyBatch("batch must be non-empty");
    if (!weights.empty() && weights.size() != n)
        throw ShapeMismatch("weights length does not match the batch");
}

double weight_at(const std::vector<double>& weights, std::size_t i) {
    return weights.empty() ? 1.0 : weights[i];
}

// Residual table R + gamma P V - lambda log pi - V(s), shared by the exact losses.
Eigen::MatrixXd exact_residual_table(const TabularMdp& mdp, const TabularValue& v,
                                     const TabularPolicy& pi, double lambda) {
    if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions)
        throw ShapeMismatch("policy table shape does not match the MDP");
    Eigen::MatrixXd q = q_values(mdp, v);
    Eigen::MatrixXd res(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            double p = pi.probs(s, a);
            if (!(p > 0.0)) throw ZeroPolicyProbability("pi(a|s) = 0 in exact loss");
            res(s, a) = q(s, a) - lambda * std::log(p) - v[s];
        }
    return res;
}

Eigen::MatrixXd outer_weights(const TabularMdp& mdp, const Eigen::MatrixXd* weights) {
    if (!weights)
        return Eigen::MatrixXd::Constant(mdp.n_states, mdp.n_actions,
                                         1.0 / (mdp.n_states * mdp.n_actions));
    if (weights->rows() != mdp.n_states || weights->cols() != mdp.n_actions)
        throw ShapeMismatch("weight table shape does not match the MDP");
    double total = weights->sum();
    if (!(total > 0.0)) throw BadParams("weights must have positive mass");
    return *weights / total;
}

}  // namespace

double delta_one_step(const SaddleState& state, const Transition& t) {
    double value_next = eval_value(state.v, t.s_next).value;
    double lp = state.lambda == 0.0 ? 0.0 : log_pi_at(state, t.s, t.a);
    return t.r + state.gamma * value_next - state.lambda * lp;
}

double consistency_loss_exact(const TabularMdp& mdp, const TabularValue& v,
                              const TabularPolicy& pi, double lambda,
                              const Eigen::MatrixXd* weights) {
    Eigen::MatrixXd res = exact_residual_table(mdp, v, pi, lambda);
    Eigen::MatrixXd w = outer_weights(mdp, weights);
    return (w.array() * res.array().square()).sum();
}

double surrogate_loss_exact(const TabularMdp& mdp, const TabularValue& v,
                            const TabularPolicy& pi, double lambda,
                            const Eigen::MatrixXd* weights) {
    Eigen::MatrixXd res = exact_residual_table(mdp, v, pi, lambda);
    Eigen::MatrixXd w = outer_weights(mdp, weights);
    // (delta - V(s))^2 averaged over s': residual plus the per-(s,a) deviation
    // gamma (V(s') - E[V']) whose square integrates to the conditional variance.
    double total = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            double mean_next = mdp.transition[a].row(s).dot(v);
            double acc = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                double p = mdp.prob(s, a, s2);
                if (p == 0.0) continue;
                double dev = mdp.gamma * (v[s2] - mean_next);
                acc += p * (res(s, a) + dev) * (res(s, a) + dev);
            }
            total += w(s, a) * acc;
        }
    return total;
}

VarianceIdentity variance_identity_check(const TabularMdp& mdp, const TabularValue& v,
                                         const TabularPolicy& pi, double lambda,
                                         const Eigen::MatrixXd* weights) {
    VarianceIdentity out;
    out.consistency_loss = consistency_loss_exact(mdp, v, pi, lambda, weights);
    out.surrogate_loss = surrogate_loss_exact(mdp, v, pi, lambda, weights);
    Eigen::MatrixXd w = outer_weights(mdp, weights);
    double var = 0.0;
    double dual_attained = 0.0;  // E[(delta - rho*)^2] at the closed-form maximizer
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            double mean_next = mdp.transition[a].row(s).dot(v);
            double acc = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                double p = mdp.prob(s, a, s2);
                if (p == 0.0) continue;
                double dev = mdp.gamma * (v[s2] - mean_next);
                acc += p * dev * dev;
            }
            var += w(s, a) * acc;
            // delta - rho* = gamma (V(s') - E[V']): same second moment
            dual_attained += w(s, a) * acc;
        }
    out.variance_term = var;
    out.defect = std::abs(out.surrogate_loss - out.consistency_loss - out.variance_term);
    out.dual_maximizer_gap = std::abs(dual_attained - out.variance_term);
    return out;
}

ObjectiveTerms saddle_objective_terms(const SaddleState& state,
                                      const std::vector<Transition>& batch,
                                      const std::vector<double>& weights) {
    check_batch(batch.size(), weights);
    double first = 0.0, second = 0.0, total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = batch[i];
        double wi = weight_at(weights, i);
        double delta = delta_one_step(state, t);
        double vs = eval_value(state.v, t.s).value;
        double rho = eval_dual(state.rho, t.s, t.a).value;
        first += wi * (delta - vs) * (delta - vs);
        second += wi * (delta - rho) * (delta - rho);
        total += wi;
    }
    return {first / total, second / total};
}

double saddle_objective_eta(const SaddleState& state, const std::vector<Transition>& batch,
                            const std::vector<double>& weights) {
    return saddle_objective_terms(state, batch, weights).objective(state.eta);
}

namespace {

DualFitResult fit_dual_features(SaddleState& state, const std::vector<Eigen::VectorXd>& phis,
                                const std::vector<double>& deltas,
                                const std::vector<double>& weights, double ridge) {
    const int n = state.rho.n_params();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    double total = 0.0;
    for (std::size_t i = 0; i < phis.size(); ++i) {
        double wi = weight_at(weights, i);
        a.selfadjointView<Eigen::Lower>().rankUpdate(phis[i], wi);
        b.noalias() += wi * deltas[i] * phis[i];
        total += wi;
    }
    a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
    if (ridge > 0.0) {
        a.diagonal().array() += ridge;
    } else {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (lu.rank() < n)
            throw SingularSystem("dual normal equations are rank-deficient with ridge 0");
    }
    Eigen::VectorXd sol = a.ldlt().solve(b);
    if (!sol.allFinite()) throw SingularSystem("dual normal equations produced non-finite solution");
    state.rho.params = sol;
    double loss = 0.0;
    for (std::size_t i = 0; i < phis.size(); ++i) {
        double r = deltas[i] - sol.dot(phis[i]);
        loss += weight_at(weights, i) * r * r;
    }
    return {sol, loss / total};
}

}  // namespace

DualFitResult fit_dual(SaddleState& state, const std::vector<Transition>& batch,
                       const std::vector<double>& weights, double ridge) {
    check_batch(batch.size(), weights);
    std::vector<Eigen::VectorXd> phis;
    std::vector<double> deltas;
    phis.reserve(batch.size());
    deltas.reserve(batch.size());
    for (const Transition& t : batch) {
        phis.push_back(dual_features(state.rho, t.s, t.a));
        deltas.push_back(delta_one_step(state, t));
    }
    return fit_dual_features(state, phis, deltas, weights, ridge);
}

DualFitResult fit_dual_sgd(SaddleState& state, const std::vector<Transition>& batch,
                           int iterations, double step, const std::vector<double>& weights) {
    check_batch(batch.size(), weights);
    if (iterations < 1) throw BadParams("fit_dual_sgd needs at least one iteration");
    std::vector<double> deltas;
    deltas.reserve(batch.size());
    for (const Transition& t : batch) deltas.push_back(delta_one_step(state, t));
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) total += weight_at(weights, i);
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.rho.n_params());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Eval e = eval_dual(state.rho, batch[i].s, batch[i].a);
            grad.noalias() +=
                weight_at(weights, i) * 2.0 * (e.value - deltas[i]) * e.grad;
        }
        state.rho.params -= (step / total) * grad;
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double r = deltas[i] - eval_dual(state.rho, batch[i].s, batch[i].a).value;
        loss += weight_at(weights, i) * r * r;
    }
    return {state.rho.params, loss / total};
}

Eigen::VectorXd grad_V_estimator(const SaddleState& state, const std::vector<Transition>& batch,
                                 const std::vector<double>& weights) {
    check_batch(batch.size(), weights);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.v.n_params());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = batch[i];
        double wi = weight_at(weights, i);
        Eval vs = eval_value(state.v, t.s);
        Eval vn = eval_value(state.v, t.s_next);
        double lp = state.lambda == 0.0 ? 0.0 : log_pi_at(state, t.s, t.a);
        double delta = t.r + state.gamma * vn.value - state.lambda * lp;
        double rho = eval_dual(state.rho, t.s, t.a).value;
        grad.noalias() += wi * 2.0 * (delta - vs.value) * (state.gamma * vn.grad - vs.grad);
        grad.noalias() -= wi * 2.0 * state.eta * state.gamma * (delta - rho) * vn.grad;
        total += wi;
    }
    return grad / total;
}

Eigen::VectorXd grad_pi_estimator(const SaddleState& state, const std::vector<Transition>& batch,
                                  const std::vector<double>& weights) {
    check_batch(batch.size(), weights);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.pi.n_params());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = batch[i];
        double wi = weight_at(weights, i);
        Eval lp = eval_log_policy(state.pi, t.s, t.a);
        if (!std::isfinite(lp.value))
            throw ZeroPolicyProbability("log pi(a|s) is not finite at a sampled pair");
        double vn = eval_value(state.v, t.s_next).value;
        double vs = eval_value(state.v, t.s).value;
        double delta = t.r + state.gamma * vn - state.lambda * lp.value;
        double rho = eval_dual(state.rho, t.s, t.a).value;
        double coef = (1.0 - state.eta) * delta + state.eta * rho - vs;
        grad.noalias() -= wi * 2.0 * state.lambda * coef * lp.grad;
        total += wi;
    }
    return grad / total;
}

void dump_deltas_csv(const SaddleState& state, const std::vector<Transition>& batch,
                     const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    auto vec_field = [](const Eigen::VectorXd& v) {
        std::string out;
        for (int i = 0; i < v.size(); ++i) {
            if (i) out += ' ';
            out += std::to_string(v[i]);
        }
        return out;
    };
    f << "s,a,r,s_next,delta,delta_minus_v,delta_minus_rho\n";
    for (const Transition& t : batch) {
        double delta = delta_one_step(state, t);
        double vs = eval_value(state.v, t.s).value;
        double rho = eval_dual(state.rho, t.s, t.a).value;
        f << vec_field(t.s) << ',' << vec_field(t.a) << ',' << t.r << ','
          << vec_field(t.s_next) << ',' << delta << ',' << (delta - vs) << ','
          << (delta - rho) << '\n';
    }
    if (!f) throw IoError("failed writing '" + path + "'");
}

// -- multi-step and eligibility-trace ------------------------------------------------

double delta_multi_step(const SaddleState& state, const Trajectory& segment, int T) {
    if (T < 0) throw BadParams("multi-step T must be >= 0");
    if (segment.size() < static_cast<std::size_t>(T) + 1)
        throw SegmentTooShort("segment holds " + std::to_string(segment.size()) +
                              " transitions, need " + std::to_string(T + 1));
    double acc = 0.0;
    double discount = 1.0;
    for (int t = 0; t <= T; ++t) {
        const Transition& tr = segment.steps[t];
        double lp = state.lambda == 0.0 ? 0.0 : log_pi_at(state, tr.s, tr.a);
        acc += discount * (tr.r - state.lambda * lp);
        discount *= state.gamma;
    }
    acc += discount * eval_value(state.v, segment.steps[T].s_next).value;
    return acc;
}

namespace {

std::vector<double> trace_weights(double zeta, int t_max) {
    if (zeta < 0.0 || zeta >= 1.0)
        throw ZetaOutOfRange("trace decay must lie in [0, 1), got " + std::to_string(zeta));
    std::vector<double> w(t_max + 1);
    if (zeta == 0.0) {
        w[0] = 1.0;
        return w;
    }
    double mass = 1.0 - std::pow(zeta, t_max + 1);
    double cur = (1.0 - zeta) / mass;
    for (int t = 0; t <= t_max; ++t) {
        w[t] = cur;
        cur *= zeta;
    }
    return w;
}

}  // namespace

double delta_trace(const SaddleState& state, const Trajectory& trajectory, double zeta,
                   int T_max) {
    if (T_max < 0) throw BadParams("trace horizon must be >= 0");
    std::vector<double> w = trace_weights(zeta, T_max);
    if (trajectory.size() < static_cast<std::size_t>(T_max) + 1)
        throw TrajectoryTooShort("trajectory holds " + std::to_string(trajectory.size()) +
                                 " transitions, need " + std::to_string(T_max + 1));
    double acc = 0.0;
    for (int T = 0; T <= T_max; ++T)
        if (w[T] != 0.0) acc += w[T] * delta_multi_step(state, trajectory, T);
    return acc;
}

Eigen::VectorXd segment_dual_input(const Trajectory& segment, int T) {
    if (segment.size() < static_cast<std::size_t>(T) + 1)
        throw SegmentTooShort("segment too short for the dual input");
    const Eigen::VectorXd& s0 = segment.steps[0].s;
    long adim = segment.steps[0].a.size();
    Eigen::VectorXd input(s0.size() + adim * (T + 1));
    input.head(s0.size()) = s0;
    for (int t = 0; t <= T; ++t)
        input.segment(s0.size() + adim * t, adim) = segment.steps[t].a;
    return input;
}

double segment_delta(const SaddleState& state, const Trajectory& segment,
                     const SegmentMode& mode) {
    return mode.zeta > 0.0 ? delta_trace(state, segment, mode.zeta, mode.T)
                           : delta_multi_step(state, segment, mode.T);
}

namespace {

struct SegmentEval {
    double delta = 0.0;
    double v0 = 0.0;
    double rho = 0.0;
    Eigen::VectorXd grad_v0;       // grad V(s_0)
    Eigen::VectorXd grad_v_tail;   // grad of the bootstrapped tail of delta
    Eigen::VectorXd grad_pi_part;  // grad_pi of delta (the -lambda sum of log pi grads)
};

SegmentEval eval_segment(const SaddleState& state, const Trajectory& segment,
                         const SegmentMode& mode, bool need_v_grad, bool need_pi_grad) {
    std::vector<double> mix = mode.zeta > 0.0 ? trace_weights(mode.zeta, mode.T)
                                              : std::vector<double>{};
    if (mode.zeta == 0.0) {
        mix.assign(mode.T + 1, 0.0);
        mix[mode.T] = 1.0;
    }
    if (segment.size() < static_cast<std::size_t>(mode.T) + 1)
        throw SegmentTooShort("segment too short for the configured objective");

    SegmentEval out;
    Eval v0 = eval_value(state.v, segment.steps[0].s);
    out.v0 = v0.value;
    if (need_v_grad) {
        out.grad_v0 = v0.grad;
        out.grad_v_tail = Eigen::VectorXd::Zero(state.v.n_params());
    }
    if (need_pi_grad) out.grad_pi_part = Eigen::VectorXd::Zero(state.pi.n_params());

    // suffix mixture mass: c_t = sum_{T >= t} mix[T]
    std::vector<double> suffix(mode.T + 2, 0.0);
    for (int t = mode.T; t >= 0; --t) suffix[t] = suffix[t + 1] + mix[t];

    double acc = 0.0;
    double discount = 1.0;
    for (int t = 0; t <= mode.T; ++t) {
        const Transition& tr = segment.steps[t];
        double lp = 0.0;
        if (state.lambda != 0.0) {
            Eval e = eval_log_policy(state.pi, tr.s, tr.a);
            if (!std::isfinite(e.value))
                throw ZeroPolicyProbability("log pi(a|s) is not finite in a segment");
            lp = e.value;
            if (need_pi_grad)
                out.grad_pi_part.noalias() -=
                    state.lambda * discount * suffix[t] * e.grad;
        }
        acc += discount * suffix[t] * (tr.r - state.lambda * lp);
        discount *= state.gamma;
        if (mix[t] != 0.0) {
            Eval vt = eval_value(state.v, segment.steps[t].s_next);
            acc += discount * mix[t] * vt.value;
            if (need_v_grad) out.grad_v_tail.noalias() += discount * mix[t] * vt.grad;
        }
    }
    out.delta = acc;
    out.rho = state.rho.params.dot(
        dual_features_input(state.rho, segment_dual_input(segment, mode.T)));
    return out;
}

}  // namespace

ObjectiveTerms saddle_objective_terms_segments(const SaddleState& state,
                                               const std::vector<Trajectory>& segments,
                                               const SegmentMode& mode,
                                               const std::vector<double>& weights) {
    check_batch(segments.size(), weights);
    double first = 0.0, second = 0.0, total = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        SegmentEval e = eval_segment(state, segments[i], mode, false, false);
        double wi = weight_at(weights, i);
        first += wi * (e.delta - e.v0) * (e.delta - e.v0);
        second += wi * (e.delta - e.rho) * (e.delta - e.rho);
        total += wi;
    }
    return {first / total, second / total};
}

DualFitResult fit_dual_segments(SaddleState& state, const std::vector<Trajectory>& segments,
                                const SegmentMode& mode, const std::vector<double>& weights,
                                double ridge) {
    check_batch(segments.size(), weights);
    std::vector<Eigen::VectorXd> phis;
    std::vector<double> deltas;
    phis.reserve(segments.size());
    deltas.reserve(segments.size());
    for (const Trajectory& seg : segments) {
        phis.push_back(dual_features_input(state.rho, segment_dual_input(seg, mode.T)));
        deltas.push_back(segment_delta(state, seg, mode));
    }
    return fit_dual_features(state, phis, deltas, weights, ridge);
}

Eigen::VectorXd grad_V_estimator_segments(const SaddleState& state,
                                          const std::vector<Trajectory>& segments,
                                          const SegmentMode& mode,
                                          const std::vector<double>& weights) {
    check_batch(segments.size(), weights);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.v.n_params());
    double total = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        SegmentEval e = eval_segment(state, segments[i], mode, true, false);
        double wi = weight_at(weights, i);
        grad.noalias() +=
            wi * 2.0 * (e.delta - e.v0) * (e.grad_v_tail - e.grad_v0);
        grad.noalias() -= wi * 2.0 * state.eta * (e.delta - e.rho) * e.grad_v_tail;
        total += wi;
    }
    return grad / total;
}

Eigen::VectorXd grad_pi_estimator_segments(const SaddleState& state,
                                           const std::vector<Trajectory>& segments,
                                           const SegmentMode& mode,
                                           const std::vector<double>& weights) {
    check_batch(segments.size(), weights);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.pi.n_params());
    double total = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        SegmentEval e = eval_segment(state, segments[i], mode, false, true);
        double wi = weight_at(weights, i);
        double coef = (1.0 - state.eta) * e.delta + state.eta * e.rho - e.v0;
        grad.noalias() += wi * 2.0 * coef * e.grad_pi_part;
        total += wi;
    }
    return grad / total;
}

}  // namespace sdec
