#include "sdec/bellman.hpp"

#include <cmath>

namespace sdec {

namespace {

void check_value_shape(const TabularMdp& mdp, const TabularValue& v) {
    if (v.size() != mdp.n_states)
        throw ShapeMismatch("value vector length " + std::to_string(v.size()) +
                            " does not match n_states " + std::to_string(mdp.n_states));
}

}  // namespace

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
    double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((x.array() - m).exp().sum());
}

Eigen::MatrixXd q_values(const TabularMdp& mdp, const TabularValue& v) {
    check_value_shape(mdp, v);
    Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a)
        q.col(a) = mdp.reward.col(a) + mdp.gamma * (mdp.transition[a] * v);
    return q;
}

TabularValue bellman_apply(const TabularMdp& mdp, const TabularValue& v) {
    return q_values(mdp, v).rowwise().maxCoeff();
}

TabularValue smoothed_bellman_apply(const TabularMdp& mdp, const TabularValue& v,
                                    double lambda) {
    if (!(lambda > 0.0)) throw NonPositiveLambda("smoothed backup needs lambda > 0");
    Eigen::MatrixXd q = q_values(mdp, v);
    TabularValue out(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s)
        out[s] = lambda * log_sum_exp(q.row(s).transpose() / lambda);
    return out;
}

FixedPointResult solve_fixed_point(const TabularMdp& mdp, double lambda, double tol,
                                   long long max_iter, const TabularValue* init) {
    if (!(tol > 0.0)) throw BadParams("fixed-point tolerance must be positive");
    if (lambda < 0.0) throw NonPositiveLambda("lambda must be >= 0");
    TabularValue v = init ? *init : TabularValue::Zero(mdp.n_states);
    if (init) check_value_shape(mdp, v);
    // a residual of tol * (1 - gamma) pins v within tol of the unique fixed
    // point, so solutions from different initializations agree within 2 tol
    const double target = tol * (1.0 - mdp.gamma);
    for (long long it = 1; it <= max_iter; ++it) {
        TabularValue next =
            lambda > 0.0 ? smoothed_bellman_apply(mdp, v, lambda) : bellman_apply(mdp, v);
        double residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (residual <= target) return {std::move(v), static_cast<int>(it), residual};
    }
    throw MaxIterExceeded("fixed-point residual still above tol after " +
                          std::to_string(max_iter) + " iterations");
}

TabularPolicy smoothed_optimal_policy(const TabularMdp& mdp, const TabularValue& v,
                                      double lambda) {
    if (!(lambda > 0.0)) throw NonPositiveLambda("smoothed policy needs lambda > 0");
    Eigen::MatrixXd q = q_values(mdp, v);
    TabularPolicy pi;
    pi.probs.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        Eigen::VectorXd z = q.row(s).transpose() / lambda;
        z.array() -= z.maxCoeff();
        Eigen::VectorXd w = z.array().exp();
        pi.probs.row(s) = w.transpose() / w.sum();
    }
    return pi;
}

std::vector<int> greedy_policy(const TabularMdp& mdp, const TabularValue& v) {
    Eigen::MatrixXd q = q_values(mdp, v);
    std::vector<int> actions(mdp.n_states, 0);
    for (int s = 0; s < mdp.n_states; ++s) {
        int best = 0;
        for (int a = 1; a < mdp.n_actions; ++a)
            if (q(s, a) > q(s, best)) best = a;  // strict: ties keep the lowest index
        actions[s] = best;
    }
    return actions;
}

ResidualResult consistency_residual(const TabularMdp& mdp, const TabularValue& v,
                                    const TabularPolicy& pi, double lambda) {
    if (!(lambda > 0.0)) throw NonPositiveLambda("consistency residual needs lambda > 0");
    if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions)
        throw ShapeMismatch("policy table shape does not match the MDP");
    Eigen::MatrixXd q = q_values(mdp, v);
    ResidualResult res;
    res.table.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            double p = pi.probs(s, a);
            if (!(p > 0.0))
                throw ZeroPolicyProbability("pi(a|s) = 0 at (s=" + std::to_string(s) +
                                            ",a=" + std::to_string(a) + ")");
            res.table(s, a) = q(s, a) - lambda * std::log(p) - v[s];
        }
    res.max_abs = res.table.array().abs().maxCoeff();
    return res;
}

double smoothing_bias_bound(double gamma, double lambda, double max_entropy) {
    if (!(gamma > 0.0) || !(gamma < 1.0))
        throw GammaOutOfRange("smoothing_bias_bound needs gamma in (0,1)");
    if (lambda < 0.0) throw NonPositiveLambda("lambda must be >= 0");
    return gamma * lambda * max_entropy / (1.0 - gamma);
}

Eigen::MatrixXd induced_chain(const TabularMdp& mdp, const TabularPolicy& pi) {
    if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions)
        throw ShapeMismatch("policy table shape does not match the MDP");
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int a = 0; a < mdp.n_actions; ++a)
        p += pi.probs.col(a).asDiagonal() * mdp.transition[a];
    return p;
}

TabularValue policy_evaluation(const TabularMdp& mdp, const TabularPolicy& pi) {
    Eigen::MatrixXd p = induced_chain(mdp, pi);
    Eigen::VectorXd r = (mdp.reward.array() * pi.probs.array()).rowwise().sum();
    Eigen::MatrixXd lhs =
        Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p;
    return lhs.partialPivLu().solve(r);
}

}  // namespace sdec
