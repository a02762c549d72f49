#include "sdec/checks.hpp"

#include <cmath>

#include "sdec/bellman.hpp"
#include "sdec/mdp.hpp"
#include "sdec/saddle.hpp"
#include "sdec/train.hpp"

namespace sdec {

namespace {

Eigen::VectorXd random_vector(int n, Rng& rng, double scale) {
    std::uniform_real_distribution<double> unit(-scale, scale);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = unit(rng);
    return v;
}

TabularPolicy random_policy(int n_states, int n_actions, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    TabularPolicy pi;
    pi.probs.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        Eigen::VectorXd row(n_actions);
        for (int a = 0; a < n_actions; ++a) row[a] = unit(rng);
        pi.probs.row(s) = row.transpose() / row.sum();
    }
    return pi;
}

// Every (s,a,s') with positive probability as a weighted batch; rewards enter
// at their expectations so the batch mean equals the exact objective.
void enumerate_batch(const TabularMdp& mdp, std::vector<Transition>& batch,
                     std::vector<double>& weights) {
    batch.clear();
    weights.clear();
    double w_sa = 1.0 / (mdp.n_states * mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                double p = mdp.prob(s, a, s2);
                if (p == 0.0) continue;
                batch.push_back(
                    {scalar_vec(s), scalar_vec(a), mdp.reward(s, a), scalar_vec(s2)});
                weights.push_back(w_sa * p);
            }
}

}  // namespace

nlohmann::json check_results_to_json(const std::vector<CheckResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results)
        arr.push_back({{"name", r.name},
                       {"pass", r.pass},
                       {"measured", r.measured},
                       {"tolerance", r.tolerance},
                       {"detail", r.detail}});
    return arr;
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return true;
}

std::vector<CheckResult> check_contraction(int n_seeds, std::uint64_t seed, int n_states,
                                           int n_actions, double gamma) {
    int violations = 0;
    double max_ratio = 0.0;
    const double lambdas[] = {0.01, 0.1, 1.0};
    Rng rng = make_rng(seed, 0xc0);
    for (int i = 0; i < n_seeds; ++i) {
        TabularMdp mdp = make_random_mdp(n_states, n_actions, seed + i, 1.0, 0.0, gamma);
        Eigen::VectorXd v1 = random_vector(n_states, rng, 5.0);
        Eigen::VectorXd v2 = random_vector(n_states, rng, 5.0);
        double dist = (v1 - v2).lpNorm<Eigen::Infinity>();
        for (double lambda : lambdas) {
            double mapped = (smoothed_bellman_apply(mdp, v1, lambda) -
                             smoothed_bellman_apply(mdp, v2, lambda))
                                .lpNorm<Eigen::Infinity>();
            double ratio = mapped / dist;
            max_ratio = std::max(max_ratio, ratio);
            if (mapped > gamma * dist) ++violations;
        }
    }
    CheckResult r;
    r.name = "contraction";
    r.pass = violations == 0;
    r.measured = max_ratio;
    r.tolerance = gamma;
    r.detail = std::to_string(n_seeds - violations) + "/" + std::to_string(n_seeds) +
               " seeds without violation, max ratio " + std::to_string(max_ratio);
    return {r};
}

std::vector<CheckResult> check_bias(int n_mdps, std::uint64_t seed, int n_states,
                                    int n_actions, double gamma) {
    const double lambdas[] = {0.001, 0.01, 0.1, 1.0};
    double worst_margin = -1e300;  // max over cases of gap - bound (pass if <= 0)
    double worst_ratio = 0.0;      // max over mdps of gap(0.001) / gap(0.1)
    bool monotone = true;
    for (int i = 0; i < n_mdps; ++i) {
        TabularMdp mdp = make_random_mdp(n_states, n_actions, seed + 7000 + i, 1.0, 0.0,
                                         gamma);
        TabularValue v_star = solve_fixed_point(mdp, 0.0).v;
        double prev_gap = -1.0;
        double gap_small = 0.0, gap_large = 0.0;
        for (double lambda : lambdas) {
            TabularValue v_smooth = solve_fixed_point(mdp, lambda).v;
            double gap = (v_star - v_smooth).lpNorm<Eigen::Infinity>();
            double bound =
                smoothing_bias_bound(mdp.gamma, lambda, std::log(double(n_actions)));
            worst_margin = std::max(worst_margin, gap - bound);
            if (gap + 1e-12 < prev_gap) monotone = false;
            prev_gap = gap;
            if (lambda == 0.001) gap_small = gap;
            if (lambda == 0.1) gap_large = gap;
        }
        if (gap_large > 0.0) worst_ratio = std::max(worst_ratio, gap_small / gap_large);
    }
    std::vector<CheckResult> out;
    out.push_back({"bias/bound", worst_margin <= 0.0, worst_margin, 0.0,
                   "max gap minus bound over all (mdp, lambda)"});
    out.push_back({"bias/small_lambda_ratio", worst_ratio <= 0.1, worst_ratio, 0.1,
                   "gap(0.001) / gap(0.1), must be <= 1/10"});
    out.push_back({"bias/monotone", monotone, monotone ? 1.0 : 0.0, 1.0,
                   "gap non-decreasing in lambda on each MDP"});
    return out;
}

std::vector<CheckResult> check_consistency(std::uint64_t seed, int n_mdps) {
    std::vector<TabularMdp> mdps;
    mdps.push_back(make_chain(5, 0.9));
    mdps.push_back(make_gridworld(4, 4, 0.1, 0.95));
    for (int i = 0; i < n_mdps; ++i)
        mdps.push_back(make_random_mdp(20, 4, seed + 9000 + i, 1.0, 0.0, 0.9));

    double worst_residual = 0.0;
    double weakest_detection = 1e300;
    double weakest_required = 0.0;
    const double lambda = 0.05;
    for (const auto& mdp : mdps) {
        FixedPointResult fp = solve_fixed_point(mdp, lambda);
        TabularPolicy pi = smoothed_optimal_policy(mdp, fp.v, lambda);
        worst_residual =
            std::max(worst_residual, consistency_residual(mdp, fp.v, pi, lambda).max_abs);
        TabularValue perturbed = fp.v;
        perturbed[0] += 0.1;
        double detected = consistency_residual(mdp, perturbed, pi, lambda).max_abs;
        if (detected < weakest_detection) {
            weakest_detection = detected;
            weakest_required = 0.09 * (1.0 - mdp.gamma);
        }
    }
    std::vector<CheckResult> out;
    out.push_back({"consistency/fixed_point", worst_residual <= 1e-8, worst_residual, 1e-8,
                   "max |residual| at (V~*, pi~*) across test MDPs"});
    bool detect_ok = weakest_detection >= std::max(weakest_required, 0.01);
    out.push_back({"consistency/perturbation", detect_ok, weakest_detection, 0.01,
                   "residual after a +0.1 value perturbation, must be >= 0.01"});
    return out;
}

std::vector<CheckResult> check_variance(int n_mdps, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x7a);
    double worst_defect = 0.0;
    double worst_dual_gap = 0.0;
    for (int i = 0; i < n_mdps; ++i) {
        TabularMdp mdp = make_random_mdp(10, 3, seed + 300 + i, 0.7, 0.0, 0.9);
        Eigen::VectorXd v = random_vector(mdp.n_states, rng, 1.0);
        TabularPolicy pi = random_policy(mdp.n_states, mdp.n_actions, rng);
        VarianceIdentity id = variance_identity_check(mdp, v, pi, 0.1);
        worst_defect = std::max(worst_defect, id.defect);
        worst_dual_gap = std::max(worst_dual_gap, id.dual_maximizer_gap);
    }
    // deterministic environment: the variance term itself must vanish
    TabularMdp chain = make_chain(5, 0.9);
    Rng rng2 = make_rng(seed, 0x7b);
    Eigen::VectorXd v = random_vector(chain.n_states, rng2, 1.0);
    TabularPolicy pi = random_policy(chain.n_states, chain.n_actions, rng2);
    VarianceIdentity det = variance_identity_check(chain, v, pi, 0.1);

    std::vector<CheckResult> out;
    out.push_back({"variance/identity", worst_defect <= 1e-12, worst_defect, 1e-12,
                   "|f~ - f - Var[gamma V(s')]| by exact enumeration"});
    out.push_back({"variance/dual_maximizer", worst_dual_gap <= 1e-12, worst_dual_gap,
                   1e-12, "closed-form rho* attains the variance term"});
    out.push_back({"variance/deterministic_zero",
                   det.variance_term <= 1e-14 && det.defect <= 1e-14, det.variance_term,
                   1e-14, "variance term on a deterministic MDP"});
    return out;
}

namespace {

// Builds a saddle state with tabular families on the given MDP, parameters
// randomized so the gradients are exercised away from stationary points.
SaddleState make_probe_state(const TabularMdp& mdp, double lambda, double eta, Rng& rng) {
    SaddleState st;
    st.lambda = lambda;
    st.eta = eta;
    st.gamma = mdp.gamma;
    st.v = make_value_function(FeatureMap::tabular({mdp.n_states}));
    st.pi = make_discrete_policy(FeatureMap::tabular({mdp.n_states}), mdp.n_actions);
    st.rho = make_dual_function(FeatureMap::tabular({mdp.n_states, mdp.n_actions}));
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (int i = 0; i < st.v.n_params(); ++i) st.v.params[i] = unit(rng);
    for (int i = 0; i < st.pi.n_params(); ++i) st.pi.params[i] = unit(rng);
    return st;
}

double fd_gradient_error(SaddleState& state, const std::vector<Transition>& batch,
                         const std::vector<double>& weights, bool wrt_value,
                         bool inject_fault) {
    fit_dual(state, batch, weights);
    Eigen::VectorXd est = wrt_value ? grad_V_estimator(state, batch, weights)
                                    : grad_pi_estimator(state, batch, weights);
    if (inject_fault && est.size() > 0) est[0] *= 2.0;
    Eigen::VectorXd* params = wrt_value ? &state.v.params : &state.pi.params;
    const double eps = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < params->size(); ++i) {
        double keep = (*params)[i];
        (*params)[i] = keep + eps;
        double up = saddle_objective_eta(state, batch, weights);
        (*params)[i] = keep - eps;
        double down = saddle_objective_eta(state, batch, weights);
        (*params)[i] = keep;
        double fd = (up - down) / (2.0 * eps);
        worst = std::max(worst, std::abs(fd - est[i]) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

}  // namespace

std::vector<CheckResult> check_gradients(std::uint64_t seed, bool inject_fault) {
    TabularMdp mdp = make_random_mdp(4, 3, seed + 40, 0.8, 0.0, 0.9);
    std::vector<Transition> batch;
    std::vector<double> weights;
    enumerate_batch(mdp, batch, weights);

    std::vector<CheckResult> out;
    const double etas[] = {0.0, 0.5, 1.0};
    double worst_v = 0.0, worst_pi = 0.0;
    Rng rng = make_rng(seed, 0x9d);
    for (double eta : etas) {
        SaddleState st = make_probe_state(mdp, 0.1, eta, rng);
        worst_v = std::max(worst_v, fd_gradient_error(st, batch, weights, true, inject_fault));
        worst_pi =
            std::max(worst_pi, fd_gradient_error(st, batch, weights, false, inject_fault));
    }
    out.push_back({"gradients/value", worst_v <= 1e-4, worst_v, 1e-4,
                   "max relative error vs central differences of L_eta, eta in {0,0.5,1}"});
    out.push_back({"gradients/policy", worst_pi <= 1e-4, worst_pi, 1e-4,
                   "max relative error vs central differences of L_eta, eta in {0,0.5,1}"});

    // zero gradient at the smoothed optimum with the exactly fitted dual
    {
        const double lambda = 0.05;
        FixedPointResult fp = solve_fixed_point(mdp, lambda);
        TabularPolicy pi_star = smoothed_optimal_policy(mdp, fp.v, lambda);
        SaddleState st = make_probe_state(mdp, lambda, 1.0, rng);
        st.v.params = fp.v;
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
                st.pi.params[static_cast<long>(a) * mdp.n_states + s] =
                    std::log(pi_star.probs(s, a));
        fit_dual(st, batch, weights, /*ridge=*/0.0);  // exact conditional means
        double norm_v = grad_V_estimator(st, batch, weights).norm();
        double norm_pi = grad_pi_estimator(st, batch, weights).norm();
        double measured = std::max(norm_v, norm_pi);
        out.push_back({"gradients/zero_at_optimum", measured <= 1e-8, measured, 1e-8,
                       "gradient norms at (V~*, pi~*, rho*) with full enumeration"});
    }
    return out;
}

std::vector<CheckResult> check_reductions(std::uint64_t seed) {
    std::vector<CheckResult> out;

    // T = 0 multi-step and zeta = 0 trace equal the one-step delta
    TabularMdp mdp = make_random_mdp(6, 2, seed + 60, 1.0, 0.2, 0.9);
    Rng rng = make_rng(seed, 0x5e);
    SaddleState st;
    st.lambda = 0.1;
    st.eta = 1.0;
    st.gamma = mdp.gamma;
    st.v = make_value_function(FeatureMap::tabular({mdp.n_states}));
    st.pi = make_discrete_policy(FeatureMap::tabular({mdp.n_states}), mdp.n_actions);
    st.rho = make_dual_function(FeatureMap::tabular({mdp.n_states, mdp.n_actions}));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < st.v.n_params(); ++i) st.v.params[i] = unit(rng);
    for (int i = 0; i < st.pi.n_params(); ++i) st.pi.params[i] = unit(rng);

    std::uniform_int_distribution<int> pick(0, mdp.n_actions - 1);
    Trajectory traj = rollout(
        mdp, [&](int, Rng& r) { return pick(r); }, 8, rng, 0);

    double worst_multi = 0.0, worst_trace = 0.0;
    for (const Transition& t : traj.steps) {
        Trajectory seg;
        seg.steps = {t};
        double one = delta_one_step(st, t);
        worst_multi = std::max(worst_multi, std::abs(delta_multi_step(st, seg, 0) - one));
        worst_trace = std::max(worst_trace, std::abs(delta_trace(st, seg, 0.0, 0) - one));
    }
    out.push_back({"reductions/multi_step_T0", worst_multi <= 1e-12, worst_multi, 1e-12,
                   "delta_multi_step(T=0) vs delta_one_step on stored transitions"});
    out.push_back({"reductions/trace_zeta0", worst_trace <= 1e-12, worst_trace, 1e-12,
                   "delta_trace(zeta=0) vs delta_one_step on stored transitions"});

    // worked multi-step value: T=1, zero rewards, uniform 2-action policy,
    // lambda=1, gamma=0.5, V(s2)=4  ->  1.5 log 2 + 1
    {
        SaddleState ws;
        ws.lambda = 1.0;
        ws.eta = 1.0;
        ws.gamma = 0.5;
        ws.v = make_value_function(FeatureMap::tabular({3}));
        ws.pi = make_discrete_policy(FeatureMap::tabular({3}), 2);
        ws.rho = make_dual_function(FeatureMap::tabular({3, 2, 2}));
        ws.v.params << 0.0, 0.0, 4.0;
        Trajectory seg;
        seg.steps = {{scalar_vec(0), scalar_vec(0), 0.0, scalar_vec(1)},
                     {scalar_vec(1), scalar_vec(1), 0.0, scalar_vec(2)}};
        double expected = 1.5 * std::log(2.0) + 1.0;
        double got = delta_multi_step(ws, seg, 1);
        out.push_back({"reductions/worked_multi_step", std::abs(got - expected) <= 1e-9,
                       std::abs(got - expected), 1e-9,
                       "T=1 zero-reward uniform-policy mixture equals 1.5 log 2 + 1"});
    }

    // worked trace mixture: deltas (1,2,3,4), zeta=0.5, T_max=3 -> 26/15
    {
        SaddleState ws;
        ws.lambda = 0.0;  // diagnostic mode: no policy term
        ws.eta = 1.0;
        ws.gamma = 1.0;  // undiscounted sums make delta_T = T + 1
        ws.v = make_value_function(FeatureMap::tabular({5}));
        ws.pi = make_discrete_policy(FeatureMap::tabular({5}), 2);
        ws.rho = make_dual_function(FeatureMap::tabular({5, 2, 2, 2, 2}));
        Trajectory traj2;
        for (int t = 0; t < 4; ++t)
            traj2.steps.push_back({scalar_vec(t), scalar_vec(0), 1.0, scalar_vec(t + 1)});
        double got = delta_trace(ws, traj2, 0.5, 3);
        double expected = 26.0 / 15.0;
        out.push_back({"reductions/worked_trace", std::abs(got - expected) <= 1e-9,
                       std::abs(got - expected), 1e-9,
                       "geometric mixture of deltas (1,2,3,4) at zeta=0.5 equals 26/15"});
    }

    // objective-level reduction: segment path at T=0 matches the one-step path
    {
        st.rho.params.setZero();
        std::vector<Transition> batch(traj.steps.begin(), traj.steps.end());
        std::vector<Trajectory> segs;
        for (const Transition& t : batch) {
            Trajectory seg;
            seg.steps = {t};
            segs.push_back(std::move(seg));
        }
        SaddleState a = st, b = st;
        DualFitResult fa = fit_dual(a, batch);
        DualFitResult fb = fit_dual_segments(b, segs, SegmentMode{0, 0.0});
        ObjectiveTerms ta = saddle_objective_terms(a, batch);
        ObjectiveTerms tb = saddle_objective_terms_segments(b, segs, SegmentMode{0, 0.0});
        double diff = std::max({std::abs(fa.loss - fb.loss),
                                std::abs(ta.first_term - tb.first_term),
                                std::abs(ta.second_term - tb.second_term)});
        out.push_back({"reductions/objective_paths", diff <= 1e-12, diff, 1e-12,
                       "one-step vs segment-path objective and dual fit"});
    }
    return out;
}

std::vector<CheckResult> run_checks(const std::string& selector, std::uint64_t seed,
                                    int n_seeds, bool inject_fault) {
    std::vector<CheckResult> out;
    auto append = [&out](std::vector<CheckResult> r) {
        out.insert(out.end(), r.begin(), r.end());
    };
    bool all = selector == "all";
    bool known = all;
    if (all || selector == "contraction") {
        append(check_contraction(n_seeds, seed));
        known = true;
    }
    if (all || selector == "bias") {
        append(check_bias(std::min(n_seeds, 20), seed));
        known = true;
    }
    if (all || selector == "consistency") {
        append(check_consistency(seed));
        known = true;
    }
    if (all || selector == "variance") {
        append(check_variance(std::min(n_seeds, 20), seed));
        known = true;
    }
    if (all || selector == "gradients") {
        append(check_gradients(seed, inject_fault));
        known = true;
    }
    if (all || selector == "reductions") {
        append(check_reductions(seed));
        known = true;
    }
    if (!known) throw InvalidValue("unknown check selector '" + selector + "'");
    return out;
}

}  // namespace sdec
