#include "sdec/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "sdec/prox.hpp"

namespace sdec {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ50 = 0.6744897501960817;  // 50% two-sided normal quantile

double sup_norm(const Eigen::VectorXd& v) { return v.lpNorm<Eigen::Infinity>(); }

EvalResult summarize_returns(const std::vector<double>& returns) {
    EvalResult out;
    out.episodes = static_cast<int>(returns.size());
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= returns.size();
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var = returns.size() > 1 ? var / (returns.size() - 1) : 0.0;
    out.mean = mean;
    out.half_width = kZ50 * std::sqrt(var / returns.size());
    return out;
}

}  // namespace

EvalResult evaluate_policy(const TabularMdp& mdp, const TabularPolicySampler& policy,
                           int episodes, int horizon, Rng& rng) {
    if (episodes < 1) throw BadParams("evaluate_policy needs episodes >= 1");
    std::vector<double> returns(episodes, 0.0);
    for (int e = 0; e < episodes; ++e) {
        Trajectory traj = rollout(mdp, policy, horizon, rng, /*start_state=*/-1, e);
        double g = 0.0, discount = 1.0;
        for (const Transition& t : traj.steps) {
            g += discount * t.r;
            discount *= mdp.gamma;
        }
        returns[e] = g;
    }
    return summarize_returns(returns);
}

EvalResult evaluate_policy(const TabularMdp& mdp, const ParamFunction& pi, int episodes,
                           int horizon, Rng& rng) {
    return evaluate_policy(mdp, tabular_sampler(pi, 0.0), episodes, horizon, rng);
}

EvalResult evaluate_policy(const ContinuousEnv& env, const ParamFunction& pi, int episodes,
                           int horizon, Rng& rng) {
    if (episodes < 1) throw BadParams("evaluate_policy needs episodes >= 1");
    std::vector<double> returns(episodes, 0.0);
    ContinuousPolicySampler sampler = [&pi](const Eigen::VectorXd& s, Rng& r) {
        return sample_action(pi, s, r);
    };
    for (int e = 0; e < episodes; ++e) {
        Trajectory traj = rollout(env, sampler, horizon, rng, e);
        double g = 0.0, discount = 1.0;
        for (const Transition& t : traj.steps) {
            g += discount * t.r;
            discount *= env.gamma();
        }
        returns[e] = g;
    }
    return summarize_returns(returns);
}

TabularValue tabular_value_table(const ParamFunction& v, int n_states) {
    TabularValue out(n_states);
    for (int s = 0; s < n_states; ++s) out[s] = eval_value(v, scalar_vec(s)).value;
    return out;
}

TabularPolicy tabular_policy_table(const ParamFunction& pi, int n_states) {
    if (pi.kind != FunctionKind::log_policy_discrete)
        throw KindMismatch("tabular_policy_table needs a discrete policy");
    TabularPolicy out;
    out.probs.resize(n_states, pi.n_actions);
    for (int s = 0; s < n_states; ++s) {
        Eigen::VectorXd z = policy_logits(pi, scalar_vec(s));
        double lse = log_sum_exp(z);
        out.probs.row(s) = (z.transpose().array() - lse).exp();
    }
    return out;
}

TabularPolicySampler tabular_sampler(const ParamFunction& pi, double epsilon) {
    if (pi.kind != FunctionKind::log_policy_discrete)
        throw KindMismatch("tabular_sampler needs a discrete policy");
    ParamFunction snapshot = pi;  // freeze parameters at call time
    return [snapshot, epsilon](int s, Rng& rng) {
        Eigen::VectorXd z = policy_logits(snapshot, scalar_vec(s));
        double lse = log_sum_exp(z);
        Eigen::VectorXd probs = (z.array() - lse).exp();
        if (epsilon > 0.0)
            probs = (1.0 - epsilon) * probs +
                    Eigen::VectorXd::Constant(probs.size(), epsilon / probs.size());
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double u = unit(rng);
        double cum = 0.0;
        for (int a = 0; a < probs.size(); ++a) {
            cum += probs[a];
            if (u <= cum) return a;
        }
        return static_cast<int>(probs.size()) - 1;
    };
}

namespace {

// ---------------------------------------------------------------------------
// family construction
// ---------------------------------------------------------------------------

struct EnvView {
    bool tabular = false;
    const TabularMdp* mdp = nullptr;
    const ContinuousEnv* cont = nullptr;

    int state_dim() const { return tabular ? 1 : cont->state_dim(); }
    int action_dim() const { return tabular ? 1 : cont->action_dim(); }
    double gamma() const { return tabular ? mdp->gamma : cont->gamma(); }
};

FeatureMap build_state_features(const FamilySpec& spec, const EnvView& env,
                                const Eigen::MatrixXd& state_sample, std::uint64_t seed) {
    if (spec.kind == "tabular") {
        if (!env.tabular) throw ConfigInvalid("tabular family on a continuous environment");
        return FeatureMap::tabular({env.mdp->n_states});
    }
    if (spec.kind == "linear") return FeatureMap::linear(env.state_dim());
    return FeatureMap::rbf_from_sample(state_sample, spec.n_centers, seed ^ spec.seed,
                                       spec.bandwidth);
}

FeatureMap build_pair_features(const FamilySpec& spec, const EnvView& env, int T,
                               const Eigen::MatrixXd& pair_sample, std::uint64_t seed) {
    if (spec.kind == "tabular") {
        if (!env.tabular) throw ConfigInvalid("tabular family on a continuous environment");
        std::vector<int> radix(1 + (T + 1), env.mdp->n_actions);
        radix[0] = env.mdp->n_states;
        return FeatureMap::tabular(std::move(radix));
    }
    int dim = env.state_dim() + env.action_dim() * (T + 1);
    if (spec.kind == "linear") return FeatureMap::linear(dim);
    return FeatureMap::rbf_from_sample(pair_sample, spec.n_centers, seed ^ spec.seed,
                                       spec.bandwidth);
}

// ---------------------------------------------------------------------------
// behavior policy
// ---------------------------------------------------------------------------

struct BehaviorPolicy {
    bool uniform = false;
    double epsilon = 0.0;
    ParamFunction snapshot;

    TabularPolicySampler tabular(const TabularMdp& mdp) const {
        if (uniform) {
            int n_actions = mdp.n_actions;
            return [n_actions](int, Rng& rng) {
                std::uniform_int_distribution<int> pick(0, n_actions - 1);
                return pick(rng);
            };
        }
        return tabular_sampler(snapshot, epsilon);
    }

    ContinuousPolicySampler continuous(const ContinuousEnv& env) const {
        if (uniform) {
            Eigen::VectorXd lo = env.action_low(), hi = env.action_high();
            return [lo, hi](const Eigen::VectorXd&, Rng& rng) {
                Eigen::VectorXd a(lo.size());
                for (int i = 0; i < lo.size(); ++i) {
                    std::uniform_real_distribution<double> pick(lo[i], hi[i]);
                    a[i] = pick(rng);
                }
                return a;
            };
        }
        ParamFunction frozen = snapshot;
        return [frozen](const Eigen::VectorXd& s, Rng& rng) {
            return sample_action(frozen, s, rng);
        };
    }
};

void require_finite(double v, const char* what, long long iteration) {
    if (!std::isfinite(v))
        throw NonFiniteLoss(std::string(what) + " is not finite at iteration " +
                            std::to_string(iteration));
}

void require_finite(const Eigen::VectorXd& v, const char* what, long long iteration) {
    if (!v.allFinite())
        throw NonFiniteLoss(std::string(what) + " is not finite at iteration " +
                            std::to_string(iteration));
}

// KL-simplex policy update for tabular softmax policies: the simplex prox
// pi_new proportional to pi * exp(-step * g) applied in log space, with the
// log-probabilities floored at -300 so the 1/pi factor in g stays finite.
void kl_simplex_update(ParamFunction& pi, const SaddleState& state,
                       const std::vector<Transition>& batch,
                       const std::vector<Trajectory>& segments, const SegmentMode& mode,
                       bool use_segments, double step, int n_states) {
    constexpr double kLogFloor = -300.0;
    const int n_actions = pi.n_actions;
    Eigen::MatrixXd logp(n_states, n_actions);
    Eigen::MatrixXd probs(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        Eigen::VectorXd z = policy_logits(pi, scalar_vec(s));
        double lse = log_sum_exp(z);
        logp.row(s) = (z.transpose().array() - lse).max(kLogFloor);
        probs.row(s) = logp.row(s).array().exp();
    }
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n_states, n_actions);
    double total = 0.0;
    auto add_step = [&](const Eigen::VectorXd& sv, const Eigen::VectorXd& av, double coef,
                        double weight) {
        int s = static_cast<int>(sv[0]);
        int a = static_cast<int>(av[0]);
        grad(s, a) += weight * 2.0 * coef * (-state.lambda / probs(s, a));
    };
    if (!use_segments) {
        for (const Transition& t : batch) {
            double delta = delta_one_step(state, t);
            double vs = eval_value(state.v, t.s).value;
            double rho = eval_dual(state.rho, t.s, t.a).value;
            double coef = (1.0 - state.eta) * delta + state.eta * rho - vs;
            add_step(t.s, t.a, coef, 1.0);
            total += 1.0;
        }
    } else {
        for (const Trajectory& seg : segments) {
            double delta = segment_delta(state, seg, mode);
            double vs = eval_value(state.v, seg.steps[0].s).value;
            double rho = state.rho.params.dot(
                dual_features_input(state.rho, segment_dual_input(seg, mode.T)));
            double coef = (1.0 - state.eta) * delta + state.eta * rho - vs;
            // d delta / d pi(a_t|s_t) = -lambda * gamma^t * c_t / pi(a_t|s_t)
            std::vector<double> mix(mode.T + 1, 0.0);
            if (mode.zeta > 0.0) {
                double mass = 1.0 - std::pow(mode.zeta, mode.T + 1);
                double cur = (1.0 - mode.zeta) / mass;
                for (int t = 0; t <= mode.T; ++t) {
                    mix[t] = cur;
                    cur *= mode.zeta;
                }
            } else {
                mix[mode.T] = 1.0;
            }
            std::vector<double> suffix(mode.T + 2, 0.0);
            for (int t = mode.T; t >= 0; --t) suffix[t] = suffix[t + 1] + mix[t];
            double discount = 1.0;
            for (int t = 0; t <= mode.T; ++t) {
                add_step(seg.steps[t].s, seg.steps[t].a, coef, discount * suffix[t]);
                discount *= state.gamma;
            }
            total += 1.0;
        }
    }
    grad /= total;
    // the 1/pi factor makes raw multiplicative steps overshoot near the
    // simplex boundary; cap the per-update log change (trust region)
    constexpr double kMaxLogStep = 1.0;
    for (int s = 0; s < n_states; ++s) {
        if ((grad.row(s).array() == 0.0).all()) continue;
        Eigen::ArrayXd move = (-step * grad.row(s).transpose().array())
                                  .min(kMaxLogStep)
                                  .max(-kMaxLogStep);
        Eigen::ArrayXd next = logp.row(s).transpose().array() + move;
        next -= next.maxCoeff();  // softmax head is shift-invariant
        next = next.max(kLogFloor);
        for (int a = 0; a < n_actions; ++a)
            pi.params[static_cast<long>(a) * n_states + s] = next[a];
    }
}

}  // namespace

TrainResult sdec_train(const AnyEnv& env, const SdecConfig& cfg, Rng& rng) {
    std::string bad = config_violation(cfg);
    if (!bad.empty()) throw ConfigInvalid(bad);

    EnvView view;
    view.tabular = std::holds_alternative<TabularMdp>(env);
    if (view.tabular)
        view.mdp = &std::get<TabularMdp>(env);
    else
        view.cont = std::get<std::shared_ptr<const ContinuousEnv>>(env).get();
    if (std::abs(view.gamma() - cfg.gamma) > 1e-12)
        throw ConfigInvalid("environment discount differs from config gamma");

    const bool use_segments =
        cfg.multi_step_T > 0 || cfg.trace_zeta > 0.0 || cfg.force_segment_path;
    const int seg_len = cfg.multi_step_T + 1;
    const SegmentMode mode{cfg.multi_step_T, cfg.trace_zeta};

    // independent substreams so collection, sampling, and evaluation never
    // perturb each other
    const std::uint64_t base = rng();
    Rng collect_rng = make_rng(base, 1);
    Rng sample_rng = make_rng(base, 2);
    Rng eval_rng = make_rng(base, 3);
    Rng init_rng = make_rng(base, 4);
    Rng iterate_rng = make_rng(base, 5);
    Rng heldout_rng = make_rng(base, 6);
    Rng feature_rng = make_rng(base, 7);

    // -- function families -------------------------------------------------
    const bool needs_warmup = cfg.v_family.kind == "rbf" || cfg.pi_family.kind == "rbf" ||
                              cfg.rho_family.kind == "rbf";
    Eigen::MatrixXd state_sample, pair_sample;
    BehaviorPolicy warmup_behavior;
    warmup_behavior.uniform = true;
    if (needs_warmup) {
        const int want = 1024;
        std::vector<Trajectory> trajs;
        int have = 0;
        while (have < want) {
            Trajectory t;
            if (view.tabular)
                t = rollout(*view.mdp, warmup_behavior.tabular(*view.mdp),
                            cfg.rollout_horizon, feature_rng);
            else
                t = rollout(*view.cont, warmup_behavior.continuous(*view.cont),
                            std::min(cfg.rollout_horizon, view.cont->horizon()),
                            feature_rng);
            have += static_cast<int>(t.size());
            trajs.push_back(std::move(t));
        }
        state_sample.resize(have, view.state_dim());
        int row = 0;
        for (const auto& t : trajs)
            for (const auto& tr : t.steps) state_sample.row(row++) = tr.s.transpose();
        std::vector<Eigen::VectorXd> pair_rows;
        for (const auto& t : trajs)
            for (std::size_t i = 0; i + seg_len <= t.size(); ++i) {
                Trajectory seg;
                seg.steps.assign(t.steps.begin() + i, t.steps.begin() + i + seg_len);
                pair_rows.push_back(segment_dual_input(seg, cfg.multi_step_T));
            }
        if (pair_rows.empty()) throw ConfigInvalid("warm-up produced no dual inputs");
        pair_sample.resize(pair_rows.size(), pair_rows[0].size());
        for (std::size_t i = 0; i < pair_rows.size(); ++i)
            pair_sample.row(i) = pair_rows[i].transpose();
    }

    SaddleState state;
    state.lambda = cfg.lambda;
    state.eta = cfg.eta;
    state.gamma = cfg.gamma;
    state.v = make_value_function(
        build_state_features(cfg.v_family, view, state_sample, cfg.seed + 0x11));
    if (view.tabular) {
        state.pi = make_discrete_policy(
            build_state_features(cfg.pi_family, view, state_sample, cfg.seed + 0x22),
            view.mdp->n_actions);
    } else {
        state.pi = make_gaussian_policy(
            build_state_features(cfg.pi_family, view, state_sample, cfg.seed + 0x22),
            view.cont->action_dim(), view.cont->action_low(), view.cont->action_high());
    }
    state.rho = make_dual_function(build_pair_features(cfg.rho_family, view,
                                                       cfg.multi_step_T, pair_sample,
                                                       cfg.seed + 0x33));

    if (cfg.divergence == "kl_simplex" &&
        (!view.tabular || state.pi.features.kind() != FeatureMap::Kind::tabular_onehot))
        throw ConfigInvalid("kl_simplex updates need a tabular softmax policy");

    // -- gradient checks before the loop accepts the families ----------------
    {
        std::vector<GradProbe> value_probes, policy_probes, dual_probes;
        for (int k = 0; k < 8; ++k) {
            Eigen::VectorXd s, a, seq;
            if (view.tabular) {
                std::uniform_int_distribution<int> ps(0, view.mdp->n_states - 1);
                std::uniform_int_distribution<int> pa(0, view.mdp->n_actions - 1);
                s = scalar_vec(ps(init_rng));
                a = scalar_vec(pa(init_rng));
                seq.resize(seg_len);
                for (int t = 0; t < seg_len; ++t) seq[t] = pa(init_rng);
            } else {
                s = view.cont->initial_state(init_rng);
                seq.resize(view.cont->action_dim() * seg_len);
                std::normal_distribution<double> normal(0.0, 1.0);
                for (int i = 0; i < seq.size(); ++i) seq[i] = normal(init_rng);
                a = seq.head(view.cont->action_dim());
            }
            value_probes.push_back({s, {}});
            policy_probes.push_back({s, a});
            dual_probes.push_back({s, seq});
        }
        // random parameters exercise the gradients away from the zero init
        auto randomize = [&](ParamFunction& f) {
            std::normal_distribution<double> normal(0.0, 0.1);
            ParamFunction probe = f;
            for (int i = 0; i < probe.n_params(); ++i) probe.params[i] = normal(init_rng);
            return probe;
        };
        const double tol = 1e-5;
        if (grad_check(randomize(state.v), value_probes) > tol ||
            grad_check(randomize(state.pi), policy_probes) > tol ||
            grad_check(randomize(state.rho), dual_probes) > tol)
            throw Error("analytic gradients failed the finite-difference gate");
    }

    // -- behavior policy, oracle, replay --------------------------------------
    BehaviorPolicy behavior;
    behavior.uniform = cfg.behavior_init == "uniform";
    behavior.epsilon = cfg.behavior_epsilon >= 0.0 ? cfg.behavior_epsilon
                       : view.tabular              ? 0.05
                                                   : 0.0;
    behavior.snapshot = state.pi;

    FixedPointResult oracle;
    if (view.tabular) oracle = solve_fixed_point(*view.mdp, cfg.lambda);

    ReplayBuffer<Transition> replay_steps(cfg.replay_capacity);
    ReplayBuffer<Trajectory> replay_segs(cfg.replay_capacity);

    auto collect = [&](long long episode) {
        int collected = 0;
        int sub = 0;
        while (collected < cfg.collect_per_episode) {
            int horizon = cfg.rollout_horizon;
            if (!view.tabular) horizon = std::min(horizon, view.cont->horizon());
            Trajectory traj;
            if (view.tabular)
                traj = rollout(*view.mdp, behavior.tabular(*view.mdp), horizon, collect_rng,
                               -1, episode * 1000 + sub);
            else
                traj = rollout(*view.cont, behavior.continuous(*view.cont), horizon,
                               collect_rng, episode * 1000 + sub);
            ++sub;
            collected += static_cast<int>(traj.size());
            if (use_segments) {
                for (std::size_t i = 0; i + seg_len <= traj.size(); ++i) {
                    Trajectory seg;
                    seg.episode_id = traj.episode_id;
                    seg.steps.assign(traj.steps.begin() + i, traj.steps.begin() + i + seg_len);
                    replay_segs.push(std::move(seg));
                }
            } else {
                for (auto& tr : traj.steps) replay_steps.push(tr);
            }
        }
    };

    // held-out batch for objective monitoring
    std::vector<Transition> heldout_steps;
    std::vector<Trajectory> heldout_segs;
    if (cfg.monitor_heldout) {
        const int want = std::max(256, cfg.batch_size);
        while (static_cast<int>(heldout_steps.size()) < want &&
               static_cast<int>(heldout_segs.size()) < want) {
            int horizon = cfg.rollout_horizon;
            if (!view.tabular) horizon = std::min(horizon, view.cont->horizon());
            Trajectory traj;
            if (view.tabular)
                traj = rollout(*view.mdp, behavior.tabular(*view.mdp), horizon, heldout_rng);
            else
                traj = rollout(*view.cont, behavior.continuous(*view.cont), horizon,
                               heldout_rng);
            if (use_segments) {
                for (std::size_t i = 0; i + seg_len <= traj.size(); ++i) {
                    Trajectory seg;
                    seg.steps.assign(traj.steps.begin() + i, traj.steps.begin() + i + seg_len);
                    heldout_segs.push_back(std::move(seg));
                }
            } else {
                for (auto& tr : traj.steps) heldout_steps.push_back(tr);
            }
        }
    }

    const StepSchedule schedule_v{StepSchedule::parse_law(cfg.decay), cfg.zeta0};
    const StepSchedule schedule_pi{StepSchedule::parse_law(cfg.decay),
                                   cfg.policy_stepsize_base()};
    const int eval_horizon = cfg.eval_horizon > 0 ? cfg.eval_horizon
                             : view.tabular       ? cfg.rollout_horizon
                                                  : view.cont->horizon();

    TrainResult result;
    result.metrics.reserve(static_cast<std::size_t>(cfg.episodes) * cfg.inner_iters);

    Eigen::VectorXd sel_v = state.v.params, sel_pi = state.pi.params;
    double iterate_mass = 0.0;

    const auto t_start = std::chrono::steady_clock::now();
    long long j_global = 0;

    for (int episode = 1; episode <= cfg.episodes; ++episode) {
        collect(episode);
        for (int j = 1; j <= cfg.inner_iters; ++j) {
            ++j_global;
            const auto t_iter = std::chrono::steady_clock::now();

            std::vector<Transition> batch;
            std::vector<Trajectory> seg_batch;
            if (use_segments)
                seg_batch = replay_segs.sample(cfg.batch_size, sample_rng);
            else
                batch = replay_steps.sample(cfg.batch_size, sample_rng);

            DualFitResult dual = use_segments
                                     ? fit_dual_segments(state, seg_batch, mode)
                                     : fit_dual(state, batch);
            ObjectiveTerms terms = use_segments
                                       ? saddle_objective_terms_segments(state, seg_batch, mode)
                                       : saddle_objective_terms(state, batch);
            Eigen::VectorXd grad_v = use_segments
                                         ? grad_V_estimator_segments(state, seg_batch, mode)
                                         : grad_V_estimator(state, batch);
            Eigen::VectorXd grad_pi = use_segments
                                          ? grad_pi_estimator_segments(state, seg_batch, mode)
                                          : grad_pi_estimator(state, batch);

            require_finite(terms.first_term, "objective first term", j_global);
            require_finite(terms.second_term, "objective second term", j_global);
            require_finite(dual.loss, "dual loss", j_global);
            require_finite(grad_v, "value gradient", j_global);
            require_finite(grad_pi, "policy gradient", j_global);

            const double step_v = schedule_v.at(j_global);
            const double step_pi = schedule_pi.at(j_global);

            // both prox steps read the same pre-update snapshot; V is assigned
            // first, then pi
            Eigen::VectorXd new_v = prox_euclidean(state.v.params, grad_v, step_v);
            Eigen::VectorXd new_pi;
            if (cfg.divergence == "euclidean") {
                new_pi = prox_euclidean(state.pi.params, grad_pi, step_pi);
            } else if (cfg.divergence == "kl_simplex") {
                ParamFunction pi_next = state.pi;
                kl_simplex_update(pi_next, state, batch, seg_batch, mode, use_segments,
                                  step_pi, view.mdp->n_states);
                new_pi = std::move(pi_next.params);
            } else {  // kl_penalized
                std::vector<Eigen::VectorXd> states;
                if (use_segments)
                    for (const auto& seg : seg_batch) states.push_back(seg.steps[0].s);
                else
                    for (const auto& tr : batch) states.push_back(tr.s);
                new_pi = prox_kl_penalized(state.pi, grad_pi, step_pi,
                                           cfg.kl_inner_iters, states)
                             .params;
            }
            state.v.params = std::move(new_v);
            state.pi.params = std::move(new_pi);
            require_finite(state.v.params, "value parameters", j_global);
            require_finite(state.pi.params, "policy parameters", j_global);

            if (cfg.randomized_iterate) {
                iterate_mass += step_v;
                std::uniform_real_distribution<double> unit(0.0, 1.0);
                if (unit(iterate_rng) <= step_v / iterate_mass) {
                    sel_v = state.v.params;
                    sel_pi = state.pi.params;
                }
            }

            MetricsRecord rec;
            rec.iteration = j_global;
            rec.objective_L_eta = terms.objective(cfg.eta);
            rec.first_term = terms.first_term;
            rec.second_term = terms.second_term;
            rec.dual_loss = dual.loss;
            rec.grad_norm_V = grad_v.norm();
            rec.grad_norm_pi = grad_pi.norm();
            rec.avg_return = kNan;
            rec.consistency_residual = kNan;
            rec.wall_ms = kNan;
            if (cfg.eval_every > 0 && j_global % cfg.eval_every == 0) {
                EvalResult ev = view.tabular
                                    ? evaluate_policy(*view.mdp, state.pi,
                                                      cfg.eval_episodes, eval_horizon,
                                                      eval_rng)
                                    : evaluate_policy(*view.cont, state.pi,
                                                      cfg.eval_episodes, eval_horizon,
                                                      eval_rng);
                rec.avg_return = ev.mean;
            }
            if (view.tabular) {
                TabularValue vt = tabular_value_table(state.v, view.mdp->n_states);
                TabularPolicy pt = tabular_policy_table(state.pi, view.mdp->n_states);
                try {
                    rec.consistency_residual =
                        consistency_residual(*view.mdp, vt, pt, cfg.lambda).max_abs;
                } catch (const ZeroPolicyProbability&) {
                    throw NonFiniteLoss("policy collapsed to zero probability at iteration " +
                                        std::to_string(j_global));
                }
                require_finite(rec.consistency_residual, "consistency residual", j_global);
            }
            if (cfg.monitor_heldout) {
                SaddleState probe = state;
                double obj;
                if (use_segments) {
                    fit_dual_segments(probe, heldout_segs, mode);
                    obj = saddle_objective_terms_segments(probe, heldout_segs, mode)
                              .objective(cfg.eta);
                } else {
                    fit_dual(probe, heldout_steps);
                    obj = saddle_objective_terms(probe, heldout_steps).objective(cfg.eta);
                }
                result.heldout_objective.push_back(obj);
            }
            if (cfg.record_timing) {
                rec.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t_iter)
                                  .count();
            }
            result.metrics.push_back(rec);
        }
        if (!cfg.freeze_behavior) {
            behavior.uniform = false;
            behavior.snapshot = state.pi;
        }
        if (view.tabular) {
            TabularValue vt = tabular_value_table(state.v, view.mdp->n_states);
            result.v_error_per_episode.push_back(sup_norm(vt - oracle.v));
        }
    }

    if (cfg.randomized_iterate) {
        state.v.params = sel_v;
        state.pi.params = sel_pi;
    }

    EvalResult final_eval =
        view.tabular
            ? evaluate_policy(*view.mdp, state.pi, cfg.eval_episodes, eval_horizon, eval_rng)
            : evaluate_policy(*view.cont, state.pi, cfg.eval_episodes, eval_horizon,
                              eval_rng);
    result.final_avg_return = final_eval.mean;
    result.final_return_half_width = final_eval.half_width;

    if (view.tabular) {
        TabularValue vt = tabular_value_table(state.v, view.mdp->n_states);
        TabularPolicy pt = tabular_policy_table(state.pi, view.mdp->n_states);
        result.final_consistency_residual =
            consistency_residual(*view.mdp, vt, pt, cfg.lambda).max_abs;
    } else {
        result.final_consistency_residual = kNan;
    }
    result.gradient_steps = j_global;
    result.wall_ms_total = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t_start)
                               .count();
    result.dual_param_norm = state.rho.params.norm();
    result.v = std::move(state.v);
    result.pi = std::move(state.pi);
    result.rho = std::move(state.rho);
    return result;
}

TrainResult sdec_train(const SdecConfig& cfg) {
    nlohmann::json params = cfg.env.params;
    params["gamma"] = cfg.gamma;  // single source of truth for the discount
    AnyEnv env = make_benchmark_env(cfg.env.name, params);
    Rng rng = make_rng(cfg.seed);
    return sdec_train(env, cfg, rng);
}

nlohmann::json checkpoint_to_json(const TrainResult& result, const SdecConfig& cfg) {
    return nlohmann::json{{"v", param_function_to_json(result.v)},
                          {"pi", param_function_to_json(result.pi)},
                          {"rho", param_function_to_json(result.rho)},
                          {"lambda", cfg.lambda},
                          {"eta", cfg.eta},
                          {"gamma", cfg.gamma},
                          {"seed", cfg.seed}};
}

}  // namespace sdec
