#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdec/saddle.hpp"
#include "sdec/train.hpp"

using namespace sdec;

namespace {

SaddleState tabular_state(const TabularMdp& mdp, double lambda, double eta) {
    SaddleState st;
    st.lambda = lambda;
    st.eta = eta;
    st.gamma = mdp.gamma;
    st.v = make_value_function(FeatureMap::tabular({mdp.n_states}));
    st.pi = make_discrete_policy(FeatureMap::tabular({mdp.n_states}), mdp.n_actions);
    st.rho = make_dual_function(FeatureMap::tabular({mdp.n_states, mdp.n_actions}));
    return st;
}

void randomize(SaddleState& st, std::uint64_t seed, double scale = 0.5) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    for (int i = 0; i < st.v.n_params(); ++i) st.v.params[i] = normal(rng);
    for (int i = 0; i < st.pi.n_params(); ++i) st.pi.params[i] = normal(rng);
    for (int i = 0; i < st.rho.n_params(); ++i) st.rho.params[i] = normal(rng);
}

// all (s,a,s') transitions weighted by P, rewards at expectation
void enumerate_batch(const TabularMdp& mdp, std::vector<Transition>& batch,
                     std::vector<double>& weights) {
    batch.clear();
    weights.clear();
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                double p = mdp.prob(s, a, s2);
                if (p == 0.0) continue;
                batch.push_back(
                    {scalar_vec(s), scalar_vec(a), mdp.reward(s, a), scalar_vec(s2)});
                weights.push_back(p / (mdp.n_states * mdp.n_actions));
            }
}

// 2 states, 1 action, next state uniform over both, rewards zero
TabularMdp two_outcome() {
    std::vector<Eigen::MatrixXd> p(1, Eigen::MatrixXd::Constant(2, 2, 0.5));
    return make_tabular_mdp(2, 1, p, Eigen::MatrixXd::Zero(2, 1),
                            Eigen::MatrixXd::Zero(2, 1), 0.5);
}

// naive double-loop oracle, written independently of the library path
double naive_consistency_loss(const TabularMdp& mdp, const Eigen::VectorXd& v,
                              const TabularPolicy& pi, double lambda) {
    double total = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            double inner = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2)
                inner += mdp.prob(s, a, s2) * v[s2];
            double res = mdp.reward(s, a) + mdp.gamma * inner -
                         lambda * std::log(pi.probs(s, a)) - v[s];
            total += res * res;
        }
    return total / (mdp.n_states * mdp.n_actions);
}

}  // namespace

TEST_CASE("delta_one_step worked values") {
    TabularMdp chain = make_chain(3, 0.9);
    SaddleState st = tabular_state(chain, 1.0, 1.0);
    st.v.params << 0.0, 10.0, 0.0;

    // pi(a|s) = 1 in effect: single dominant logit
    Transition t{scalar_vec(0), scalar_vec(1), 1.0, scalar_vec(1)};
    st.pi.params.setZero();
    st.lambda = 0.0;  // strip the policy term first: r + gamma V(s')
    CHECK(delta_one_step(st, t) == doctest::Approx(1.0 + 0.9 * 10.0).epsilon(1e-15));

    // uniform policy over 2 actions, lambda = 1: r + gamma V' + log 2
    st.lambda = 1.0;
    SaddleState half = tabular_state(chain, 1.0, 1.0);
    half.gamma = 0.5;
    half.v.params << 0.0, 4.0, 0.0;
    Transition t2{scalar_vec(0), scalar_vec(1), 0.0, scalar_vec(1)};
    CHECK(delta_one_step(half, t2) ==
          doctest::Approx(2.0 + std::log(2.0)).epsilon(1e-14));
    CHECK(delta_one_step(half, t2) == doctest::Approx(2.6931471805599454).epsilon(1e-14));

    // log 1 = 0: deterministic policy contributes nothing
    ParamFunction sharp = half.pi;
    sharp.params[1 * 3 + 0] = 200.0;  // logit(a=1 | s=0) dominates
    half.pi = sharp;
    Transition t3{scalar_vec(0), scalar_vec(1), 1.0, scalar_vec(1)};
    half.gamma = 0.9;
    half.v.params << 0.0, 10.0, 0.0;
    CHECK(delta_one_step(half, t3) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("exact losses at and away from the fixed point") {
    TabularMdp mdp = make_random_mdp(8, 3, 42);
    const double lambda = 0.1;
    FixedPointResult fp = solve_fixed_point(mdp, lambda);
    TabularPolicy pi_star = smoothed_optimal_policy(mdp, fp.v, lambda);
    CHECK(consistency_loss_exact(mdp, fp.v, pi_star, lambda) <= 1e-16);

    // single-action MDP: a constant shift c leaves residual -(1-gamma) c everywhere
    std::vector<Eigen::MatrixXd> p(1, Eigen::MatrixXd::Constant(3, 3, 1.0 / 3));
    TabularMdp single = make_tabular_mdp(3, 1, p, Eigen::MatrixXd::Ones(3, 1),
                                         Eigen::MatrixXd::Zero(3, 1), 0.9);
    TabularPolicy certain;
    certain.probs = Eigen::MatrixXd::Ones(3, 1);
    TabularValue v_pi = policy_evaluation(single, certain);
    const double c = 0.7;
    TabularValue shifted = v_pi.array() + c;
    double expected = (1.0 - single.gamma) * c * (1.0 - single.gamma) * c;
    CHECK(consistency_loss_exact(single, shifted, certain, 0.3) ==
          doctest::Approx(expected).epsilon(1e-12));

    // arbitrary (V, pi) against the double-loop oracle
    Rng rng = make_rng(3);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd v(8);
        for (int s = 0; s < 8; ++s) v[s] = unit(rng);
        TabularPolicy pi = smoothed_optimal_policy(mdp, v, 0.7);
        CHECK(consistency_loss_exact(mdp, v, pi, lambda) ==
              doctest::Approx(naive_consistency_loss(mdp, v, pi, lambda)).epsilon(1e-12));
    }
}

TEST_CASE("surrogate equals the consistency loss without next-state variance") {
    // deterministic transitions
    TabularMdp chain = make_chain(5, 0.9);
    Rng rng = make_rng(4);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::VectorXd v(5);
    for (int s = 0; s < 5; ++s) v[s] = unit(rng);
    TabularPolicy pi = smoothed_optimal_policy(chain, v, 0.5);
    CHECK(surrogate_loss_exact(chain, v, pi, 0.5) ==
          doctest::Approx(consistency_loss_exact(chain, v, pi, 0.5)).epsilon(1e-13));

    // constant V on a stochastic MDP
    TabularMdp rand = make_random_mdp(6, 2, 9);
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(6, 1.3);
    TabularPolicy pi2 = smoothed_optimal_policy(rand, flat, 0.5);
    CHECK(surrogate_loss_exact(rand, flat, pi2, 0.5) ==
          doctest::Approx(consistency_loss_exact(rand, flat, pi2, 0.5)).epsilon(1e-13));

    // two-outcome MDP: extra variance is exactly 0.25
    TabularMdp two = two_outcome();
    Eigen::VectorXd v01(2);
    v01 << 0.0, 2.0;
    TabularPolicy one;
    one.probs = Eigen::MatrixXd::Ones(2, 1);
    double f = consistency_loss_exact(two, v01, one, 0.3);
    double f_sur = surrogate_loss_exact(two, v01, one, 0.3);
    CHECK(f_sur - f == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("variance identity") {
    // deterministic: variance term zero, defect at machine precision
    TabularMdp chain = make_chain(4, 0.9);
    Rng rng = make_rng(6);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::VectorXd v(4);
    for (int s = 0; s < 4; ++s) v[s] = unit(rng);
    TabularPolicy pi = smoothed_optimal_policy(chain, v, 0.4);
    VarianceIdentity det = variance_identity_check(chain, v, pi, 0.4);
    CHECK(det.variance_term == 0.0);
    CHECK(det.defect <= 1e-14);

    // worked two-outcome value
    TabularMdp two = two_outcome();
    Eigen::VectorXd v01(2);
    v01 << 0.0, 2.0;
    TabularPolicy one;
    one.probs = Eigen::MatrixXd::Ones(2, 1);
    VarianceIdentity worked = variance_identity_check(two, v01, one, 0.3);
    CHECK(worked.variance_term == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(worked.defect <= 1e-14);
    CHECK(worked.dual_maximizer_gap <= 1e-14);

    // random stochastic MDPs
    for (int trial = 0; trial < 10; ++trial) {
        TabularMdp mdp = make_random_mdp(10, 3, 300 + trial);
        Eigen::VectorXd rv(10);
        for (int s = 0; s < 10; ++s) rv[s] = unit(rng);
        TabularPolicy rp = smoothed_optimal_policy(mdp, rv, 0.6);
        VarianceIdentity id = variance_identity_check(mdp, rv, rp, 0.2);
        CHECK(id.defect <= 1e-12);
        CHECK(id.dual_maximizer_gap <= 1e-12);
    }
}

TEST_CASE("batch objective") {
    TabularMdp mdp = make_random_mdp(5, 2, 12, 1.0, 0.1, 0.9);
    SaddleState st = tabular_state(mdp, 0.2, 0.0);
    randomize(st, 77);

    Rng rng = make_rng(13);
    std::uniform_int_distribution<int> pick(0, 1);
    Trajectory traj = rollout(
        mdp, [&](int, Rng& r) { return pick(r); }, 64, rng);
    std::vector<Transition> batch = traj.steps;

    // eta = 0 keeps only the first term
    ObjectiveTerms terms = saddle_objective_terms(st, batch);
    CHECK(saddle_objective_eta(st, batch) == terms.first_term);

    // perfect dual on a deterministic batch: second term vanishes
    TabularMdp chain = make_chain(4, 0.9);
    SaddleState cs = tabular_state(chain, 0.2, 1.0);
    randomize(cs, 5);
    Trajectory ctraj = rollout(
        chain, [&](int, Rng& r) { return pick(r); }, 40, rng);
    fit_dual(cs, ctraj.steps);  // tabular dual interpolates deterministic deltas
    ObjectiveTerms cterms = saddle_objective_terms(cs, ctraj.steps);
    CHECK(cterms.second_term <= 1e-12);
    CHECK(saddle_objective_eta(cs, ctraj.steps) ==
          doctest::Approx(cterms.first_term).epsilon(1e-12));

    // independent re-summation oracle
    double first = 0.0, second = 0.0;
    for (const Transition& t : batch) {
        double delta = delta_one_step(st, t);
        double vs = eval_value(st.v, t.s).value;
        double rho = eval_dual(st.rho, t.s, t.a).value;
        first += (delta - vs) * (delta - vs);
        second += (delta - rho) * (delta - rho);
    }
    first /= batch.size();
    second /= batch.size();
    st.eta = 0.37;
    CHECK(saddle_objective_eta(st, batch) ==
          doctest::Approx(first - 0.37 * second).epsilon(1e-12));

    // affine interpolation in eta between the surrogate and the saddle objective
    SaddleState e0 = st, e1 = st, eh = st;
    e0.eta = 0.0;
    e1.eta = 1.0;
    eh.eta = 0.25;
    double l0 = saddle_objective_eta(e0, batch);
    double l1 = saddle_objective_eta(e1, batch);
    CHECK(saddle_objective_eta(eh, batch) ==
          doctest::Approx(0.75 * l0 + 0.25 * l1).epsilon(1e-12));

    CHECK_THROWS_AS(saddle_objective_eta(st, {}), EmptyBatch);
}

TEST_CASE("dual fitting") {
    // deterministic environment: tabular dual interpolates exactly
    TabularMdp chain = make_chain(5, 0.9);
    SaddleState st = tabular_state(chain, 0.1, 1.0);
    randomize(st, 21);
    Rng rng = make_rng(2);
    std::uniform_int_distribution<int> pick(0, 1);
    Trajectory traj = rollout(
        chain, [&](int, Rng& r) { return pick(r); }, 60, rng);
    DualFitResult fit = fit_dual(st, traj.steps);
    CHECK(fit.loss <= 1e-12);
    for (const Transition& t : traj.steps)
        CHECK(eval_dual(st.rho, t.s, t.a).value ==
              doctest::Approx(delta_one_step(st, t)).epsilon(1e-7));

    // two samples at one (s,a) with deltas 1 and 3 fit their mean
    SaddleState tiny = tabular_state(chain, 0.1, 1.0);
    tiny.lambda = 0.0;
    tiny.v.params.setZero();
    std::vector<Transition> pair = {
        {scalar_vec(0), scalar_vec(1), 1.0, scalar_vec(1)},
        {scalar_vec(0), scalar_vec(1), 3.0, scalar_vec(1)},
    };
    fit_dual(tiny, pair);
    CHECK(eval_dual(tiny.rho, scalar_vec(0), scalar_vec(1)).value ==
          doctest::Approx(2.0).epsilon(1e-7));

    // first-order stationarity of the exact solve (ridge disabled)
    TabularMdp mdp = make_random_mdp(6, 2, 33, 1.0, 0.2, 0.9);
    SaddleState rs = tabular_state(mdp, 0.1, 1.0);
    randomize(rs, 8);
    std::vector<Transition> batch;
    std::vector<double> weights;
    enumerate_batch(mdp, batch, weights);
    fit_dual(rs, batch, weights, /*ridge=*/0.0);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(rs.rho.n_params());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Eval e = eval_dual(rs.rho, batch[i].s, batch[i].a);
        grad += weights[i] * 2.0 * (e.value - delta_one_step(rs, batch[i])) * e.grad;
        total += weights[i];
    }
    CHECK((grad / total).lpNorm<Eigen::Infinity>() <= 1e-8);

    // refitting the same batch cannot increase the dual loss
    SaddleState twice = rs;
    double before = saddle_objective_terms(twice, batch, weights).second_term;
    DualFitResult refit = fit_dual(twice, batch, weights);
    CHECK(refit.loss <= before + 1e-12);

    // rank-deficient system without ridge
    SaddleState sing = tabular_state(chain, 0.1, 1.0);
    CHECK_THROWS_AS(fit_dual(sing, pair, {}, 0.0), SingularSystem);
    CHECK_THROWS_AS(fit_dual(sing, {}), EmptyBatch);
}

TEST_CASE("tabular dual means stay within 3 standard errors of rho*") {
    TabularMdp mdp = make_random_mdp(6, 2, 55, 1.0, 0.3, 0.9);
    SaddleState st = tabular_state(mdp, 0.15, 1.0);
    randomize(st, 14, 0.3);

    Rng rng = make_rng(100);
    std::uniform_int_distribution<int> pick(0, 1);
    std::vector<Transition> batch;
    for (int k = 0; k < 100000; ++k) {
        Trajectory t = rollout(
            mdp, [&](int, Rng& r) { return pick(r); }, 1, rng);
        batch.push_back(t.steps[0]);
    }
    fit_dual(st, batch);

    // closed-form population minimizer rho*(s,a) = R + gamma E[V'] - lambda log pi
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(6, 2);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(6, 2);
    Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(6, 2);
    for (const Transition& t : batch) {
        double d = delta_one_step(st, t);
        counts(t.state_index(), t.action_index()) += 1.0;
        sums(t.state_index(), t.action_index()) += d;
        sumsq(t.state_index(), t.action_index()) += d * d;
    }
    for (int s = 0; s < 6; ++s)
        for (int a = 0; a < 2; ++a) {
            double mean_next = 0.0;
            for (int s2 = 0; s2 < 6; ++s2)
                mean_next += mdp.prob(s, a, s2) * eval_value(st.v, scalar_vec(s2)).value;
            double rho_star =
                mdp.reward(s, a) + mdp.gamma * mean_next -
                st.lambda * eval_log_policy(st.pi, scalar_vec(s), scalar_vec(a)).value;
            double n = counts(s, a);
            REQUIRE(n > 1);
            double mean = sums(s, a) / n;
            double sd = std::sqrt((sumsq(s, a) / n - mean * mean) * n / (n - 1.0));
            double fitted = eval_dual(st.rho, scalar_vec(s), scalar_vec(a)).value;
            CHECK(std::abs(fitted - rho_star) <= 3.0 * sd / std::sqrt(n) + 1e-9);
        }
}

TEST_CASE("sgd dual fit approaches the closed form") {
    TabularMdp mdp = make_random_mdp(4, 2, 70, 1.0, 0.1, 0.9);
    SaddleState st = tabular_state(mdp, 0.1, 1.0);
    randomize(st, 31);
    Rng rng = make_rng(1);
    std::uniform_int_distribution<int> pick(0, 1);
    Trajectory traj = rollout(
        mdp, [&](int, Rng& r) { return pick(r); }, 200, rng);
    SaddleState exact = st;
    DualFitResult closed = fit_dual(exact, traj.steps);
    DualFitResult sgd = fit_dual_sgd(st, traj.steps, 4000, 0.5);
    CHECK(sgd.loss <= closed.loss + 1e-4);
}

TEST_CASE("gradient estimators match finite differences of L_eta") {
    TabularMdp mdp = make_random_mdp(4, 3, 90, 0.8, 0.0, 0.9);
    std::vector<Transition> batch;
    std::vector<double> weights;
    enumerate_batch(mdp, batch, weights);
    for (double eta : {0.0, 0.5, 1.0}) {
        SaddleState st = tabular_state(mdp, 0.1, eta);
        randomize(st, 400 + static_cast<int>(10 * eta));
        fit_dual(st, batch, weights);
        Eigen::VectorXd gv = grad_V_estimator(st, batch, weights);
        Eigen::VectorXd gp = grad_pi_estimator(st, batch, weights);
        const double eps = 1e-5;
        for (int i = 0; i < st.v.n_params(); ++i) {
            SaddleState up = st, down = st;
            up.v.params[i] += eps;
            down.v.params[i] -= eps;
            double fd = (saddle_objective_eta(up, batch, weights) -
                         saddle_objective_eta(down, batch, weights)) /
                        (2 * eps);
            CHECK(std::abs(fd - gv[i]) / std::max(1.0, std::abs(fd)) <= 1e-4);
        }
        for (int i = 0; i < st.pi.n_params(); ++i) {
            SaddleState up = st, down = st;
            up.pi.params[i] += eps;
            down.pi.params[i] -= eps;
            double fd = (saddle_objective_eta(up, batch, weights) -
                         saddle_objective_eta(down, batch, weights)) /
                        (2 * eps);
            CHECK(std::abs(fd - gp[i]) / std::max(1.0, std::abs(fd)) <= 1e-4);
        }
    }
}

TEST_CASE("policy gradient at eta = 1 uses only the dual advantage") {
    TabularMdp mdp = make_random_mdp(5, 2, 95);
    SaddleState st = tabular_state(mdp, 0.2, 1.0);
    randomize(st, 19);
    std::vector<Transition> batch;
    std::vector<double> weights;
    enumerate_batch(mdp, batch, weights);
    fit_dual(st, batch, weights);

    Eigen::VectorXd expected = Eigen::VectorXd::Zero(st.pi.n_params());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = batch[i];
        Eval lp = eval_log_policy(st.pi, t.s, t.a);
        double rho = eval_dual(st.rho, t.s, t.a).value;
        double vs = eval_value(st.v, t.s).value;
        expected -= weights[i] * 2.0 * st.lambda * (rho - vs) * lp.grad;
        total += weights[i];
    }
    expected /= total;
    Eigen::VectorXd got = grad_pi_estimator(st, batch, weights);
    CHECK((got - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("gradients vanish at the smoothed optimum") {
    TabularMdp mdp = make_random_mdp(5, 3, 101);
    const double lambda = 0.07;
    FixedPointResult fp = solve_fixed_point(mdp, lambda);
    TabularPolicy pi_star = smoothed_optimal_policy(mdp, fp.v, lambda);

    SaddleState st = tabular_state(mdp, lambda, 1.0);
    st.v.params = fp.v;
    for (int s = 0; s < 5; ++s)
        for (int a = 0; a < 3; ++a)
            st.pi.params[a * 5 + s] = std::log(pi_star.probs(s, a));

    std::vector<Transition> batch;
    std::vector<double> weights;
    enumerate_batch(mdp, batch, weights);
    fit_dual(st, batch, weights, /*ridge=*/0.0);
    CHECK(grad_V_estimator(st, batch, weights).norm() <= 1e-8);
    CHECK(grad_pi_estimator(st, batch, weights).norm() <= 1e-8);
}

TEST_CASE("delta dump writes one row per sample") {
    TabularMdp mdp = make_random_mdp(4, 2, 77);
    SaddleState st = tabular_state(mdp, 0.1, 1.0);
    randomize(st, 5);
    Rng rng = make_rng(6);
    std::uniform_int_distribution<int> pick(0, 1);
    Trajectory traj = rollout(
        mdp, [&](int, Rng& r) { return pick(r); }, 10, rng);
    std::string path = (std::filesystem::temp_directory_path() / "sdec_deltas.csv").string();
    dump_deltas_csv(st, traj.steps, path);
    std::ifstream f(path);
    std::string line;
    int rows = 0;
    std::getline(f, line);
    CHECK(line == "s,a,r,s_next,delta,delta_minus_v,delta_minus_rho");
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 10);
    std::filesystem::remove(path);
}

TEST_CASE("multi-step delta") {
    // T = 0 reduces to the one-step delta (already covered on random data by
    // the check suite; nail the worked values here)
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
    CHECK(delta_multi_step(ws, seg, 1) ==
          doctest::Approx(1.5 * std::log(2.0) + 1.0).epsilon(1e-12));
    CHECK(delta_multi_step(ws, seg, 1) == doctest::Approx(2.0397207708399179).epsilon(1e-9));

    // lambda = 0, unit rewards, gamma = 0.5, T = 2, V(s3) = 0 -> 1.75
    SaddleState geo = ws;
    geo.lambda = 0.0;
    geo.v.params.setZero();
    Trajectory three;
    three.steps = {{scalar_vec(0), scalar_vec(0), 1.0, scalar_vec(1)},
                   {scalar_vec(1), scalar_vec(0), 1.0, scalar_vec(2)},
                   {scalar_vec(2), scalar_vec(0), 1.0, scalar_vec(0)}};
    CHECK(delta_multi_step(geo, three, 2) == doctest::Approx(1.75).epsilon(1e-14));

    CHECK_THROWS_AS(delta_multi_step(ws, seg, 2), SegmentTooShort);
}

TEST_CASE("trace delta") {
    SaddleState st;
    st.lambda = 0.0;
    st.eta = 1.0;
    st.gamma = 1.0;  // undiscounted: delta_T = T + 1 with unit rewards, V = 0
    st.v = make_value_function(FeatureMap::tabular({5}));
    st.pi = make_discrete_policy(FeatureMap::tabular({5}), 2);
    st.rho = make_dual_function(FeatureMap::tabular({5, 2}));
    Trajectory traj;
    for (int t = 0; t < 4; ++t)
        traj.steps.push_back({scalar_vec(t), scalar_vec(0), 1.0, scalar_vec(t + 1)});

    CHECK(delta_trace(st, traj, 0.5, 3) == doctest::Approx(26.0 / 15.0).epsilon(1e-12));
    CHECK(delta_trace(st, traj, 0.0, 0) == delta_multi_step(st, traj, 0));

    // equal multi-step deltas: the mixture returns the common value
    SaddleState flat = st;
    flat.gamma = 0.5;
    flat.v.params.setConstant(2.0);  // delta_T = sum gamma^t + gamma^{T+1} * 2 = 2
    CHECK(delta_trace(flat, traj, 0.7, 3) == doctest::Approx(2.0).epsilon(1e-12));

    CHECK_THROWS_AS(delta_trace(st, traj, 1.0, 2), ZetaOutOfRange);
    CHECK_THROWS_AS(delta_trace(st, traj, -0.1, 2), ZetaOutOfRange);
    CHECK_THROWS_AS(delta_trace(st, traj, 0.5, 9), TrajectoryTooShort);
}

TEST_CASE("segment estimators match finite differences in trace mode") {
    TabularMdp mdp = make_random_mdp(4, 2, 111, 1.0, 0.1, 0.9);
    SaddleState st = tabular_state(mdp, 0.15, 0.5);
    st.rho = make_dual_function(FeatureMap::tabular({4, 2, 2, 2}));
    randomize(st, 77);

    Rng rng = make_rng(7);
    std::uniform_int_distribution<int> pick(0, 1);
    std::vector<Trajectory> segments;
    for (int k = 0; k < 12; ++k)
        segments.push_back(rollout(
            mdp, [&](int, Rng& r) { return pick(r); }, 3, rng));
    SegmentMode mode{2, 0.6};

    fit_dual_segments(st, segments, mode);
    Eigen::VectorXd gv = grad_V_estimator_segments(st, segments, mode);
    Eigen::VectorXd gp = grad_pi_estimator_segments(st, segments, mode);
    auto objective = [&](const SaddleState& s) {
        return saddle_objective_terms_segments(s, segments, mode).objective(s.eta);
    };
    const double eps = 1e-5;
    for (int i = 0; i < st.v.n_params(); ++i) {
        SaddleState up = st, down = st;
        up.v.params[i] += eps;
        down.v.params[i] -= eps;
        double fd = (objective(up) - objective(down)) / (2 * eps);
        CHECK(std::abs(fd - gv[i]) / std::max(1.0, std::abs(fd)) <= 1e-4);
    }
    for (int i = 0; i < st.pi.n_params(); ++i) {
        SaddleState up = st, down = st;
        up.pi.params[i] += eps;
        down.pi.params[i] -= eps;
        double fd = (objective(up) - objective(down)) / (2 * eps);
        CHECK(std::abs(fd - gp[i]) / std::max(1.0, std::abs(fd)) <= 1e-4);
    }
}
