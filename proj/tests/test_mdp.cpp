#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdec/bellman.hpp"
#include "sdec/mdp.hpp"

using namespace sdec;

namespace {

TabularMdp identity_chain() {
    std::vector<Eigen::MatrixXd> p(1, Eigen::MatrixXd::Ones(1, 1));
    Eigen::MatrixXd r = Eigen::MatrixXd::Ones(1, 1);
    return make_tabular_mdp(1, 1, p, r, Eigen::MatrixXd::Zero(1, 1), 0.9);
}

}  // namespace

TEST_CASE("make_tabular_mdp validates its inputs") {
    CHECK(identity_chain().n_states == 1);
    CHECK(identity_chain().reward_bound == 1.0);

    std::vector<Eigen::MatrixXd> bad_row(1, 0.8 * Eigen::MatrixXd::Ones(1, 1));
    CHECK_THROWS_AS(make_tabular_mdp(1, 1, bad_row, Eigen::MatrixXd::Ones(1, 1),
                                     Eigen::MatrixXd::Zero(1, 1), 0.9),
                    NonStochasticRow);

    std::vector<Eigen::MatrixXd> p(1, Eigen::MatrixXd::Ones(1, 1));
    CHECK_THROWS_AS(make_tabular_mdp(1, 1, p, Eigen::MatrixXd::Ones(1, 1),
                                     Eigen::MatrixXd::Zero(1, 1), 1.0),
                    GammaOutOfRange);
    CHECK_THROWS_AS(make_tabular_mdp(1, 1, p, Eigen::MatrixXd::Ones(1, 1),
                                     Eigen::MatrixXd::Zero(1, 1), 0.0),
                    GammaOutOfRange);

    std::vector<Eigen::MatrixXd> neg(1, Eigen::MatrixXd::Ones(2, 2));
    neg[0] << 1.5, -0.5, 0.5, 0.5;
    CHECK_THROWS_AS(make_tabular_mdp(2, 1, neg, Eigen::MatrixXd::Ones(2, 1),
                                     Eigen::MatrixXd::Zero(2, 1), 0.9),
                    NegativeProbability);
}

TEST_CASE("every benchmark constructor yields stochastic rows") {
    std::vector<TabularMdp> envs;
    envs.push_back(make_chain(5));
    envs.push_back(make_gridworld(4, 4, 0.2));
    envs.push_back(make_cliff());
    envs.push_back(make_random_mdp(20, 4, 7));
    for (const auto& mdp : envs) {
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s = 0; s < mdp.n_states; ++s) {
                CHECK(mdp.transition[a].row(s).minCoeff() >= 0.0);
                CHECK(std::abs(mdp.transition[a].row(s).sum() - 1.0) <= 1e-12);
            }
    }
}

TEST_CASE("benchmark dispatch") {
    AnyEnv chain = make_benchmark_env("chain", {{"n", 5}});
    const auto& mdp = std::get<TabularMdp>(chain);
    CHECK(mdp.n_states == 5);
    CHECK(mdp.n_actions == 2);
    CHECK(mdp.reward(4, 1) == 1.0);  // reward at the right end
    CHECK(mdp.reward.sum() == 1.0);

    AnyEnv pend = make_benchmark_env("toy_pendulum", {{"dt", 0.05}});
    const auto& env = *std::get<std::shared_ptr<const ContinuousEnv>>(pend);
    CHECK(env.state_dim() == 2);
    CHECK(env.action_dim() == 1);

    CHECK_THROWS_AS(make_benchmark_env("mountain_car"), UnknownEnvironment);
    CHECK_THROWS_AS(make_benchmark_env("chain", {{"n", 1}}), BadParams);
}

TEST_CASE("random_mdp is deterministic under its seed") {
    TabularMdp a = make_random_mdp(20, 4, 7);
    TabularMdp b = make_random_mdp(20, 4, 7);
    TabularMdp c = make_random_mdp(20, 4, 8);
    CHECK((a.reward - b.reward).cwiseAbs().maxCoeff() == 0.0);
    for (int k = 0; k < 4; ++k)
        CHECK((a.transition[k] - b.transition[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.reward - c.reward).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("rollout basics") {
    TabularMdp chain = make_chain(3, 0.9);
    Rng rng = make_rng(1);
    auto always_right = [](int, Rng&) { return 1; };

    Trajectory empty = rollout(chain, always_right, 0, rng);
    CHECK(empty.size() == 0);

    Trajectory traj = rollout(chain, always_right, 2, rng, /*start_state=*/0);
    REQUIRE(traj.size() == 2);
    CHECK(traj.steps[0].state_index() == 0);
    CHECK(traj.steps[0].next_state_index() == 1);
    CHECK(traj.steps[1].next_state_index() == 2);
    CHECK(traj.chained());

    auto bad = [](int, Rng&) { return 9; };
    CHECK_THROWS_AS(rollout(chain, bad, 1, rng, 0), InvalidAction);
}

TEST_CASE("rollout with identical seeds is bit-identical") {
    TabularMdp mdp = make_random_mdp(10, 3, 5, 1.0, 0.3, 0.9);
    auto uniform = [&](int, Rng& r) {
        std::uniform_int_distribution<int> pick(0, mdp.n_actions - 1);
        return pick(r);
    };
    Rng r1 = make_rng(99), r2 = make_rng(99);
    Trajectory t1 = rollout(mdp, uniform, 50, r1);
    Trajectory t2 = rollout(mdp, uniform, 50, r2);
    REQUIRE(t1.size() == t2.size());
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1.steps[i].s == t2.steps[i].s);
        CHECK(t1.steps[i].a == t2.steps[i].a);
        CHECK(t1.steps[i].r == t2.steps[i].r);
    }
}

// Power-iteration oracle for the stationary distribution of the induced chain.
TEST_CASE("uniform-policy chain visits match the stationary distribution") {
    TabularMdp chain = make_chain(5, 0.9);
    TabularPolicy uniform;
    uniform.probs = Eigen::MatrixXd::Constant(5, 2, 0.5);
    Eigen::MatrixXd p = induced_chain(chain, uniform);
    Eigen::RowVectorXd dist = Eigen::RowVectorXd::Constant(5, 0.2);
    for (int it = 0; it < 100000; ++it) dist = dist * p;

    auto sampler = [](int, Rng& r) {
        std::uniform_int_distribution<int> pick(0, 1);
        return pick(r);
    };
    Rng rng = make_rng(13);
    Trajectory traj = rollout(chain, sampler, 100, rng);  // uniform initial state
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(5);
    for (const auto& t : traj.steps) freq[t.state_index()] += 1.0;
    freq /= static_cast<double>(traj.size());
    for (int s = 0; s < 5; ++s) CHECK(std::abs(freq[s] - dist[s]) <= 0.05);
}

TEST_CASE("replay buffer keeps FIFO order and caps its size") {
    ReplayBuffer<int> buf(2);
    replay_push(buf, 1);
    replay_push(buf, 2);
    replay_push(buf, 3);
    CHECK(buf.size() == 2);
    auto items = buf.ordered_items();
    CHECK(items == std::vector<int>{2, 3});

    for (int i = 0; i < 100; ++i) replay_push(buf, i);
    CHECK(buf.size() == 2);
    CHECK(buf.ordered_items() == std::vector<int>{98, 99});

    Rng rng = make_rng(0);
    CHECK(replay_sample(buf, 0, rng).empty());
    ReplayBuffer<int> empty(4);
    CHECK_THROWS_AS(replay_sample(empty, 1, rng), EmptyBuffer);
    CHECK_THROWS_AS(buf.sample_without_replacement(3, rng), SampleTooLarge);
    CHECK_THROWS_AS(ReplayBuffer<int>(0), BadParams);
}

TEST_CASE("replay sampling is deterministic under a fixed seed") {
    ReplayBuffer<int> buf(100);
    for (int i = 0; i < 100; ++i) replay_push(buf, i);
    Rng r1 = make_rng(17), r2 = make_rng(17);
    CHECK(buf.sample(32, r1) == buf.sample(32, r2));
}

// Binomial confidence oracle: every item frequency within 3 sigma of 1/n.
TEST_CASE("uniform replay sampling frequencies") {
    const int n = 1000;
    const int draws = 100000;
    ReplayBuffer<int> buf(n);
    for (int i = 0; i < n; ++i) replay_push(buf, i);
    Rng rng = make_rng(32);
    std::vector<int> counts(n, 0);
    for (int v : buf.sample(draws, rng)) ++counts[v];
    const double p = 1.0 / n;
    const double sigma = std::sqrt(p * (1.0 - p) / draws);
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(counts[i] / double(draws) - p));
    CHECK(worst <= 3.0 * sigma);
}

TEST_CASE("tabular mdp JSON round-trip is bit-exact") {
    TabularMdp mdp = make_random_mdp(8, 3, 11, 0.6, 0.25, 0.93);
    nlohmann::json j = mdp_to_json(mdp);
    std::string text = j.dump();
    TabularMdp back = mdp_from_json(nlohmann::json::parse(text));
    CHECK(back.gamma == mdp.gamma);
    for (int a = 0; a < 3; ++a)
        CHECK((back.transition[a] - mdp.transition[a]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.reward - mdp.reward).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.reward_noise_std - mdp.reward_noise_std).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("toy pendulum step is pure and torque-bounded") {
    ToyPendulum env;
    Rng r1 = make_rng(3), r2 = make_rng(3);
    Eigen::VectorXd s0 = env.initial_state(r1);
    CHECK(s0 == env.initial_state(r2));

    Eigen::VectorXd a(1);
    a << 100.0;  // clamped to max torque inside step
    auto [s1, rew1] = env.step(s0, a, r1);
    Eigen::VectorXd a2(1);
    a2 << env.params().max_torque;
    auto [s2, rew2] = env.step(s0, a2, r2);
    CHECK(s1 == s2);
    CHECK(std::abs(s1[0]) <= 3.1415926535897932 + 1e-12);
    // cosine-shaped reward on the successor angle, minus the torque cost
    CHECK(rew2 ==
          doctest::Approx(std::cos(s1[0]) -
                          env.params().torque_cost * a2[0] * a2[0]).epsilon(1e-12));
}
