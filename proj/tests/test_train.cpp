#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdec/metrics.hpp"
#include "sdec/train.hpp"

using namespace sdec;

namespace {

SdecConfig chain_config() {
    SdecConfig cfg;
    cfg.lambda = 0.01;
    cfg.eta = 1.0;
    cfg.gamma = 0.9;
    cfg.env.name = "chain";
    cfg.env.params = {{"n", 5}};
    cfg.decay = "constant";
    cfg.zeta0 = 0.5;
    cfg.zeta0_pi = 50.0;
    cfg.episodes = 6;
    cfg.inner_iters = 400;
    cfg.collect_per_episode = 64;
    cfg.batch_size = 32;
    cfg.rollout_horizon = 16;
    cfg.replay_capacity = 4096;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("invalid configs are rejected before any update") {
    SdecConfig cfg = chain_config();
    cfg.collect_per_episode = 0;  // no collection, replay would stay empty
    CHECK_THROWS_AS(sdec_train(cfg), ConfigInvalid);

    SdecConfig bad_eta = chain_config();
    bad_eta.eta = 1.5;
    CHECK_THROWS_AS(sdec_train(bad_eta), ConfigInvalid);

    // environment discount must agree with the config
    SdecConfig cfg2 = chain_config();
    AnyEnv env = make_benchmark_env("chain", {{"n", 5}, {"gamma", 0.8}});
    Rng rng = make_rng(cfg2.seed);
    CHECK_THROWS_AS(sdec_train(env, cfg2, rng), ConfigInvalid);
}

TEST_CASE("training drives the tabular error down on chain(5)") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 20;
    TrainResult r = sdec_train(cfg);
    CHECK(r.gradient_steps == 8000);
    CHECK(static_cast<long long>(r.metrics.size()) == r.gradient_steps);
    REQUIRE(!r.v_error_per_episode.empty());
    CHECK(r.v_error_per_episode.back() < r.v_error_per_episode.front());
    CHECK(r.v_error_per_episode.back() <= 0.6);

    // metric invariants: iterations strictly increasing, finite losses,
    // NaN-coded columns where not evaluated
    long long prev = 0;
    for (const auto& m : r.metrics) {
        CHECK(m.iteration > prev);
        prev = m.iteration;
        CHECK(std::isfinite(m.objective_L_eta));
        CHECK(std::isfinite(m.dual_loss));
        CHECK(std::isfinite(m.grad_norm_V));
        CHECK(std::isfinite(m.grad_norm_pi));
        CHECK(std::isnan(m.avg_return));  // eval_every = 0
        CHECK(std::isfinite(m.consistency_residual));
        CHECK(std::isnan(m.wall_ms));  // timing disabled by default
    }
}

TEST_CASE("two runs with the same seed produce bit-identical metrics") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 3;
    cfg.eval_every = 100;
    TrainResult a = sdec_train(cfg);
    TrainResult b = sdec_train(cfg);
    CHECK(metrics_to_csv(a.metrics) == metrics_to_csv(b.metrics));
    CHECK(a.v.params == b.v.params);
    CHECK(a.pi.params == b.pi.params);

    SdecConfig other = cfg;
    other.seed = 43;
    TrainResult c = sdec_train(other);
    CHECK(metrics_to_csv(a.metrics) != metrics_to_csv(c.metrics));
}

TEST_CASE("a frozen uniform behavior policy still learns (off-policy)") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 40;
    cfg.inner_iters = 500;
    cfg.freeze_behavior = true;
    cfg.behavior_init = "uniform";
    TrainResult r = sdec_train(cfg);
    // the full-budget 0.1 bound is exercised by the acceptance suite
    CHECK(r.v_error_per_episode.back() <= 2.0);
    CHECK(r.v_error_per_episode.back() <= 0.25 * r.v_error_per_episode.front());
}

TEST_CASE("the segment path at T=0, zeta=0 reproduces the one-step metrics") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 3;
    SdecConfig forced = cfg;
    forced.force_segment_path = true;
    TrainResult a = sdec_train(cfg);
    TrainResult b = sdec_train(forced);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        CHECK(std::abs(a.metrics[i].objective_L_eta - b.metrics[i].objective_L_eta) <= 1e-12);
        CHECK(std::abs(a.metrics[i].first_term - b.metrics[i].first_term) <= 1e-12);
        CHECK(std::abs(a.metrics[i].second_term - b.metrics[i].second_term) <= 1e-12);
        CHECK(std::abs(a.metrics[i].dual_loss - b.metrics[i].dual_loss) <= 1e-12);
        CHECK(std::abs(a.metrics[i].grad_norm_V - b.metrics[i].grad_norm_V) <= 1e-12);
        CHECK(std::abs(a.metrics[i].grad_norm_pi - b.metrics[i].grad_norm_pi) <= 1e-12);
    }
    CHECK((a.v.params - b.v.params).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("multi-step and trace configurations train on chain(5)") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 8;
    cfg.inner_iters = 500;
    cfg.multi_step_T = 2;
    TrainResult multi = sdec_train(cfg);
    CHECK(multi.v_error_per_episode.back() <= 0.5);

    cfg.trace_zeta = 0.5;
    TrainResult trace = sdec_train(cfg);
    CHECK(trace.v_error_per_episode.back() <= 0.5);
}

TEST_CASE("held-out objective trends down on tabular problems") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 20;
    cfg.inner_iters = 500;
    cfg.monitor_heldout = true;
    TrainResult r = sdec_train(cfg);
    REQUIRE(r.heldout_objective.size() == static_cast<std::size_t>(r.gradient_steps));

    // median over disjoint windows of 50 iterations
    std::vector<double> medians;
    for (std::size_t w = 0; w + 50 <= r.heldout_objective.size(); w += 50) {
        std::vector<double> window(r.heldout_objective.begin() + w,
                                   r.heldout_objective.begin() + w + 50);
        std::nth_element(window.begin(), window.begin() + 25, window.end());
        medians.push_back(window[25]);
    }
    REQUIRE(medians.size() >= 8);
    // the estimate rises while the policy logits chase their targets, then
    // falls; the trend over the second half is non-increasing and the run
    // ends far below where it started
    for (std::size_t i = medians.size() / 2 + 1; i < medians.size(); ++i)
        CHECK(medians[i] <= medians[i - 1] * 1.05 + 1e-12);
    CHECK(medians.back() <= 0.3 * medians.front());
    CHECK(medians.back() <= 0.2 * *std::max_element(medians.begin(), medians.end()));
}

TEST_CASE("kl divergence variants train") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 6;
    cfg.inner_iters = 300;
    cfg.episodes = 12;
    cfg.inner_iters = 500;
    cfg.divergence = "kl_simplex";
    cfg.zeta0_pi = 0.5;  // multiplicative-weights steps act on probabilities
    TrainResult simplex = sdec_train(cfg);
    CHECK(simplex.v_error_per_episode.back() <= 1.0);

    cfg.divergence = "kl_penalized";
    cfg.zeta0_pi = 50.0;
    cfg.kl_inner_iters = 5;
    cfg.episodes = 3;
    TrainResult penalized = sdec_train(cfg);
    CHECK(std::isfinite(penalized.v_error_per_episode.back()));

    SdecConfig bad = cfg;
    bad.divergence = "kl_simplex";
    bad.pi_family.kind = "linear";
    CHECK_THROWS_AS(sdec_train(bad), ConfigInvalid);
}

TEST_CASE("a diverging stepsize raises NonFiniteLoss instead of running on") {
    SdecConfig cfg = chain_config();
    cfg.zeta0 = 1e9;
    cfg.episodes = 2;
    CHECK_THROWS_AS(sdec_train(cfg), NonFiniteLoss);
}

TEST_CASE("evaluate_policy") {
    Rng rng = make_rng(3);
    // deterministic environment and policy: every return identical
    std::vector<Eigen::MatrixXd> p(1, Eigen::MatrixXd::Ones(1, 1));
    TabularMdp loop = make_tabular_mdp(1, 1, p, Eigen::MatrixXd::Ones(1, 1),
                                       Eigen::MatrixXd::Zero(1, 1), 0.9);
    EvalResult det = evaluate_policy(loop, [](int, Rng&) { return 0; }, 8, 30, rng);
    CHECK(det.half_width == 0.0);
    CHECK(det.mean == doctest::Approx((1.0 - std::pow(0.9, 30)) / 0.1).epsilon(1e-12));

    // single episode: the mean is that episode's return
    TabularMdp chain = make_chain(4, 0.9);
    auto right = [](int, Rng&) { return 1; };
    EvalResult single = evaluate_policy(chain, right, 1, 10, rng);
    CHECK(single.episodes == 1);
    CHECK(single.half_width == 0.0);

    // oracle optimal policy vs the exact linear-solve policy value
    TabularPolicy always_right;
    always_right.probs = Eigen::MatrixXd::Zero(4, 2);
    always_right.probs.col(1).setOnes();
    TabularValue exact = policy_evaluation(chain, always_right);
    double expected_mean = exact.mean();  // uniform start distribution
    const int horizon = 400;  // gamma^400 ~ 5e-19: truncation negligible
    const int episodes = 400;
    EvalResult mc = evaluate_policy(chain, right, episodes, horizon, rng);
    double se = mc.half_width / 0.6744897501960817;
    CHECK(std::abs(mc.mean - expected_mean) <= 3.0 * se + 1e-12);
}

TEST_CASE("checkpoints reconstruct the learned functions exactly") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 2;
    TrainResult r = sdec_train(cfg);
    nlohmann::json ckpt = checkpoint_to_json(r, cfg);
    std::string text = ckpt.dump();
    nlohmann::json back = nlohmann::json::parse(text);
    ParamFunction v = param_function_from_json(back.at("v"));
    ParamFunction pi = param_function_from_json(back.at("pi"));
    CHECK(v.params == r.v.params);
    CHECK(pi.params == r.pi.params);
    CHECK(back.at("lambda").get<double>() == cfg.lambda);
}

TEST_CASE("record_timing fills wall_ms with measured durations") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 1;
    cfg.inner_iters = 20;
    cfg.record_timing = true;
    TrainResult r = sdec_train(cfg);
    for (const auto& m : r.metrics) {
        CHECK(std::isfinite(m.wall_ms));
        CHECK(m.wall_ms >= 0.0);
    }
}

TEST_CASE("randomized iterate selection stays reproducible") {
    SdecConfig cfg = chain_config();
    cfg.episodes = 3;
    cfg.randomized_iterate = true;
    TrainResult a = sdec_train(cfg);
    TrainResult b = sdec_train(cfg);
    CHECK(a.v.params == b.v.params);
    CHECK(a.pi.params == b.pi.params);
}
