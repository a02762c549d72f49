#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdec/mdp.hpp"
#include "sdec/param_function.hpp"

using namespace sdec;

namespace {

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

ParamFunction randomized(ParamFunction f, std::uint64_t seed, double scale = 0.5) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    for (int i = 0; i < f.n_params(); ++i) f.params[i] = normal(rng);
    return f;
}

}  // namespace

TEST_CASE("tabular one-hot value lookup") {
    ParamFunction f = make_value_function(FeatureMap::tabular({2}));
    f.params << 3.0, 5.0;
    Eval e = eval_value(f, scalar_vec(1));
    CHECK(e.value == 5.0);
    CHECK(e.grad[0] == 0.0);
    CHECK(e.grad[1] == 1.0);

    f.params.setZero();
    CHECK(eval_value(f, scalar_vec(0)).value == 0.0);
    CHECK(eval_value(f, scalar_vec(1)).value == 0.0);

    // tabular parametrization is exactly invertible: parameters = values
    ParamFunction g = make_value_function(FeatureMap::tabular({4}));
    g.params << -1.0, 0.5, 2.0, 7.0;
    for (int s = 0; s < 4; ++s) CHECK(eval_value(g, scalar_vec(s)).value == g.params[s]);

    CHECK_THROWS_AS(eval_value(g, scalar_vec(4)), DimensionMismatch);
    ParamFunction dual = make_dual_function(FeatureMap::tabular({2, 2}));
    CHECK_THROWS_AS(eval_value(dual, scalar_vec(0)), KindMismatch);
}

TEST_CASE("rbf features") {
    Eigen::MatrixXd centers(2, 2);
    centers << 0.0, 0.0, 3.0, 4.0;
    FeatureMap map = FeatureMap::rbf(centers, 1.0);

    Eigen::VectorXd at_center = rbf_features(vec2(3.0, 4.0), map);
    CHECK(at_center[1] == 1.0);

    // |s - c| = h gives exp(-1/2)
    Eigen::VectorXd at_h = rbf_features(vec2(1.0, 0.0), map);
    CHECK(at_h[0] == doctest::Approx(0.6065306597126334).epsilon(1e-14));

    Eigen::VectorXd far = rbf_features(vec2(100.0, 100.0), map);
    CHECK(far.maxCoeff() <= 1e-8);

    CHECK_THROWS_AS(rbf_features(scalar_vec(0.0), map), DimensionMismatch);
    CHECK_THROWS_AS(rbf_features(vec2(0, 0), FeatureMap::linear(2)), KindMismatch);
}

TEST_CASE("median trick bandwidth") {
    Eigen::MatrixXd sample(3, 1);
    sample << 0.0, 1.0, 3.0;
    // pairwise distances {1, 2, 3}: median 2
    CHECK(FeatureMap::median_pairwise_distance(sample) == 2.0);

    Rng rng = make_rng(9);
    Eigen::MatrixXd big(64, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 64; ++i) big.row(i) = vec2(normal(rng), normal(rng)).transpose();
    FeatureMap a = FeatureMap::rbf_from_sample(big, 16, 5);
    FeatureMap b = FeatureMap::rbf_from_sample(big, 16, 5);
    FeatureMap c = FeatureMap::rbf_from_sample(big, 16, 6);
    CHECK(a.centers() == b.centers());  // deterministic given the seed
    CHECK(a.centers() != c.centers());
    CHECK(a.bandwidth() == doctest::Approx(FeatureMap::median_pairwise_distance(big)));
}

TEST_CASE("discrete log policy") {
    ParamFunction pi = make_discrete_policy(FeatureMap::tabular({3}), 4);
    // zero logits: uniform over 4 actions
    Eval e = eval_log_policy(pi, scalar_vec(1), scalar_vec(2));
    CHECK(e.value == doctest::Approx(-1.3862943611198906).epsilon(1e-14));

    // probabilities sum to one for random parameters
    ParamFunction r = randomized(pi, 3);
    for (int s = 0; s < 3; ++s) {
        double total = 0.0;
        for (int a = 0; a < 4; ++a)
            total += std::exp(eval_log_policy(r, scalar_vec(s), scalar_vec(a)).value);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }

    CHECK_THROWS_AS(eval_log_policy(pi, scalar_vec(0), scalar_vec(4)), ActionOutOfBounds);
    CHECK_THROWS_AS(eval_log_policy(pi, scalar_vec(0), scalar_vec(-1)), ActionOutOfBounds);
}

TEST_CASE("gaussian log policy") {
    ParamFunction pi = make_gaussian_policy(FeatureMap::linear(2), 1);
    // zero parameters: mu = 0, sigma = 1; standard normal density at 0
    Eval e = eval_log_policy(pi, vec2(0.3, -0.2), scalar_vec(0.0));
    CHECK(e.value == doctest::Approx(-0.9189385332046727).epsilon(1e-14));

    // analytic differential entropy matches a Monte-Carlo estimate within 3 sigma
    ParamFunction r = randomized(pi, 11, 0.3);
    double analytic = gaussian_entropy(r);
    Rng rng = make_rng(8);
    Eigen::VectorXd s0 = vec2(0.5, 1.0);
    const int n = 10000;
    std::vector<double> neg_lp(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd a = sample_action(r, s0, rng);
        neg_lp[i] = -eval_log_policy(r, s0, a).value;
        sum += neg_lp[i];
    }
    double mean = sum / n;
    double var = 0.0;
    for (double x : neg_lp) var += (x - mean) * (x - mean);
    var /= (n - 1);
    double sigma = std::sqrt(var / n);
    CHECK(std::abs(mean - analytic) <= 3.0 * sigma);
}

TEST_CASE("dual lookup") {
    ParamFunction rho = make_dual_function(FeatureMap::tabular({2, 2}));
    rho.params << 1.0, 2.0, 3.0, 4.0;
    CHECK(eval_dual(rho, scalar_vec(1), scalar_vec(0)).value == 3.0);
    rho.params.setZero();
    CHECK(eval_dual(rho, scalar_vec(0), scalar_vec(1)).value == 0.0);
}

TEST_CASE("gradient checks pass for every family") {
    std::vector<GradProbe> value_probes, policy_probes, dual_probes, gauss_probes;
    Rng rng = make_rng(17);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        Eigen::VectorXd s = vec2(normal(rng), normal(rng));
        Eigen::VectorXd a = scalar_vec(k % 3);
        value_probes.push_back({s, {}});
        policy_probes.push_back({s, a});
        dual_probes.push_back({s, scalar_vec(normal(rng))});
        gauss_probes.push_back({s, scalar_vec(normal(rng))});
    }

    Eigen::MatrixXd centers(8, 2);
    for (int i = 0; i < 8; ++i) centers.row(i) = vec2(normal(rng), normal(rng)).transpose();

    ParamFunction value =
        randomized(make_value_function(FeatureMap::rbf(centers, 1.3)), 1);
    CHECK(grad_check(value, value_probes) <= 1e-6);

    ParamFunction linear_value = randomized(make_value_function(FeatureMap::linear(2)), 2);
    CHECK(grad_check(linear_value, value_probes) <= 1e-10);  // exact for linear models

    ParamFunction disc =
        randomized(make_discrete_policy(FeatureMap::rbf(centers, 1.3), 3), 3);
    CHECK(grad_check(disc, policy_probes) <= 1e-6);

    ParamFunction gauss =
        randomized(make_gaussian_policy(FeatureMap::rbf(centers, 1.3), 1), 4, 0.3);
    CHECK(grad_check(gauss, gauss_probes) <= 1e-6);

    Eigen::MatrixXd pair_centers(8, 3);
    for (int i = 0; i < 8; ++i)
        pair_centers.row(i) << normal(rng), normal(rng), normal(rng);
    ParamFunction dual =
        randomized(make_dual_function(FeatureMap::rbf(pair_centers, 1.1)), 5);
    CHECK(grad_check(dual, dual_probes) <= 1e-6);
}

TEST_CASE("grad check detects a corrupted gradient") {
    // double one analytic coordinate and recompute the worst relative error the
    // same way grad_check does
    ParamFunction value = make_value_function(FeatureMap::linear(2));
    value.params << 1.0, -2.0;
    GradProbe probe{vec2(0.7, -0.4), {}};
    Eval base = eval_value(value, probe.state);
    Eigen::VectorXd corrupted = base.grad;
    corrupted[0] *= 2.0;
    double eps = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < value.n_params(); ++i) {
        ParamFunction shifted = value;
        shifted.params[i] += eps;
        double up = eval_value(shifted, probe.state).value;
        shifted.params[i] = value.params[i] - eps;
        double down = eval_value(shifted, probe.state).value;
        double fd = (up - down) / (2.0 * eps);
        worst = std::max(worst,
                         std::abs(fd - corrupted[i]) / std::max(1.0, std::abs(corrupted[i])));
    }
    CHECK(worst >= 0.4);
}

TEST_CASE("param function JSON round-trip reconstructs evaluations exactly") {
    Rng rng = make_rng(23);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd centers(6, 2);
    for (int i = 0; i < 6; ++i) centers.row(i) = vec2(normal(rng), normal(rng)).transpose();
    ParamFunction pi =
        randomized(make_gaussian_policy(FeatureMap::rbf(centers, 0.9), 1), 31);

    nlohmann::json j = param_function_to_json(pi);
    ParamFunction back = param_function_from_json(nlohmann::json::parse(j.dump()));
    Eigen::VectorXd s = vec2(0.2, -1.1);
    Eigen::VectorXd a = scalar_vec(0.4);
    CHECK(eval_log_policy(back, s, a).value == eval_log_policy(pi, s, a).value);
    CHECK(back.params == pi.params);
}
