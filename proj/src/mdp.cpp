#include "sdec/mdp.hpp"

#include <cmath>
#include <numbers>

namespace sdec {

namespace {

constexpr double kRowSumTol = 1e-9;

void validate_gamma(double gamma) {
    if (!(gamma > 0.0) || !(gamma < 1.0))
        throw GammaOutOfRange("gamma must lie strictly inside (0,1), got " +
                              std::to_string(gamma));
}

}  // namespace

int TabularMdp::sample_next(int s, int a, Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng);
    double cum = 0.0;
    const auto& row = transition[a].row(s);
    int last = 0;
    for (int s2 = 0; s2 < n_states; ++s2) {
        double p = row[s2];
        if (p <= 0.0) continue;
        cum += p;
        last = s2;
        if (u <= cum) return s2;
    }
    return last;  // guard against cumulative rounding
}

double TabularMdp::sample_reward(int s, int a, Rng& rng) const {
    double r = reward(s, a);
    double sd = reward_noise_std(s, a);
    if (sd > 0.0) {
        std::normal_distribution<double> noise(0.0, sd);
        r += noise(rng);
    }
    return r;
}

TabularMdp make_tabular_mdp(int n_states, int n_actions,
                            std::vector<Eigen::MatrixXd> transition, Eigen::MatrixXd reward,
                            Eigen::MatrixXd reward_noise_std, double gamma) {
    if (n_states <= 0 || n_actions <= 0)
        throw BadParams("n_states and n_actions must be positive");
    validate_gamma(gamma);
    if (static_cast<int>(transition.size()) != n_actions)
        throw ShapeMismatch("transition tensor must have one matrix per action");
    for (int a = 0; a < n_actions; ++a) {
        const auto& m = transition[a];
        if (m.rows() != n_states || m.cols() != n_states)
            throw ShapeMismatch("transition matrix for action " + std::to_string(a) +
                                " has wrong shape");
        for (int s = 0; s < n_states; ++s) {
            double sum = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) {
                double p = m(s, s2);
                if (!(p >= 0.0))
                    throw NegativeProbability("P(s'|s,a) < 0 at (s=" + std::to_string(s) +
                                              ",a=" + std::to_string(a) + ")");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTol)
                throw NonStochasticRow("transition row (s=" + std::to_string(s) +
                                       ",a=" + std::to_string(a) + ") sums to " +
                                       std::to_string(sum));
        }
    }
    if (reward.rows() != n_states || reward.cols() != n_actions)
        throw ShapeMismatch("reward table has wrong shape");
    if (reward_noise_std.rows() != n_states || reward_noise_std.cols() != n_actions)
        throw ShapeMismatch("reward_noise_std table has wrong shape");
    if (!reward.allFinite() || !reward_noise_std.allFinite())
        throw BadParams("reward tables must be finite");
    if ((reward_noise_std.array() < 0.0).any())
        throw BadParams("reward_noise_std must be non-negative");

    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.transition = std::move(transition);
    mdp.reward = std::move(reward);
    mdp.reward_noise_std = std::move(reward_noise_std);
    mdp.gamma = gamma;
    mdp.reward_bound = mdp.reward.array().abs().maxCoeff();
    return mdp;
}

nlohmann::json mdp_to_json(const TabularMdp& mdp) {
    nlohmann::json j;
    j["type"] = "tabular_mdp";
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    auto mat_to_json = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    nlohmann::json trans = nlohmann::json::array();
    for (const auto& m : mdp.transition) trans.push_back(mat_to_json(m));
    j["transition"] = std::move(trans);
    j["reward"] = mat_to_json(mdp.reward);
    j["reward_noise_std"] = mat_to_json(mdp.reward_noise_std);
    return j;
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
    try {
        int n_states = j.at("n_states").get<int>();
        int n_actions = j.at("n_actions").get<int>();
        double gamma = j.at("gamma").get<double>();
        auto mat_from_json = [](const nlohmann::json& rows) {
            Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < rows[r].size(); ++c)
                    m(r, c) = rows[r][c].get<double>();
            return m;
        };
        std::vector<Eigen::MatrixXd> trans;
        for (const auto& m : j.at("transition")) trans.push_back(mat_from_json(m));
        return make_tabular_mdp(n_states, n_actions, std::move(trans),
                                mat_from_json(j.at("reward")),
                                mat_from_json(j.at("reward_noise_std")), gamma);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad tabular_mdp document: ") + e.what());
    }
}

// -- benchmarks ----------------------------------------------------------------

TabularMdp make_chain(int n, double gamma) {
    if (n < 2) throw BadParams("chain needs at least 2 states");
    const int kLeft = 0, kRight = 1;
    std::vector<Eigen::MatrixXd> P(2, Eigen::MatrixXd::Zero(n, n));
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, 2);
    for (int s = 0; s < n; ++s) {
        P[kLeft](s, std::max(s - 1, 0)) = 1.0;
        P[kRight](s, std::min(s + 1, n - 1)) = 1.0;
    }
    R(n - 1, kRight) = 1.0;  // reward at the right end
    return make_tabular_mdp(n, 2, std::move(P), std::move(R),
                            Eigen::MatrixXd::Zero(n, 2), gamma);
}

TabularMdp make_gridworld(int rows, int cols, double slip, double gamma) {
    if (rows < 2 || cols < 2) throw BadParams("gridworld needs at least 2x2 cells");
    if (slip < 0.0 || slip > 0.5) throw BadParams("gridworld slip must lie in [0, 0.5]");
    const int n = rows * cols;
    const int goal = n - 1;
    // actions: 0=up 1=down 2=left 3=right
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    auto move = [&](int s, int a) {
        int r = s / cols, c = s % cols;
        int r2 = std::clamp(r + dr[a], 0, rows - 1);
        int c2 = std::clamp(c + dc[a], 0, cols - 1);
        return r2 * cols + c2;
    };
    std::vector<Eigen::MatrixXd> P(4, Eigen::MatrixXd::Zero(n, n));
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, 4);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < 4; ++a) {
            if (s == goal) {
                P[a](s, s) = 1.0;  // goal loops back on itself
                R(s, a) = 1.0;
                continue;
            }
            // perpendicular slips
            int perp0 = (a < 2) ? 2 : 0;
            int perp1 = (a < 2) ? 3 : 1;
            P[a](s, move(s, a)) += 1.0 - slip;
            P[a](s, move(s, perp0)) += slip / 2.0;
            P[a](s, move(s, perp1)) += slip / 2.0;
        }
    }
    return make_tabular_mdp(n, 4, std::move(P), std::move(R),
                            Eigen::MatrixXd::Zero(n, 4), gamma);
}

TabularMdp make_cliff(double gamma) {
    const int rows = 4, cols = 12, n = rows * cols;
    const int start = (rows - 1) * cols;       // bottom-left
    const int goal = rows * cols - 1;          // bottom-right
    auto is_cliff = [&](int s) {
        return s / cols == rows - 1 && s % cols > 0 && s % cols < cols - 1;
    };
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    std::vector<Eigen::MatrixXd> P(4, Eigen::MatrixXd::Zero(n, n));
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, 4);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < 4; ++a) {
            if (s == goal) {
                P[a](s, s) = 1.0;
                continue;
            }
            int r = s / cols, c = s % cols;
            int r2 = std::clamp(r + dr[a], 0, rows - 1);
            int c2 = std::clamp(c + dc[a], 0, cols - 1);
            int dest = r2 * cols + c2;
            if (is_cliff(dest)) {
                P[a](s, start) = 1.0;  // fall: back to start
                R(s, a) = -100.0;
            } else {
                P[a](s, dest) = 1.0;
                R(s, a) = -1.0;
            }
        }
    }
    return make_tabular_mdp(n, 4, std::move(P), std::move(R),
                            Eigen::MatrixXd::Zero(n, 4), gamma);
}

TabularMdp make_random_mdp(int n_states, int n_actions, std::uint64_t seed,
                           double dirichlet_alpha, double reward_noise, double gamma) {
    if (n_states <= 0 || n_actions <= 0) throw BadParams("random_mdp needs positive dims");
    if (dirichlet_alpha <= 0.0) throw BadParams("dirichlet_alpha must be positive");
    if (reward_noise < 0.0) throw BadParams("reward_noise must be non-negative");
    Rng rng = make_rng(seed, /*stream=*/0x6d64705fULL);
    std::gamma_distribution<double> gam(dirichlet_alpha, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Eigen::MatrixXd> P(n_actions, Eigen::MatrixXd::Zero(n_states, n_states));
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s) {
            Eigen::VectorXd row(n_states);
            for (int s2 = 0; s2 < n_states; ++s2) row[s2] = gam(rng);
            P[a].row(s) = row / row.sum();
        }
    Eigen::MatrixXd R(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) R(s, a) = unit(rng);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Constant(n_states, n_actions, reward_noise);
    return make_tabular_mdp(n_states, n_actions, std::move(P), std::move(R),
                            std::move(noise), gamma);
}

// -- toy pendulum -----------------------------------------------------------------

ToyPendulum::ToyPendulum() : ToyPendulum(Params()) {}

ToyPendulum::ToyPendulum(Params p) : p_(p) {
    if (p_.dt <= 0 || p_.horizon <= 0 || p_.max_torque <= 0)
        throw BadParams("toy_pendulum: dt, horizon, max_torque must be positive");
    if (p_.gamma <= 0.0 || p_.gamma >= 1.0)
        throw GammaOutOfRange("toy_pendulum: gamma must lie in (0,1)");
}

Eigen::VectorXd ToyPendulum::initial_state(Rng& rng) const {
    std::uniform_real_distribution<double> angle(-p_.start_angle, p_.start_angle);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    Eigen::VectorXd s(2);
    s[0] = angle(rng);
    s[1] = speed(rng);
    return s;
}

std::pair<Eigen::VectorXd, double> ToyPendulum::step(const Eigen::VectorXd& s,
                                                     const Eigen::VectorXd& a, Rng&) const {
    if (s.size() != 2) throw DimensionMismatch("toy_pendulum expects 2-dim state");
    if (a.size() != 1) throw InvalidAction("toy_pendulum expects 1-dim action");
    double u = std::clamp(a[0], -p_.max_torque, p_.max_torque);
    double theta = s[0], omega = s[1];
    // theta = 0 is upright: gravity torque pushes away from it
    omega += p_.dt * (p_.gravity * std::sin(theta) - p_.damping * omega + u);
    omega = std::clamp(omega, -p_.max_speed, p_.max_speed);
    theta += p_.dt * omega;
    // wrap to (-pi, pi]
    theta = std::remainder(theta, 2.0 * std::numbers::pi);
    Eigen::VectorXd next(2);
    next[0] = theta;
    next[1] = omega;
    double r = std::cos(theta) - p_.torque_cost * u * u;
    return {next, r};
}

// -- benchmark dispatch --------------------------------------------------------------

namespace {

template <class T>
T param_or(const nlohmann::json& params, const std::string& key, T fallback) {
    if (!params.is_object() || !params.contains(key)) return fallback;
    try {
        return params.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw BadParams("benchmark parameter '" + key + "' has the wrong type");
    }
}

}  // namespace

AnyEnv make_benchmark_env(const std::string& name, const nlohmann::json& params) {
    if (name == "chain") {
        return make_chain(param_or(params, "n", 5), param_or(params, "gamma", 0.9));
    }
    if (name == "gridworld") {
        return make_gridworld(param_or(params, "rows", 4), param_or(params, "cols", 4),
                              param_or(params, "slip", 0.0), param_or(params, "gamma", 0.95));
    }
    if (name == "cliff") {
        return make_cliff(param_or(params, "gamma", 0.99));
    }
    if (name == "random_mdp") {
        return make_random_mdp(param_or(params, "n_states", 20),
                               param_or(params, "n_actions", 4),
                               param_or(params, "seed", std::uint64_t{0}),
                               param_or(params, "dirichlet_alpha", 1.0),
                               param_or(params, "reward_noise", 0.0),
                               param_or(params, "gamma", 0.9));
    }
    if (name == "toy_pendulum") {
        ToyPendulum::Params p;
        p.dt = param_or(params, "dt", p.dt);
        p.gravity = param_or(params, "gravity", p.gravity);
        p.damping = param_or(params, "damping", p.damping);
        p.max_torque = param_or(params, "max_torque", p.max_torque);
        p.torque_cost = param_or(params, "torque_cost", p.torque_cost);
        p.max_speed = param_or(params, "max_speed", p.max_speed);
        p.start_angle = param_or(params, "start_angle", p.start_angle);
        p.horizon = param_or(params, "horizon", p.horizon);
        p.gamma = param_or(params, "gamma", p.gamma);
        return std::make_shared<const ToyPendulum>(p);
    }
    throw UnknownEnvironment("unknown environment '" + name + "'");
}

// -- rollouts ------------------------------------------------------------------------

bool Trajectory::chained(double tol) const {
    for (std::size_t t = 0; t + 1 < steps.size(); ++t) {
        if ((steps[t].s_next - steps[t + 1].s).lpNorm<Eigen::Infinity>() > tol) return false;
    }
    return true;
}

Trajectory rollout(const TabularMdp& mdp, const TabularPolicySampler& policy, int horizon,
                   Rng& rng, int start_state, long long episode_id) {
    if (horizon < 0) throw BadParams("rollout horizon must be >= 0");
    Trajectory traj;
    traj.episode_id = episode_id;
    if (horizon == 0) return traj;
    int s;
    if (start_state >= 0) {
        if (start_state >= mdp.n_states) throw BadParams("start state out of range");
        s = start_state;
    } else {
        std::uniform_int_distribution<int> pick(0, mdp.n_states - 1);
        s = pick(rng);
    }
    traj.steps.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
        int a = policy(s, rng);
        if (a < 0 || a >= mdp.n_actions)
            throw InvalidAction("policy sampler returned action " + std::to_string(a));
        int s2 = mdp.sample_next(s, a, rng);
        double r = mdp.sample_reward(s, a, rng);
        traj.steps.push_back({scalar_vec(s), scalar_vec(a), r, scalar_vec(s2)});
        s = s2;
    }
    return traj;
}

Trajectory rollout(const ContinuousEnv& env, const ContinuousPolicySampler& policy, int horizon,
                   Rng& rng, long long episode_id) {
    if (horizon < 0) throw BadParams("rollout horizon must be >= 0");
    Trajectory traj;
    traj.episode_id = episode_id;
    if (horizon == 0) return traj;
    Eigen::VectorXd s = env.initial_state(rng);
    traj.steps.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
        Eigen::VectorXd a = policy(s, rng);
        if (a.size() != env.action_dim())
            throw InvalidAction("policy sampler returned an action of wrong dimension");
        auto [s2, r] = env.step(s, a, rng);
        traj.steps.push_back({s, a, r, s2});
        s = std::move(s2);
    }
    return traj;
}

}  // namespace sdec
