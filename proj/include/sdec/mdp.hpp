#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "sdec/errors.hpp"
#include "sdec/rng.hpp"

#include <json.hpp>

namespace sdec {

/// Finite MDP (S, A, P, R, gamma). Transition rows are probability vectors;
/// rewards are expectations, with optional per-(s,a) Gaussian noise on the
/// sampled reward.
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    // transition[a] is an n_states x n_states matrix, row s = P(.|s,a)
    std::vector<Eigen::MatrixXd> transition;
    Eigen::MatrixXd reward;            // n_states x n_actions, R(s,a)
    Eigen::MatrixXd reward_noise_std;  // n_states x n_actions, 0 = deterministic
    double gamma = 0.9;
    double reward_bound = 0.0;  // C_R = max |R(s,a)|

    double prob(int s, int a, int s_next) const { return transition[a](s, s_next); }

    /// Sample s' ~ P(.|s,a) using a single uniform draw.
    int sample_next(int s, int a, Rng& rng) const;
    /// Sample r with mean R(s,a); consumes a normal draw only when noisy.
    double sample_reward(int s, int a, Rng& rng) const;
};

TabularMdp make_tabular_mdp(int n_states, int n_actions,
                            std::vector<Eigen::MatrixXd> transition,
                            Eigen::MatrixXd reward,
                            Eigen::MatrixXd reward_noise_std, double gamma);

nlohmann::json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);

/// Continuous-state environment with a pure step rule: identical seeds
/// reproduce identical trajectories.
class ContinuousEnv {
  public:
    virtual ~ContinuousEnv() = default;
    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual int horizon() const = 0;
    virtual double gamma() const = 0;
    virtual Eigen::VectorXd initial_state(Rng& rng) const = 0;
    /// Returns (next state, reward). Actions outside the declared bounds are
    /// clamped internally.
    virtual std::pair<Eigen::VectorXd, double> step(const Eigen::VectorXd& s,
                                                    const Eigen::VectorXd& a,
                                                    Rng& rng) const = 0;
    virtual Eigen::VectorXd action_low() const = 0;
    virtual Eigen::VectorXd action_high() const = 0;
};

/// Damped torque-bounded pendulum, state (angle, angular velocity).
///
/// Dynamics (semi-implicit Euler, step dt):
///   omega' = omega + dt * (g * sin(theta) - damping * omega + u)
///   theta' = wrap(theta + dt * omega'),  u clamped to [-max_torque, max_torque]
/// Reward is cosine-shaped on the successor angle: cos(theta') - torque_cost * u^2.
/// Initial state: theta ~ U(-start_angle, start_angle), omega ~ U(-1, 1). The
/// default torque bound exceeds the gravity torque, so upright stabilization is
/// reachable from any start without energy pumping.
class ToyPendulum final : public ContinuousEnv {
  public:
    struct Params {
        double dt = 0.05;
        double gravity = 2.5;
        double damping = 0.2;
        double max_torque = 3.0;
        double torque_cost = 0.001;
        double max_speed = 8.0;
        double start_angle = 3.14159265358979324;
        int horizon = 200;
        double gamma = 0.995;
    };

    ToyPendulum();
    explicit ToyPendulum(Params p);

    int state_dim() const override { return 2; }
    int action_dim() const override { return 1; }
    int horizon() const override { return p_.horizon; }
    double gamma() const override { return p_.gamma; }
    Eigen::VectorXd initial_state(Rng& rng) const override;
    std::pair<Eigen::VectorXd, double> step(const Eigen::VectorXd& s,
                                            const Eigen::VectorXd& a,
                                            Rng& rng) const override;
    Eigen::VectorXd action_low() const override { return scalar_vec_(-p_.max_torque); }
    Eigen::VectorXd action_high() const override { return scalar_vec_(p_.max_torque); }
    const Params& params() const { return p_; }

  private:
    static Eigen::VectorXd scalar_vec_(double v) {
        Eigen::VectorXd x(1);
        x[0] = v;
        return x;
    }
    Params p_;
};

using AnyEnv = std::variant<TabularMdp, std::shared_ptr<const ContinuousEnv>>;

/// Construct a named benchmark environment.
/// Names: chain, gridworld, cliff, random_mdp, toy_pendulum.
AnyEnv make_benchmark_env(const std::string& name, const nlohmann::json& params = {});

// Named constructors behind make_benchmark_env.
TabularMdp make_chain(int n, double gamma = 0.9);
TabularMdp make_gridworld(int rows = 4, int cols = 4, double slip = 0.0, double gamma = 0.95);
TabularMdp make_cliff(double gamma = 0.99);
TabularMdp make_random_mdp(int n_states, int n_actions, std::uint64_t seed,
                           double dirichlet_alpha = 1.0, double reward_noise = 0.0,
                           double gamma = 0.9);

/// One sampled step (s, a, r, s'). Tabular environments store the state and
/// action indices as 1-dimensional vectors so that replay, losses, and
/// function approximation share a single transition type.
struct Transition {
    Eigen::VectorXd s;
    Eigen::VectorXd a;
    double r = 0.0;
    Eigen::VectorXd s_next;

    int state_index() const { return static_cast<int>(s[0]); }
    int action_index() const { return static_cast<int>(a[0]); }
    int next_state_index() const { return static_cast<int>(s_next[0]); }
};

inline Eigen::VectorXd scalar_vec(double v) {
    Eigen::VectorXd x(1);
    x[0] = v;
    return x;
}

/// Ordered transitions from one episode; s_next of step t equals s of step t+1.
struct Trajectory {
    long long episode_id = 0;
    std::vector<Transition> steps;

    std::size_t size() const { return steps.size(); }
    bool chained(double tol = 0.0) const;
};

using TabularPolicySampler = std::function<int(int state, Rng& rng)>;
using ContinuousPolicySampler =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& state, Rng& rng)>;

/// Roll out `horizon` transitions. start_state = -1 draws the initial state
/// uniformly over states.
Trajectory rollout(const TabularMdp& mdp, const TabularPolicySampler& policy, int horizon,
                   Rng& rng, int start_state = -1, long long episode_id = 0);

Trajectory rollout(const ContinuousEnv& env, const ContinuousPolicySampler& policy, int horizon,
                   Rng& rng, long long episode_id = 0);

/// FIFO experience store with uniform sampling.
template <class Item>
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw BadParams("replay capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const Item& at(std::size_t i) const { return items_[i]; }

    void push(Item item) {
        if (items_.size() == capacity_) {
            items_[head_] = std::move(item);  // overwrite oldest
            head_ = (head_ + 1) % capacity_;
        } else {
            items_.push_back(std::move(item));
        }
    }

    /// Uniform sample with replacement; deterministic under a fixed rng state.
    std::vector<Item> sample(std::size_t k, Rng& rng) const {
        if (k == 0) return {};
        if (items_.empty()) throw EmptyBuffer("cannot sample from an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
        std::vector<Item> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) out.push_back(items_[pick(rng)]);
        return out;
    }

    /// Uniform sample without replacement (partial Fisher-Yates).
    std::vector<Item> sample_without_replacement(std::size_t k, Rng& rng) const {
        if (k == 0) return {};
        if (items_.empty()) throw EmptyBuffer("cannot sample from an empty replay buffer");
        if (k > items_.size())
            throw SampleTooLarge("sample size exceeds replay buffer size");
        std::vector<std::size_t> idx(items_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::vector<Item> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(rng)]);
            out.push_back(items_[idx[i]]);
        }
        return out;
    }

    /// Oldest-first snapshot of the stored items.
    std::vector<Item> ordered_items() const {
        std::vector<Item> out;
        out.reserve(items_.size());
        if (items_.size() < capacity_) {
            out = items_;
        } else {
            for (std::size_t i = 0; i < items_.size(); ++i)
                out.push_back(items_[(head_ + i) % capacity_]);
        }
        return out;
    }

  private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // index of the oldest item once full
    std::vector<Item> items_;
};

template <class Item>
void replay_push(ReplayBuffer<Item>& buffer, Item item) {
    buffer.push(std::move(item));
}

template <class Item>
std::vector<Item> replay_sample(const ReplayBuffer<Item>& buffer, std::size_t k, Rng& rng) {
    return buffer.sample(k, rng);
}

}  // namespace sdec
