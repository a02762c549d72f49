#include "sdec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "sdec/errors.hpp"

namespace sdec {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw UnknownKey("unknown config key '" + where + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidValue(std::string("config key '") + key + "' has the wrong type");
    }
}

FamilySpec parse_family(const json& j, const std::string& where) {
    reject_unknown(j, {"kind", "n_centers", "bandwidth", "seed"}, where);
    FamilySpec f;
    read(j, "kind", f.kind);
    read(j, "n_centers", f.n_centers);
    read(j, "bandwidth", f.bandwidth);
    read(j, "seed", f.seed);
    if (f.kind != "tabular" && f.kind != "linear" && f.kind != "rbf")
        throw InvalidValue("family kind must be tabular, linear, or rbf");
    if (f.kind == "rbf" && f.n_centers <= 0)
        throw InvalidValue("rbf family needs n_centers > 0");
    return f;
}

const std::set<std::string>& env_param_keys(const std::string& name) {
    static const std::set<std::string> chain = {"n"};
    static const std::set<std::string> grid = {"rows", "cols", "slip"};
    static const std::set<std::string> cliff = {};
    static const std::set<std::string> random_mdp = {"n_states", "n_actions", "seed",
                                                     "dirichlet_alpha", "reward_noise"};
    static const std::set<std::string> pendulum = {"dt",          "gravity",   "damping",
                                                   "max_torque",  "torque_cost", "max_speed",
                                                   "start_angle", "horizon"};
    if (name == "chain") return chain;
    if (name == "gridworld") return grid;
    if (name == "cliff") return cliff;
    if (name == "random_mdp") return random_mdp;
    if (name == "toy_pendulum") return pendulum;
    throw InvalidValue("unknown environment '" + name + "' in config");
}

}  // namespace

SdecConfig parse_config(const json& j) {
    if (!j.is_object()) throw ParseError("config document must be a JSON object");
    static const std::set<std::string> top = {
        "lambda",        "eta",
        "gamma",         "optimizer",
        "episodes",      "collect_per_episode",
        "inner_iters",   "replay_capacity",
        "batch_size",    "rollout_horizon",
        "multi_step_T",  "trace_zeta",
        "seed",          "families",
        "eval_every",    "eval_episodes",
        "eval_horizon",  "behavior",
        "randomized_iterate", "record_timing",
        "force_segment_path", "monitor_heldout",
        "env"};
    reject_unknown(j, top, "");

    SdecConfig cfg;
    read(j, "lambda", cfg.lambda);
    read(j, "eta", cfg.eta);
    read(j, "gamma", cfg.gamma);
    read(j, "episodes", cfg.episodes);
    read(j, "collect_per_episode", cfg.collect_per_episode);
    read(j, "inner_iters", cfg.inner_iters);
    read(j, "replay_capacity", cfg.replay_capacity);
    read(j, "batch_size", cfg.batch_size);
    read(j, "rollout_horizon", cfg.rollout_horizon);
    read(j, "multi_step_T", cfg.multi_step_T);
    read(j, "trace_zeta", cfg.trace_zeta);
    read(j, "seed", cfg.seed);
    read(j, "eval_every", cfg.eval_every);
    read(j, "eval_episodes", cfg.eval_episodes);
    read(j, "eval_horizon", cfg.eval_horizon);
    read(j, "randomized_iterate", cfg.randomized_iterate);
    read(j, "record_timing", cfg.record_timing);
    read(j, "force_segment_path", cfg.force_segment_path);
    read(j, "monitor_heldout", cfg.monitor_heldout);

    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        reject_unknown(o, {"divergence", "zeta0", "zeta0_pi", "decay", "kl_inner_iters"},
                       "optimizer.");
        read(o, "divergence", cfg.divergence);
        read(o, "zeta0", cfg.zeta0);
        read(o, "zeta0_pi", cfg.zeta0_pi);
        read(o, "decay", cfg.decay);
        read(o, "kl_inner_iters", cfg.kl_inner_iters);
    }
    if (j.contains("behavior")) {
        const json& b = j.at("behavior");
        reject_unknown(b, {"freeze", "init", "epsilon"}, "behavior.");
        read(b, "freeze", cfg.freeze_behavior);
        read(b, "init", cfg.behavior_init);
        read(b, "epsilon", cfg.behavior_epsilon);
    }
    if (j.contains("families")) {
        const json& f = j.at("families");
        reject_unknown(f, {"v", "pi", "rho"}, "families.");
        if (f.contains("v")) cfg.v_family = parse_family(f.at("v"), "families.v.");
        if (f.contains("pi")) cfg.pi_family = parse_family(f.at("pi"), "families.pi.");
        if (f.contains("rho")) cfg.rho_family = parse_family(f.at("rho"), "families.rho.");
    }
    if (j.contains("env")) {
        const json& e = j.at("env");
        std::set<std::string> keys = {"name", "params"};
        reject_unknown(e, keys, "env.");
        read(e, "name", cfg.env.name);
        if (e.contains("params")) {
            const json& p = e.at("params");
            reject_unknown(p, env_param_keys(cfg.env.name), "env.params.");
            cfg.env.params = p;
        } else {
            env_param_keys(cfg.env.name);  // validates the name
        }
    }

    if (const char* env_seed = std::getenv("SDEC_SEED")) {
        try {
            cfg.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw InvalidValue("SDEC_SEED is not an unsigned integer");
        }
    }

    std::string violation = config_violation(cfg);
    if (!violation.empty()) throw InvalidValue(violation);
    return cfg;
}

SdecConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

std::string config_violation(const SdecConfig& cfg) {
    if (!(cfg.lambda > 0.0)) return "lambda must be > 0";
    if (cfg.eta < 0.0 || cfg.eta > 1.0) return "eta must lie in [0, 1]";
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) return "gamma must lie in (0, 1)";
    if (!(cfg.zeta0 > 0.0)) return "optimizer.zeta0 must be > 0";
    if (cfg.decay != "one_over_j" && cfg.decay != "constant")
        return "optimizer.decay must be one_over_j or constant";
    if (cfg.divergence != "euclidean" && cfg.divergence != "kl_simplex" &&
        cfg.divergence != "kl_penalized")
        return "optimizer.divergence must be euclidean, kl_simplex, or kl_penalized";
    if (cfg.kl_inner_iters < 1) return "optimizer.kl_inner_iters must be >= 1";
    if (cfg.episodes < 1) return "episodes must be >= 1";
    if (cfg.collect_per_episode < 1) return "collect_per_episode must be >= 1";
    if (cfg.inner_iters < 1) return "inner_iters must be >= 1";
    if (cfg.replay_capacity == 0) return "replay_capacity must be >= 1";
    if (cfg.batch_size < 1) return "batch_size must be >= 1";
    if (cfg.rollout_horizon < 1) return "rollout_horizon must be >= 1";
    if (cfg.multi_step_T < 0) return "multi_step_T must be >= 0";
    if (cfg.trace_zeta < 0.0 || cfg.trace_zeta >= 1.0) return "trace_zeta must lie in [0, 1)";
    if (cfg.eval_every < 0) return "eval_every must be >= 0";
    if (cfg.eval_episodes < 1) return "eval_episodes must be >= 1";
    if (cfg.eval_horizon < 0) return "eval_horizon must be >= 0";
    if (cfg.behavior_init != "policy" && cfg.behavior_init != "uniform")
        return "behavior.init must be policy or uniform";
    if (cfg.behavior_epsilon > 1.0) return "behavior.epsilon must be <= 1";
    if (cfg.rollout_horizon < cfg.multi_step_T + 1)
        return "rollout_horizon must cover multi_step_T + 1 transitions";
    return "";
}

nlohmann::json config_to_json(const SdecConfig& cfg) {
    json fam = {{"v", {{"kind", cfg.v_family.kind}}},
                {"pi", {{"kind", cfg.pi_family.kind}}},
                {"rho", {{"kind", cfg.rho_family.kind}}}};
    for (auto [name, spec] : std::initializer_list<std::pair<const char*, const FamilySpec*>>{
             {"v", &cfg.v_family}, {"pi", &cfg.pi_family}, {"rho", &cfg.rho_family}}) {
        if (spec->kind == "rbf") {
            fam[name]["n_centers"] = spec->n_centers;
            fam[name]["bandwidth"] = spec->bandwidth;
            fam[name]["seed"] = spec->seed;
        }
    }
    return json{{"lambda", cfg.lambda},
                {"eta", cfg.eta},
                {"gamma", cfg.gamma},
                {"optimizer",
                 {{"divergence", cfg.divergence},
                  {"zeta0", cfg.zeta0},
                  {"zeta0_pi", cfg.zeta0_pi},
                  {"decay", cfg.decay},
                  {"kl_inner_iters", cfg.kl_inner_iters}}},
                {"episodes", cfg.episodes},
                {"collect_per_episode", cfg.collect_per_episode},
                {"inner_iters", cfg.inner_iters},
                {"replay_capacity", cfg.replay_capacity},
                {"batch_size", cfg.batch_size},
                {"rollout_horizon", cfg.rollout_horizon},
                {"multi_step_T", cfg.multi_step_T},
                {"trace_zeta", cfg.trace_zeta},
                {"seed", cfg.seed},
                {"families", fam},
                {"eval_every", cfg.eval_every},
                {"eval_episodes", cfg.eval_episodes},
                {"eval_horizon", cfg.eval_horizon},
                {"behavior",
                 {{"freeze", cfg.freeze_behavior},
                  {"init", cfg.behavior_init},
                  {"epsilon", cfg.behavior_epsilon}}},
                {"randomized_iterate", cfg.randomized_iterate},
                {"record_timing", cfg.record_timing},
                {"force_segment_path", cfg.force_segment_path},
                {"monitor_heldout", cfg.monitor_heldout},
                {"env", {{"name", cfg.env.name}, {"params", cfg.env.params}}}};
}

}  // namespace sdec
