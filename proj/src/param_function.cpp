#include "sdec/param_function.hpp"

#include <cmath>
#include <numbers>

#include "sdec/bellman.hpp"

namespace sdec {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

int policy_feature_dim(const ParamFunction& f) { return f.features.output_dim(); }

void require_kind(const ParamFunction& f, FunctionKind kind, const char* what) {
    if (f.kind != kind) throw KindMismatch(std::string(what) + ": wrong function kind");
}

}  // namespace

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
ParamFunction::weight_matrix() const {
    int rows = kind == FunctionKind::log_policy_discrete ? n_actions : action_dim;
    int cols = features.output_dim();
    return {params.data(), rows, cols};
}

Eigen::VectorXd ParamFunction::log_std() const {
    Eigen::VectorXd tail = params.tail(action_dim);
    return tail.array().min(kLogStdMax).max(kLogStdMin);
}

ParamFunction make_value_function(FeatureMap features) {
    ParamFunction f;
    f.kind = FunctionKind::value;
    f.params = Eigen::VectorXd::Zero(features.output_dim());
    f.features = std::move(features);
    return f;
}

ParamFunction make_discrete_policy(FeatureMap features, int n_actions) {
    if (n_actions <= 0) throw BadParams("discrete policy needs n_actions > 0");
    ParamFunction f;
    f.kind = FunctionKind::log_policy_discrete;
    f.params = Eigen::VectorXd::Zero(static_cast<long>(n_actions) * features.output_dim());
    f.features = std::move(features);
    f.n_actions = n_actions;
    return f;
}

ParamFunction make_gaussian_policy(FeatureMap features, int action_dim,
                                   Eigen::VectorXd action_low, Eigen::VectorXd action_high) {
    if (action_dim <= 0) throw BadParams("gaussian policy needs action_dim > 0");
    ParamFunction f;
    f.kind = FunctionKind::log_policy_gaussian;
    // mean weights (action_dim x F) then log-std per action dimension
    f.params = Eigen::VectorXd::Zero(static_cast<long>(action_dim) * features.output_dim() +
                                     action_dim);
    f.features = std::move(features);
    f.action_dim = action_dim;
    f.action_low = std::move(action_low);
    f.action_high = std::move(action_high);
    return f;
}

ParamFunction make_dual_function(FeatureMap pair_features) {
    ParamFunction f;
    f.kind = FunctionKind::dual;
    f.params = Eigen::VectorXd::Zero(pair_features.output_dim());
    f.features = std::move(pair_features);
    return f;
}

Eval eval_value(const ParamFunction& f, const Eigen::VectorXd& state) {
    require_kind(f, FunctionKind::value, "eval_value");
    Eigen::VectorXd phi = f.features(state);
    return {f.params.dot(phi), std::move(phi)};
}

Eigen::VectorXd dual_features_input(const ParamFunction& f, const Eigen::VectorXd& input) {
    require_kind(f, FunctionKind::dual, "dual_features");
    return f.features(input);
}

Eigen::VectorXd dual_features(const ParamFunction& f, const Eigen::VectorXd& state,
                              const Eigen::VectorXd& action) {
    Eigen::VectorXd input(state.size() + action.size());
    input << state, action;
    return dual_features_input(f, input);
}

Eval eval_dual(const ParamFunction& f, const Eigen::VectorXd& state,
               const Eigen::VectorXd& action) {
    Eigen::VectorXd phi = dual_features(f, state, action);
    return {f.params.dot(phi), std::move(phi)};
}

Eigen::VectorXd policy_logits(const ParamFunction& f, const Eigen::VectorXd& state) {
    require_kind(f, FunctionKind::log_policy_discrete, "policy_logits");
    return f.weight_matrix() * f.features(state);
}

Eval eval_log_policy(const ParamFunction& f, const Eigen::VectorXd& state,
                     const Eigen::VectorXd& action) {
    if (f.kind == FunctionKind::log_policy_discrete) {
        if (action.size() != 1) throw ActionOutOfBounds("discrete action must be 1-dim");
        int a = static_cast<int>(std::llround(action[0]));
        if (a < 0 || a >= f.n_actions)
            throw ActionOutOfBounds("action index " + std::to_string(a) + " out of range");
        Eigen::VectorXd phi = f.features(state);
        Eigen::VectorXd z = f.weight_matrix() * phi;
        double lse = log_sum_exp(z);
        Eigen::VectorXd soft = (z.array() - lse).exp();
        Eval out;
        out.value = z[a] - lse;
        out.grad = Eigen::VectorXd::Zero(f.n_params());
        const int fdim = policy_feature_dim(f);
        for (int b = 0; b < f.n_actions; ++b) {
            double coef = (b == a ? 1.0 : 0.0) - soft[b];
            if (coef != 0.0) out.grad.segment(static_cast<long>(b) * fdim, fdim) = coef * phi;
        }
        return out;
    }
    if (f.kind == FunctionKind::log_policy_gaussian) {
        if (action.size() != f.action_dim)
            throw ActionOutOfBounds("gaussian action has the wrong dimension");
        Eigen::VectorXd phi = f.features(state);
        const int fdim = policy_feature_dim(f);
        Eigen::VectorXd mu = f.weight_matrix() * phi;
        Eigen::VectorXd raw = f.params.tail(f.action_dim);
        Eval out;
        out.value = 0.0;
        out.grad = Eigen::VectorXd::Zero(f.n_params());
        for (int i = 0; i < f.action_dim; ++i) {
            double clamped = std::clamp(raw[i], ParamFunction::kLogStdMin,
                                        ParamFunction::kLogStdMax);
            double sigma = std::exp(clamped);
            double z = (action[i] - mu[i]) / sigma;
            out.value += -kHalfLog2Pi - clamped - 0.5 * z * z;
            out.grad.segment(static_cast<long>(i) * fdim, fdim) = (z / sigma) * phi;
            bool interior = raw[i] > ParamFunction::kLogStdMin &&
                            raw[i] < ParamFunction::kLogStdMax;
            out.grad[static_cast<long>(f.action_dim) * fdim + i] =
                interior ? (z * z - 1.0) : 0.0;
        }
        return out;
    }
    throw KindMismatch("eval_log_policy: not a policy function");
}

Eigen::VectorXd sample_action(const ParamFunction& f, const Eigen::VectorXd& state, Rng& rng) {
    if (f.kind == FunctionKind::log_policy_discrete) {
        Eigen::VectorXd z = policy_logits(f, state);
        double lse = log_sum_exp(z);
        Eigen::VectorXd probs = (z.array() - lse).exp();
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double u = unit(rng);
        double cum = 0.0;
        int pick = f.n_actions - 1;
        for (int a = 0; a < f.n_actions; ++a) {
            cum += probs[a];
            if (u <= cum) {
                pick = a;
                break;
            }
        }
        Eigen::VectorXd out(1);
        out[0] = pick;
        return out;
    }
    if (f.kind == FunctionKind::log_policy_gaussian) {
        Eigen::VectorXd phi = f.features(state);
        Eigen::VectorXd mu = f.weight_matrix() * phi;
        Eigen::VectorXd sigma = f.log_std().array().exp();
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd a(f.action_dim);
        for (int i = 0; i < f.action_dim; ++i) a[i] = mu[i] + sigma[i] * normal(rng);
        return a;
    }
    throw KindMismatch("sample_action: not a policy function");
}

double gaussian_entropy(const ParamFunction& f) {
    require_kind(f, FunctionKind::log_policy_gaussian, "gaussian_entropy");
    Eigen::VectorXd ls = f.log_std();
    return f.action_dim * (0.5 + kHalfLog2Pi) + ls.sum();
}

double grad_check(const ParamFunction& f, const std::vector<GradProbe>& probes, double eps) {
    if (!(eps > 0.0)) return std::numeric_limits<double>::infinity();
    auto eval_at = [&](const ParamFunction& g, const GradProbe& p) -> Eval {
        switch (g.kind) {
            case FunctionKind::value: return eval_value(g, p.state);
            case FunctionKind::dual: return eval_dual(g, p.state, p.action);
            default: return eval_log_policy(g, p.state, p.action);
        }
    };
    double worst = 0.0;
    ParamFunction probe = f;
    for (const auto& p : probes) {
        Eval base = eval_at(f, p);
        for (int i = 0; i < f.n_params(); ++i) {
            probe.params = f.params;
            probe.params[i] += eps;
            double up = eval_at(probe, p).value;
            probe.params[i] = f.params[i] - eps;
            double down = eval_at(probe, p).value;
            double fd = (up - down) / (2.0 * eps);
            double err = std::abs(fd - base.grad[i]) / std::max(1.0, std::abs(base.grad[i]));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

nlohmann::json param_function_to_json(const ParamFunction& f) {
    nlohmann::json j;
    switch (f.kind) {
        case FunctionKind::value: j["kind"] = "value"; break;
        case FunctionKind::log_policy_discrete: j["kind"] = "log_policy_discrete"; break;
        case FunctionKind::log_policy_gaussian: j["kind"] = "log_policy_gaussian"; break;
        case FunctionKind::dual: j["kind"] = "dual"; break;
    }
    j["params"] = std::vector<double>(f.params.data(), f.params.data() + f.params.size());
    j["features"] = f.features.to_json();
    if (f.n_actions > 0) j["n_actions"] = f.n_actions;
    if (f.action_dim > 0) j["action_dim"] = f.action_dim;
    if (f.action_low.size() > 0)
        j["action_low"] =
            std::vector<double>(f.action_low.data(), f.action_low.data() + f.action_low.size());
    if (f.action_high.size() > 0)
        j["action_high"] = std::vector<double>(f.action_high.data(),
                                               f.action_high.data() + f.action_high.size());
    return j;
}

ParamFunction param_function_from_json(const nlohmann::json& j) {
    try {
        std::string kind = j.at("kind").get<std::string>();
        FeatureMap fm = FeatureMap::from_json(j.at("features"));
        ParamFunction f;
        if (kind == "value") {
            f = make_value_function(std::move(fm));
        } else if (kind == "log_policy_discrete") {
            f = make_discrete_policy(std::move(fm), j.at("n_actions").get<int>());
        } else if (kind == "log_policy_gaussian") {
            auto vec = [&](const char* key) -> Eigen::VectorXd {
                if (!j.contains(key)) return {};
                auto v = j.at(key).get<std::vector<double>>();
                return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
            };
            f = make_gaussian_policy(std::move(fm), j.at("action_dim").get<int>(),
                                     vec("action_low"), vec("action_high"));
        } else if (kind == "dual") {
            f = make_dual_function(std::move(fm));
        } else {
            throw ParseError("unknown function kind '" + kind + "'");
        }
        auto params = j.at("params").get<std::vector<double>>();
        if (static_cast<int>(params.size()) != f.n_params())
            throw ParseError("parameter vector has the wrong length");
        f.params = Eigen::Map<const Eigen::VectorXd>(params.data(), params.size());
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad param function document: ") + e.what());
    }
}

}  // namespace sdec
