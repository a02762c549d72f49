#include "sdec/features.hpp"

#include <algorithm>
#include <cmath>

namespace sdec {

FeatureMap FeatureMap::tabular(std::vector<int> radix) {
    if (radix.empty()) throw BadParams("tabular feature map needs at least one dimension");
    FeatureMap fm;
    fm.kind_ = Kind::tabular_onehot;
    fm.input_dim_ = static_cast<int>(radix.size());
    long long slots = 1;
    for (int r : radix) {
        if (r <= 0) throw BadParams("tabular radix entries must be positive");
        slots *= r;
    }
    fm.output_dim_ = static_cast<int>(slots);
    fm.radix_ = std::move(radix);
    return fm;
}

FeatureMap FeatureMap::linear(int input_dim) {
    if (input_dim <= 0) throw BadParams("linear feature map needs a positive dimension");
    FeatureMap fm;
    fm.kind_ = Kind::linear;
    fm.input_dim_ = input_dim;
    fm.output_dim_ = input_dim;
    return fm;
}

FeatureMap FeatureMap::rbf(Eigen::MatrixXd centers, double bandwidth) {
    if (centers.rows() == 0 || centers.cols() == 0)
        throw BadParams("rbf feature map needs at least one center");
    if (!(bandwidth > 0.0)) throw BadParams("rbf bandwidth must be positive");
    FeatureMap fm;
    fm.kind_ = Kind::rbf_random;
    fm.input_dim_ = static_cast<int>(centers.cols());
    fm.output_dim_ = static_cast<int>(centers.rows());
    fm.centers_ = std::move(centers);
    fm.bandwidth_ = bandwidth;
    return fm;
}

double FeatureMap::median_pairwise_distance(const Eigen::MatrixXd& sample) {
    const int n = static_cast<int>(sample.rows());
    if (n < 2) throw BadParams("median trick needs at least two sample points");
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            dists.push_back((sample.row(i) - sample.row(j)).norm());
    auto mid = dists.begin() + dists.size() / 2;
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid;
}

FeatureMap FeatureMap::rbf_from_sample(const Eigen::MatrixXd& sample, int n_centers,
                                       std::uint64_t seed, double bandwidth) {
    if (n_centers <= 0) throw BadParams("rbf_from_sample needs n_centers > 0");
    if (sample.rows() == 0) throw BadParams("rbf_from_sample needs a non-empty sample");
    Rng rng = make_rng(seed, /*stream=*/0x72626699ULL);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(sample.rows()) - 1);
    Eigen::MatrixXd centers(n_centers, sample.cols());
    for (int i = 0; i < n_centers; ++i) centers.row(i) = sample.row(pick(rng));
    double h = bandwidth > 0.0 ? bandwidth : median_pairwise_distance(sample);
    if (!(h > 0.0)) h = 1.0;  // degenerate sample: all points identical
    FeatureMap fm = rbf(std::move(centers), h);
    fm.seed_ = seed;
    return fm;
}

int FeatureMap::slot(const Eigen::VectorXd& x) const {
    if (kind_ != Kind::tabular_onehot)
        throw KindMismatch("slot() is only defined for tabular feature maps");
    if (x.size() != input_dim_)
        throw DimensionMismatch("tabular feature input has wrong arity");
    long long idx = 0;
    for (int d = 0; d < input_dim_; ++d) {
        long long i = std::llround(x[d]);
        if (i < 0 || i >= radix_[d])
            throw DimensionMismatch("tabular feature index out of range in dimension " +
                                    std::to_string(d));
        idx = idx * radix_[d] + i;
    }
    return static_cast<int>(idx);
}

Eigen::VectorXd FeatureMap::operator()(const Eigen::VectorXd& x) const {
    switch (kind_) {
        case Kind::tabular_onehot: {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(output_dim_);
            out[slot(x)] = 1.0;
            return out;
        }
        case Kind::linear:
            if (x.size() != input_dim_)
                throw DimensionMismatch("linear feature input has wrong dimension");
            return x;
        case Kind::rbf_random: {
            if (x.size() != input_dim_)
                throw DimensionMismatch("rbf feature input has wrong dimension");
            const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
            Eigen::VectorXd d2 =
                (centers_.rowwise() - x.transpose()).rowwise().squaredNorm();
            return (d2.array() * -inv).exp();
        }
    }
    throw KindMismatch("unreachable feature kind");
}

Eigen::VectorXd rbf_features(const Eigen::VectorXd& state, const FeatureMap& map) {
    if (map.kind() != FeatureMap::Kind::rbf_random)
        throw KindMismatch("rbf_features expects an rbf_random map");
    return map(state);
}

nlohmann::json FeatureMap::to_json() const {
    nlohmann::json j;
    switch (kind_) {
        case Kind::tabular_onehot:
            j["kind"] = "tabular_onehot";
            j["radix"] = radix_;
            break;
        case Kind::linear:
            j["kind"] = "linear";
            j["input_dim"] = input_dim_;
            break;
        case Kind::rbf_random: {
            j["kind"] = "rbf_random";
            j["bandwidth"] = bandwidth_;
            j["seed"] = seed_;
            nlohmann::json rows = nlohmann::json::array();
            for (int r = 0; r < centers_.rows(); ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (int c = 0; c < centers_.cols(); ++c) row.push_back(centers_(r, c));
                rows.push_back(std::move(row));
            }
            j["centers"] = std::move(rows);
            break;
        }
    }
    return j;
}

FeatureMap FeatureMap::from_json(const nlohmann::json& j) {
    try {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "tabular_onehot") return tabular(j.at("radix").get<std::vector<int>>());
        if (kind == "linear") return linear(j.at("input_dim").get<int>());
        if (kind == "rbf_random") {
            const auto& rows = j.at("centers");
            Eigen::MatrixXd centers(rows.size(), rows.empty() ? 0 : rows[0].size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < rows[r].size(); ++c)
                    centers(r, c) = rows[r][c].get<double>();
            FeatureMap fm = rbf(std::move(centers), j.at("bandwidth").get<double>());
            if (j.contains("seed")) fm.seed_ = j.at("seed").get<std::uint64_t>();
            return fm;
        }
        throw ParseError("unknown feature map kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad feature map document: ") + e.what());
    }
}

}  // namespace sdec
