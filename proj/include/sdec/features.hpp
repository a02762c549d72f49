#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sdec/errors.hpp"
#include "sdec/rng.hpp"

#include <json.hpp>

namespace sdec {

/// Fixed (untrained) feature map. Three kinds:
///  - tabular_onehot: the input is a tuple of indices (given as doubles); the
///    output is a one-hot vector over the mixed-radix slot.
///  - linear: identity features.
///  - rbf_random: Gaussian bumps phi_i(x) = exp(-|x - c_i|^2 / (2 h^2)) at
///    fixed centers c_i with a shared bandwidth h.
class FeatureMap {
  public:
    enum class Kind { tabular_onehot, linear, rbf_random };

    static FeatureMap tabular(std::vector<int> radix);
    static FeatureMap linear(int input_dim);
    static FeatureMap rbf(Eigen::MatrixXd centers, double bandwidth);

    /// Centers drawn uniformly (with replacement) from the sample rows;
    /// bandwidth from the median trick unless one is supplied (> 0).
    static FeatureMap rbf_from_sample(const Eigen::MatrixXd& sample, int n_centers,
                                      std::uint64_t seed, double bandwidth = -1.0);

    /// Median pairwise Euclidean distance between sample rows.
    static double median_pairwise_distance(const Eigen::MatrixXd& sample);

    Kind kind() const { return kind_; }
    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }
    double bandwidth() const { return bandwidth_; }
    std::uint64_t seed() const { return seed_; }
    const Eigen::MatrixXd& centers() const { return centers_; }
    const std::vector<int>& radix() const { return radix_; }

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;

    /// Slot index for tabular maps (mixed-radix over the input tuple).
    int slot(const Eigen::VectorXd& x) const;

    nlohmann::json to_json() const;
    static FeatureMap from_json(const nlohmann::json& j);

  private:
    FeatureMap() = default;
    Kind kind_ = Kind::linear;
    int input_dim_ = 0;
    int output_dim_ = 0;
    std::vector<int> radix_;    // tabular only
    Eigen::MatrixXd centers_;   // rbf only, n_centers x input_dim
    double bandwidth_ = 1.0;    // rbf only
    std::uint64_t seed_ = 0;    // center-draw seed, recorded for checkpoints
};

/// phi(state) for an rbf_random map (the map itself for the other kinds).
Eigen::VectorXd rbf_features(const Eigen::VectorXd& state, const FeatureMap& map);

}  // namespace sdec
