#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pertrl/diff/graph.hpp"
#include "pertrl/diff/param_vector.hpp"

namespace pertrl::nets {

// Diagonal Gaussian over actions: state-dependent mean, state-independent
// log-std.
struct GaussianDist {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    int dim() const { return static_cast<int>(mean.size()); }
    double log_prob(const Eigen::VectorXd& action) const;
    double entropy() const;
    static double kl(const GaussianDist& old_dist, const GaussianDist& new_dist);
};

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

namespace detail {
struct MlpLayout {
    int in_dim;
    std::vector<int> hidden;
    int out_dim;
    diff::LayoutPtr layout;  // W0,b0,...,Wk,bk (+ optional trailing slots)
};
}  // namespace detail

// obs -> 256 -> 256 -> action mean, tanh hidden activations; plus a free
// per-dimension log_std parameter.
class PolicyNet {
public:
    PolicyNet(int obs_dim, int action_dim, std::vector<int> hidden = {256, 256});

    int obs_dim() const { return mlp_.in_dim; }
    int action_dim() const { return mlp_.out_dim; }
    const std::vector<int>& hidden() const { return mlp_.hidden; }
    const diff::LayoutPtr& layout() const { return mlp_.layout; }

    diff::ParamVector init_params(std::uint64_t seed) const;
    GaussianDist forward(const diff::ParamVector& params,
                         const Eigen::VectorXd& obs) const;
    // Batched mean head: obs rows -> mean rows.
    Eigen::MatrixXd mean_batch(const diff::ParamVector& params,
                               const Eigen::MatrixXd& obs) const;

    // Batched graph over an input "obs" (T x obs_dim). Registers this net's
    // parameters on g; returns {mean node (T x action_dim), log_std node
    // (1 x action_dim)}. Must be the first param registrar on g so the graph
    // layout matches layout().
    std::pair<diff::NodeId, diff::NodeId> build_graph(diff::Graph& g, int batch) const;

    void clamp_log_std(diff::ParamVector& params) const;

private:
    detail::MlpLayout mlp_;
};

// obs -> 256 -> 256 -> scalar value.
class ValueNet {
public:
    ValueNet(int obs_dim, std::vector<int> hidden = {256, 256});

    int obs_dim() const { return mlp_.in_dim; }
    const std::vector<int>& hidden() const { return mlp_.hidden; }
    const diff::LayoutPtr& layout() const { return mlp_.layout; }

    diff::ParamVector init_params(std::uint64_t seed) const;
    double forward(const diff::ParamVector& params, const Eigen::VectorXd& obs) const;
    Eigen::VectorXd value_batch(const diff::ParamVector& params,
                                const Eigen::MatrixXd& obs) const;

    // Returns the value node (T x 1) over input "obs".
    diff::NodeId build_graph(diff::Graph& g, int batch) const;

private:
    detail::MlpLayout mlp_;
};

}  // namespace pertrl::nets
