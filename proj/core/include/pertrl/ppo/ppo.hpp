#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "pertrl/diff/graph.hpp"
#include "pertrl/nets/policy_value.hpp"
#include "pertrl/rollout/rollout.hpp"

namespace pertrl::ppo {

struct PpoConfig {
    double clip_eps = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    int epochs = 10;
    int minibatch_size = 64;
    double learning_rate = 3e-4;
    double max_grad_norm = 0.5;

    void validate() const;
};

// min(r*A, clip(r, 1-eps, 1+eps)*A), scalar form.
double clipped_term(double ratio, double advantage, double clip_eps);

struct FineTuneResult {
    diff::ParamVector policy_params;
    diff::ParamVector value_params;
    double final_loss = 0.0;        // combined loss on the last minibatch
    double final_policy_term = 0.0; // -E[L_CLIP] - c_e E[H]
    double final_value_term = 0.0;  // c_v E[(V-R)^2 / 2]
    bool aborted = false;           // non-finite loss encountered
};

// Clipped-surrogate fine-tuning from the TRPO-preconditioned parameters.
class PpoStage {
public:
    PpoStage(const nets::PolicyNet& policy, const nets::ValueNet& value);

    // Combined Eq.-(8)-style scalar loss on a set of transition indices.
    double loss_value(const rollout::TrajectoryBatch& batch,
                      const std::vector<int>& indices,
                      const diff::ParamVector& policy_params,
                      const diff::ParamVector& value_params,
                      const PpoConfig& config);

    FineTuneResult fine_tune(const diff::ParamVector& theta_prime,
                             const diff::ParamVector& value_params,
                             const rollout::TrajectoryBatch& batch,
                             const PpoConfig& config, std::uint64_t seed);

private:
    struct PolicyGraphs {
        diff::Graph graph;
        diff::NodeId clip_mean = -1;  // E[L_CLIP]
        diff::NodeId entropy = -1;    // E[H]
        diff::NodeId loss = -1;       // -E[L_CLIP] - c_e E[H]
    };
    struct ValueGraphs {
        diff::Graph graph;
        diff::NodeId half_mse = -1;  // E[(V - R)^2 / 2]
        diff::NodeId loss = -1;      // c_v * half_mse
    };
    // Graphs keyed by (minibatch size, coefficients); bounds are baked in.
    PolicyGraphs& policy_graphs(int m, double clip_eps, double entropy_coef);
    ValueGraphs& value_graphs(int m, double value_coef);

    const nets::PolicyNet* policy_;
    const nets::ValueNet* value_;
    std::map<std::tuple<int, double, double>, PolicyGraphs> policy_cache_;
    std::map<std::pair<int, double>, ValueGraphs> value_cache_;
};

// Bias-corrected adaptive moment optimizer state over a flat ParamVector.
class AdamState {
public:
    explicit AdamState(const diff::LayoutPtr& layout);
    void apply(diff::ParamVector& params, const diff::ParamVector& grad, double lr);

private:
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    long step_ = 0;
};

}  // namespace pertrl::ppo
