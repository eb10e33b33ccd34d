#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pertrl/util/rng.hpp"
#include <string>
#include <vector>

#include "pertrl/nets/policy_value.hpp"

namespace pertrl::rollout {

struct StepResult {
    Eigen::VectorXd obs;
    double reward = 0.0;
    bool done = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual int observation_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual Eigen::VectorXd reset(util::Rng& rng) = 0;
    virtual StepResult step(const Eigen::VectorXd& action) = 0;
};

struct Transition {
    Eigen::VectorXd obs;
    Eigen::VectorXd action;
    double reward = 0.0;
    bool done = false;
    double log_prob_old = 0.0;  // acting policy at collection time, never recomputed
    double value_old = 0.0;
};

struct TrajectoryBatch {
    std::vector<Transition> transitions;
    Eigen::VectorXd advantages;
    Eigen::VectorXd returns;
    double final_next_value = 0.0;  // V(s_T) bootstrap when the batch truncates an episode
    bool final_done = false;
    bool advantages_computed = false;

    // Completed-episode reward sums observed during collection (for logging).
    std::vector<double> episode_rewards;

    int size() const { return static_cast<int>(transitions.size()); }
};

TrajectoryBatch collect_rollout(Env& env, const nets::PolicyNet& policy,
                                const diff::ParamVector& policy_params,
                                const nets::ValueNet& value,
                                const diff::ParamVector& value_params, int horizon,
                                std::uint64_t seed);

// GAE(gamma, lam): A_t = sum_l (gamma*lam)^l * delta_{t+l}, truncated at
// episode ends; R_t = A_t + V(s_t).
void compute_gae(TrajectoryBatch& batch, double gamma, double lam);

// Zero-mean unit-std advantages; no-op for T < 2 or nearly constant input.
void normalize_advantages(TrajectoryBatch& batch);

// Columnar batch dump for offline inspection (version-tagged TSV).
void dump_batch(const TrajectoryBatch& batch, const std::string& path);

}  // namespace pertrl::rollout
