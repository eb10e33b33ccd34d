#pragma once

#include <cstdint>
#include <optional>

#include "pertrl/env/dataset.hpp"
#include "pertrl/rollout/rollout.hpp"
#include "pertrl/util/rng.hpp"

namespace pertrl::env {

struct PerturbationSpec {
    enum class Kind { Knockout, Overexpress };
    Kind kind = Kind::Knockout;
    int target = 0;
    double magnitude = 0.0;  // overexpression fold; drawn at sampling time
};

struct EnvConfig {
    int episode_length = 8;
    double action_scale = 0.5;      // max per-step per-gene adjustment
    double noise_std = 0.05;        // biological noise on targets
    double knockout_floor = 0.0;    // multiplicative residual after knockout
    double overexpress_min = 1.5;   // fold-range for overexpression
    double overexpress_max = 3.0;
    int gene_subset = 32;           // leading genes used by the environment

    void validate() const;
};

// Ground-truth post-perturbation profile: direct multiplicative effect on the
// target gene, linear downstream propagation through W, additive noise.
Eigen::VectorXd apply_perturbation(const Eigen::VectorXd& profile,
                                   const PerturbationSpec& spec,
                                   const RegulatoryNetwork& network,
                                   const EnvConfig& config, util::Rng& rng);

// Simulated CRISPR perturbation environment. Each episode is one cell:
// observation = [current predicted profile | one-hot(kind, target) | pseudotime],
// actions are clamped per-gene adjustments, reward is the per-step reduction
// in MSE toward the hidden target profile.
class PerturbEnv : public rollout::Env {
public:
    PerturbEnv(const ExpressionDataset& dataset, const RegulatoryNetwork& network,
               const EnvConfig& config, Split split);

    int observation_dim() const override { return 3 * n_genes_ + 1; }
    int action_dim() const override { return n_genes_; }

    Eigen::VectorXd reset(util::Rng& rng) override;  // seeded cell + perturbation draw
    Eigen::VectorXd reset_to_cell(int cell_index, util::Rng& rng);
    rollout::StepResult step(const Eigen::VectorXd& action) override;

    int n_genes() const { return n_genes_; }
    const Eigen::VectorXd& baseline() const { return baseline_; }
    const Eigen::VectorXd& prediction() const { return prediction_; }
    const Eigen::VectorXd& target() const { return target_; }  // test-only access
    const PerturbationSpec& spec() const { return spec_; }

private:
    Eigen::VectorXd observation() const;
    PerturbationSpec sample_spec(util::Rng& rng) const;

    const ExpressionDataset* dataset_;
    RegulatoryNetwork network_;  // restricted to the gene subset
    EnvConfig config_;
    Split split_;
    std::vector<int> cells_;
    int n_genes_ = 0;

    Eigen::VectorXd baseline_;
    Eigen::VectorXd prediction_;
    Eigen::VectorXd target_;
    PerturbationSpec spec_;
    double pseudotime_ = 0.0;
    int steps_elapsed_ = 0;
    bool episode_active_ = false;
};

}  // namespace pertrl::env
