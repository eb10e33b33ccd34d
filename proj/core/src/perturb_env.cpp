#include "pertrl/env/perturb_env.hpp"

#include <algorithm>
#include <stdexcept>

#include "pertrl/util/errors.hpp"

namespace pertrl::env {

void EnvConfig::validate() const {
    if (episode_length < 1) throw ConfigError("env: episode_length must be >= 1");
    if (action_scale <= 0.0) throw ConfigError("env: action_scale must be > 0");
    if (noise_std < 0.0) throw ConfigError("env: noise_std must be >= 0");
    if (knockout_floor < 0.0) throw ConfigError("env: knockout_floor must be >= 0");
    if (!(overexpress_min > 0.0 && overexpress_max >= overexpress_min))
        throw ConfigError("env: bad overexpression fold-range");
    if (gene_subset < 1) throw ConfigError("env: gene_subset must be >= 1");
}

Eigen::VectorXd apply_perturbation(const Eigen::VectorXd& profile,
                                   const PerturbationSpec& spec,
                                   const RegulatoryNetwork& network,
                                   const EnvConfig& config, util::Rng& rng) {
    const int n = static_cast<int>(profile.size());
    if (spec.target < 0 || spec.target >= n)
        throw std::out_of_range("apply_perturbation: target gene index out of range");
    if (network.n_genes() != n)
        throw std::invalid_argument("apply_perturbation: network size mismatch");

    double new_value;
    if (spec.kind == PerturbationSpec::Kind::Knockout) {
        new_value = profile(spec.target) * config.knockout_floor;
    } else {
        if (!(spec.magnitude > 0.0))
            throw std::invalid_argument("apply_perturbation: overexpression needs magnitude > 0");
        new_value = profile(spec.target) * spec.magnitude;
    }
    const double direct_change = new_value - profile(spec.target);

    Eigen::VectorXd target = profile;
    target(spec.target) = new_value;
    // Linear downstream propagation: column `target` of W times the change.
    target += network.effects.col(spec.target) * direct_change;

    if (config.noise_std > 0.0) {
        std::normal_distribution<double> noise(0.0, config.noise_std);
        for (int i = 0; i < n; ++i) target(i) += noise(rng);
    }
    return target;
}

PerturbEnv::PerturbEnv(const ExpressionDataset& dataset,
                       const RegulatoryNetwork& network, const EnvConfig& config,
                       Split split)
    : dataset_(&dataset), config_(config), split_(split) {
    config_.validate();
    if (config_.gene_subset > dataset.n_genes())
        throw ConfigError("env: gene_subset exceeds dataset genes");
    n_genes_ = config_.gene_subset;
    if (network.n_genes() < n_genes_)
        throw ConfigError("env: regulatory network smaller than gene subset");
    network_.effects = network.effects.topLeftCorner(n_genes_, n_genes_);
    cells_ = dataset.cells_in(split);
    if (cells_.empty()) throw DataError("env: no cells in the requested split");
}

PerturbationSpec PerturbEnv::sample_spec(util::Rng& rng) const {
    std::uniform_int_distribution<int> kind_dist(0, 1);
    std::uniform_int_distribution<int> gene_dist(0, n_genes_ - 1);
    PerturbationSpec spec;
    spec.kind = kind_dist(rng) == 0 ? PerturbationSpec::Kind::Knockout
                                    : PerturbationSpec::Kind::Overexpress;
    spec.target = gene_dist(rng);
    if (spec.kind == PerturbationSpec::Kind::Overexpress) {
        std::uniform_real_distribution<double> fold(config_.overexpress_min,
                                                    config_.overexpress_max);
        spec.magnitude = fold(rng);
    }
    return spec;
}

Eigen::VectorXd PerturbEnv::reset(util::Rng& rng) {
    std::uniform_int_distribution<std::size_t> cell_dist(0, cells_.size() - 1);
    return reset_to_cell(cells_[cell_dist(rng)], rng);
}

Eigen::VectorXd PerturbEnv::reset_to_cell(int cell_index, util::Rng& rng) {
    if (std::find(cells_.begin(), cells_.end(), cell_index) == cells_.end())
        throw std::invalid_argument("env reset: cell " + std::to_string(cell_index) +
                                    " is not in the active split");
    baseline_ = dataset_->matrix.row(cell_index).head(n_genes_).transpose();
    pseudotime_ = dataset_->pseudotime(cell_index);
    spec_ = sample_spec(rng);
    target_ = apply_perturbation(baseline_, spec_, network_, config_, rng);
    prediction_ = baseline_;
    steps_elapsed_ = 0;
    episode_active_ = true;
    return observation();
}

Eigen::VectorXd PerturbEnv::observation() const {
    Eigen::VectorXd obs(observation_dim());
    obs.head(n_genes_) = prediction_;
    obs.segment(n_genes_, 2 * n_genes_).setZero();
    const int kind_offset =
        spec_.kind == PerturbationSpec::Kind::Knockout ? 0 : n_genes_;
    obs(n_genes_ + kind_offset + spec_.target) = 1.0;
    obs(3 * n_genes_) = pseudotime_;
    return obs;
}

rollout::StepResult PerturbEnv::step(const Eigen::VectorXd& action) {
    if (!episode_active_)
        throw std::logic_error("env step: episode is done; call reset");
    if (action.size() != n_genes_)
        throw std::invalid_argument("env step: action dimension mismatch");

    const Eigen::VectorXd clamped =
        action.array().max(-config_.action_scale).min(config_.action_scale);
    const double n = static_cast<double>(n_genes_);
    const double mse_prev = (prediction_ - target_).squaredNorm() / n;
    prediction_ += clamped;
    const double mse_new = (prediction_ - target_).squaredNorm() / n;

    ++steps_elapsed_;
    rollout::StepResult sr;
    sr.reward = mse_prev - mse_new;
    sr.done = steps_elapsed_ >= config_.episode_length;
    if (sr.done) episode_active_ = false;
    sr.obs = observation();
    return sr;
}

}  // namespace pertrl::env
