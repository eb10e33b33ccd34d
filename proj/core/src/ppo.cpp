#include "pertrl/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pertrl/util/errors.hpp"
#include "pertrl/util/rng.hpp"

namespace pertrl::ppo {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;

struct MinibatchArrays {
    Eigen::MatrixXd obs;
    Eigen::MatrixXd actions;
    Eigen::MatrixXd adv;
    Eigen::MatrixXd logp_old;
    Eigen::MatrixXd returns;
};

MinibatchArrays gather(const rollout::TrajectoryBatch& batch,
                       const std::vector<int>& indices, int obs_dim, int action_dim) {
    if (indices.empty()) throw std::invalid_argument("ppo: empty minibatch");
    if (!batch.advantages_computed)
        throw std::invalid_argument("ppo: batch advantages not computed");
    const int m = static_cast<int>(indices.size());
    MinibatchArrays a;
    a.obs.resize(m, obs_dim);
    a.actions.resize(m, action_dim);
    a.adv.resize(m, 1);
    a.logp_old.resize(m, 1);
    a.returns.resize(m, 1);
    for (int i = 0; i < m; ++i) {
        const auto& tr = batch.transitions[static_cast<std::size_t>(indices[i])];
        a.obs.row(i) = tr.obs.transpose();
        a.actions.row(i) = tr.action.transpose();
        a.adv(i, 0) = batch.advantages(indices[i]);
        a.logp_old(i, 0) = tr.log_prob_old;
        a.returns(i, 0) = batch.returns(indices[i]);
    }
    return a;
}

}  // namespace

void PpoConfig::validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
        throw ConfigError("ppo: clip_eps must be in (0, 1)");
    if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
    if (minibatch_size < 1) throw ConfigError("ppo: minibatch_size must be >= 1");
    if (learning_rate < 0.0) throw ConfigError("ppo: learning_rate must be >= 0");
    if (max_grad_norm <= 0.0) throw ConfigError("ppo: max_grad_norm must be > 0");
}

double clipped_term(double ratio, double advantage, double clip_eps) {
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    return std::min(ratio * advantage, clipped * advantage);
}

PpoStage::PpoStage(const nets::PolicyNet& policy, const nets::ValueNet& value)
    : policy_(&policy), value_(&value) {}

PpoStage::PolicyGraphs& PpoStage::policy_graphs(int m, double clip_eps,
                                                double entropy_coef) {
    const auto key = std::make_tuple(m, clip_eps, entropy_coef);
    auto it = policy_cache_.find(key);
    if (it != policy_cache_.end()) return it->second;

    PolicyGraphs pg;
    diff::Graph& g = pg.graph;
    const int A = policy_->action_dim();
    auto [mean, log_std] = policy_->build_graph(g, m);

    diff::NodeId actions = g.input("actions", m, A);
    diff::NodeId adv = g.input("adv", m, 1);
    diff::NodeId logp_old = g.input("logp_old", m, 1);

    diff::NodeId ls_rows = g.bcast_rows(log_std, m);
    diff::NodeId z = g.div(g.sub(actions, mean), g.exp(ls_rows));
    diff::NodeId logp = g.sub(g.scale(g.row_sum(g.square(z)), -0.5),
                              g.add_const(g.row_sum(ls_rows),
                                          kHalfLog2Pi * static_cast<double>(A)));
    diff::NodeId ratio = g.exp(g.sub(logp, logp_old));
    diff::NodeId unclipped = g.mul(ratio, adv);
    diff::NodeId clipped = g.mul(g.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv);
    pg.clip_mean =
        g.scale(g.sum(g.min(unclipped, clipped)), 1.0 / static_cast<double>(m));

    // State-independent log_std makes the entropy the same for every row.
    pg.entropy = g.add_const(g.sum(log_std),
                             (0.5 + kHalfLog2Pi) * static_cast<double>(A));
    pg.loss = g.sub(g.scale(pg.clip_mean, -1.0), g.scale(pg.entropy, entropy_coef));

    return policy_cache_.emplace(key, std::move(pg)).first->second;
}

PpoStage::ValueGraphs& PpoStage::value_graphs(int m, double value_coef) {
    const auto key = std::make_pair(m, value_coef);
    auto it = value_cache_.find(key);
    if (it != value_cache_.end()) return it->second;

    ValueGraphs vg;
    diff::Graph& g = vg.graph;
    diff::NodeId v = value_->build_graph(g, m);
    diff::NodeId returns = g.input("returns", m, 1);
    vg.half_mse = g.scale(g.sum(g.square(g.sub(v, returns))),
                          0.5 / static_cast<double>(m));
    vg.loss = g.scale(vg.half_mse, value_coef);
    return value_cache_.emplace(key, std::move(vg)).first->second;
}

double PpoStage::loss_value(const rollout::TrajectoryBatch& batch,
                            const std::vector<int>& indices,
                            const diff::ParamVector& policy_params,
                            const diff::ParamVector& value_params,
                            const PpoConfig& config) {
    config.validate();
    const MinibatchArrays a =
        gather(batch, indices, policy_->obs_dim(), policy_->action_dim());
    const int m = static_cast<int>(indices.size());

    PolicyGraphs& pg = policy_graphs(m, config.clip_eps, config.entropy_coef);
    diff::Binding pb{{"obs", a.obs}, {"actions", a.actions}, {"adv", a.adv},
                     {"logp_old", a.logp_old}};
    const auto pvals = pg.graph.eval({pg.clip_mean, pg.entropy}, policy_params, pb);

    ValueGraphs& vg = value_graphs(m, config.value_coef);
    diff::Binding vb{{"obs", a.obs}, {"returns", a.returns}};
    const double half_mse = vg.graph.eval_one(vg.half_mse, value_params, vb)(0, 0);

    return -pvals[0](0, 0) + config.value_coef * half_mse -
           config.entropy_coef * pvals[1](0, 0);
}

AdamState::AdamState(const diff::LayoutPtr& layout)
    : m_(Eigen::VectorXd::Zero(layout->total())),
      v_(Eigen::VectorXd::Zero(layout->total())) {}

void AdamState::apply(diff::ParamVector& params, const diff::ParamVector& grad,
                      double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++step_;
    const Eigen::VectorXd& g = grad.values();
    m_ = beta1 * m_ + (1.0 - beta1) * g;
    v_ = beta2 * v_.array().matrix() + (1.0 - beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    params.values().array() -=
        lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps);
}

FineTuneResult PpoStage::fine_tune(const diff::ParamVector& theta_prime,
                                   const diff::ParamVector& value_params,
                                   const rollout::TrajectoryBatch& batch,
                                   const PpoConfig& config, std::uint64_t seed) {
    config.validate();
    if (batch.size() == 0) throw std::invalid_argument("ppo: empty batch");

    FineTuneResult result{theta_prime, value_params};
    AdamState policy_adam(policy_->layout());
    AdamState value_adam(value_->layout());
    util::Rng rng(util::mix_seed(seed, 0x70706fULL));

    std::vector<int> order(static_cast<std::size_t>(batch.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.minibatch_size)) {
            const std::size_t end = std::min(
                order.size(), start + static_cast<std::size_t>(config.minibatch_size));
            const std::vector<int> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            const int m = static_cast<int>(indices.size());
            const MinibatchArrays a =
                gather(batch, indices, policy_->obs_dim(), policy_->action_dim());

            PolicyGraphs& pg = policy_graphs(m, config.clip_eps, config.entropy_coef);
            diff::Binding pb{{"obs", a.obs}, {"actions", a.actions}, {"adv", a.adv},
                             {"logp_old", a.logp_old}};
            diff::ParamVector pgrad =
                diff::gradient(pg.graph, pg.loss, result.policy_params, pb);
            const double ploss =
                pg.graph.eval_one(pg.loss, result.policy_params, pb)(0, 0);

            ValueGraphs& vg = value_graphs(m, config.value_coef);
            diff::Binding vb{{"obs", a.obs}, {"returns", a.returns}};
            diff::ParamVector vgrad =
                diff::gradient(vg.graph, vg.loss, result.value_params, vb);
            const double vloss =
                vg.graph.eval_one(vg.loss, result.value_params, vb)(0, 0);

            if (!std::isfinite(ploss) || !std::isfinite(vloss) ||
                !pgrad.all_finite() || !vgrad.all_finite()) {
                result.aborted = true;
                return result;
            }

            // Joint gradient-norm clip across both parameter sets.
            const double norm =
                std::sqrt(pgrad.values().squaredNorm() + vgrad.values().squaredNorm());
            if (norm > config.max_grad_norm) {
                const double s = config.max_grad_norm / norm;
                pgrad *= s;
                vgrad *= s;
            }

            policy_adam.apply(result.policy_params, pgrad, config.learning_rate);
            value_adam.apply(result.value_params, vgrad, config.learning_rate);
            policy_->clamp_log_std(result.policy_params);

            result.final_policy_term = ploss;
            result.final_value_term = vloss;
            result.final_loss = ploss + vloss;
        }
    }
    return result;
}

}  // namespace pertrl::ppo
