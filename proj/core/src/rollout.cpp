#include "pertrl/rollout/rollout.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "pertrl/util/errors.hpp"

namespace pertrl::rollout {

TrajectoryBatch collect_rollout(Env& env, const nets::PolicyNet& policy,
                                const diff::ParamVector& policy_params,
                                const nets::ValueNet& value,
                                const diff::ParamVector& value_params, int horizon,
                                std::uint64_t seed) {
    if (horizon < 1) throw std::invalid_argument("collect_rollout: horizon must be >= 1");

    util::Rng action_rng(util::mix_seed(seed, 0x616374ULL));
    util::Rng env_rng(util::mix_seed(seed, 0x656e76ULL));
    std::normal_distribution<double> normal(0.0, 1.0);

    TrajectoryBatch batch;
    batch.transitions.reserve(static_cast<std::size_t>(horizon));

    Eigen::VectorXd obs = env.reset(env_rng);
    double episode_reward = 0.0;
    for (int t = 0; t < horizon; ++t) {
        nets::GaussianDist dist = policy.forward(policy_params, obs);
        Eigen::VectorXd z(dist.dim());
        for (int i = 0; i < dist.dim(); ++i) z(i) = normal(action_rng);
        Eigen::VectorXd action =
            dist.mean + dist.log_std.array().exp().matrix().cwiseProduct(z);

        Transition tr;
        tr.obs = obs;
        tr.action = action;
        tr.log_prob_old = dist.log_prob(action);
        tr.value_old = value.forward(value_params, obs);

        StepResult sr;
        try {
            sr = env.step(action);
        } catch (const std::exception& e) {
            throw NumericalError("collect_rollout: env failure at step " +
                                 std::to_string(t) + ": " + e.what());
        }
        tr.reward = sr.reward;
        tr.done = sr.done;
        episode_reward += sr.reward;
        batch.transitions.push_back(std::move(tr));

        if (sr.done) {
            batch.episode_rewards.push_back(episode_reward);
            episode_reward = 0.0;
            obs = env.reset(env_rng);
        } else {
            obs = sr.obs;
        }
    }
    batch.final_done = batch.transitions.back().done;
    batch.final_next_value = batch.final_done ? 0.0 : value.forward(value_params, obs);
    return batch;
}

void compute_gae(TrajectoryBatch& batch, double gamma, double lam) {
    const int n = batch.size();
    if (n == 0) throw std::invalid_argument("compute_gae: empty batch");
    if (gamma < 0.0 || gamma > 1.0 || lam < 0.0 || lam > 1.0)
        throw std::invalid_argument("compute_gae: gamma and lam must be in [0,1]");

    batch.advantages.resize(n);
    batch.returns.resize(n);
    double gae = 0.0;
    for (int t = n - 1; t >= 0; --t) {
        const Transition& tr = batch.transitions[static_cast<std::size_t>(t)];
        const double not_done = tr.done ? 0.0 : 1.0;
        const double v_next =
            t + 1 < n ? batch.transitions[static_cast<std::size_t>(t + 1)].value_old
                      : batch.final_next_value;
        const double delta = tr.reward + gamma * v_next * not_done - tr.value_old;
        gae = delta + gamma * lam * not_done * gae;
        batch.advantages(t) = gae;
        batch.returns(t) = gae + tr.value_old;
    }
    batch.advantages_computed = true;
}

void normalize_advantages(TrajectoryBatch& batch) {
    if (!batch.advantages_computed)
        throw std::invalid_argument("normalize_advantages: advantages not computed");
    const int n = batch.size();
    if (n < 2) return;
    const double mean = batch.advantages.mean();
    const double var =
        (batch.advantages.array() - mean).square().sum() / static_cast<double>(n);
    const double std = std::sqrt(var);
    if (std < 1e-8) return;
    batch.advantages = (batch.advantages.array() - mean) / std;
}

void dump_batch(const TrajectoryBatch& batch, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("dump_batch: cannot open " + path);
    os << "#pertrl-batch\tv1\n";
    os << "t\treward\tdone\tlog_prob_old\tvalue_old\tadvantage\treturn\n";
    os.precision(17);
    for (int t = 0; t < batch.size(); ++t) {
        const Transition& tr = batch.transitions[static_cast<std::size_t>(t)];
        os << t << '\t' << tr.reward << '\t' << (tr.done ? 1 : 0) << '\t'
           << tr.log_prob_old << '\t' << tr.value_old << '\t'
           << (batch.advantages_computed ? batch.advantages(t) : 0.0) << '\t'
           << (batch.advantages_computed ? batch.returns(t) : 0.0) << '\n';
    }
}

}  // namespace pertrl::rollout
