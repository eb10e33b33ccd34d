#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pertrl/rollout/rollout.hpp"

using namespace pertrl;
using rollout::TrajectoryBatch;
using rollout::Transition;

namespace {

// Deterministic scripted environment for collection tests.
class ScriptEnv : public rollout::Env {
public:
    explicit ScriptEnv(int episode_length) : episode_length_(episode_length) {}
    int observation_dim() const override { return 2; }
    int action_dim() const override { return 1; }

    Eigen::VectorXd reset(util::Rng& rng) override {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        t_ = 0;
        state_ = u(rng);
        return obs();
    }
    rollout::StepResult step(const Eigen::VectorXd& action) override {
        ++t_;
        state_ += 0.1 * action(0);
        return {obs(), state_, t_ >= episode_length_};
    }

private:
    Eigen::VectorXd obs() const {
        Eigen::VectorXd o(2);
        o << state_, static_cast<double>(t_);
        return o;
    }
    int episode_length_;
    int t_ = 0;
    double state_ = 0.0;
};

TrajectoryBatch make_batch(const std::vector<double>& rewards,
                           const std::vector<double>& values,
                           const std::vector<int>& dones,
                           double final_next_value) {
    TrajectoryBatch b;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        Transition t;
        t.obs = Eigen::VectorXd::Zero(1);
        t.action = Eigen::VectorXd::Zero(1);
        t.reward = rewards[i];
        t.value_old = values[i];
        t.done = dones[i] != 0;
        b.transitions.push_back(t);
    }
    b.final_next_value = final_next_value;
    b.final_done = dones.back() != 0;
    return b;
}

// Reference double-loop estimator: A_t = sum_l (gamma*lam)^l delta_{t+l},
// truncated at the first done.
std::vector<double> brute_force_gae(const std::vector<double>& rewards,
                                    const std::vector<double>& values,
                                    const std::vector<int>& dones,
                                    double final_next_value, double gamma,
                                    double lam) {
    const std::size_t T = rewards.size();
    auto next_value = [&](std::size_t t) {
        if (dones[t]) return 0.0;
        return t + 1 < T ? values[t + 1] : final_next_value;
    };
    std::vector<double> adv(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double factor = 1.0;
        for (std::size_t l = t; l < T; ++l) {
            adv[t] += factor * (rewards[l] + gamma * next_value(l) - values[l]);
            if (dones[l]) break;
            factor *= gamma * lam;
        }
    }
    return adv;
}

}  // namespace

TEST_CASE("gae matches the brute-force double loop") {
    const std::vector<double> rewards = {0.5, -0.2, 1.0, 0.1, 0.0, 2.0, -1.0};
    const std::vector<double> values = {0.3, 0.2, -0.1, 0.4, 0.0, 1.0, 0.5};
    const std::vector<int> dones = {0, 0, 1, 0, 0, 0, 0};
    const double final_next_value = 0.7;

    TrajectoryBatch b = make_batch(rewards, values, dones, final_next_value);
    rollout::compute_gae(b, 0.99, 0.95);
    const auto ref =
        brute_force_gae(rewards, values, dones, final_next_value, 0.99, 0.95);
    REQUIRE(b.advantages.size() == 7);
    for (int t = 0; t < 7; ++t) {
        CHECK(b.advantages(t) == doctest::Approx(ref[t]).epsilon(1e-12));
        CHECK(b.returns(t) ==
              doctest::Approx(ref[t] + values[t]).epsilon(1e-12));
    }
}

TEST_CASE("gae with lambda = 0 reduces to one-step TD errors") {
    const std::vector<double> rewards = {1.0, 0.5, -0.3, 0.8};
    const std::vector<double> values = {0.2, -0.1, 0.4, 0.6};
    const std::vector<int> dones = {0, 0, 0, 1};
    TrajectoryBatch b = make_batch(rewards, values, dones, 0.0);
    rollout::compute_gae(b, 0.9, 0.0);
    for (int t = 0; t < 4; ++t) {
        const double next_v = (t == 3) ? 0.0 : values[t + 1];
        const double delta = rewards[t] + 0.9 * next_v * (dones[t] ? 0.0 : 1.0) -
                             values[t];
        CHECK(b.advantages(t) == doctest::Approx(delta).epsilon(1e-12));
    }
}

TEST_CASE("episode boundaries block advantage flow") {
    // Identical prefix; a large terminal-segment reward must not leak into
    // the pre-done advantages.
    const std::vector<double> rewards_a = {0.1, 0.2, 0.0, 100.0};
    const std::vector<double> rewards_b = {0.1, 0.2, 0.0, -100.0};
    const std::vector<double> values = {0.0, 0.0, 0.0, 0.0};
    const std::vector<int> dones = {0, 1, 0, 1};
    TrajectoryBatch a = make_batch(rewards_a, values, dones, 0.0);
    TrajectoryBatch b = make_batch(rewards_b, values, dones, 0.0);
    rollout::compute_gae(a, 0.99, 0.95);
    rollout::compute_gae(b, 0.99, 0.95);
    CHECK(a.advantages(0) == b.advantages(0));
    CHECK(a.advantages(1) == b.advantages(1));
    CHECK(a.advantages(3) != b.advantages(3));
}

TEST_CASE("advantage normalization hits a hand-computed case") {
    TrajectoryBatch b = make_batch({0, 0, 0}, {0, 0, 0}, {0, 0, 1}, 0.0);
    b.advantages = Eigen::VectorXd(3);
    b.advantages << 1.0, 2.0, 3.0;
    b.returns = Eigen::VectorXd::Zero(3);
    b.advantages_computed = true;
    rollout::normalize_advantages(b);
    // Population std of {1,2,3} is sqrt(2/3).
    const double s = std::sqrt(2.0 / 3.0);
    CHECK(b.advantages(0) == doctest::Approx(-1.0 / s).epsilon(1e-12));
    CHECK(b.advantages(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.advantages(2) == doctest::Approx(1.0 / s).epsilon(1e-12));
    CHECK(b.advantages(0) == doctest::Approx(-1.224744871391589).epsilon(1e-12));
}

TEST_CASE("normalization is a no-op for constant or tiny batches") {
    TrajectoryBatch b = make_batch({0, 0}, {0, 0}, {0, 1}, 0.0);
    b.advantages = Eigen::VectorXd::Constant(2, 5.0);
    b.returns = Eigen::VectorXd::Zero(2);
    b.advantages_computed = true;
    rollout::normalize_advantages(b);
    CHECK(b.advantages(0) == 5.0);

    TrajectoryBatch one = make_batch({0}, {0}, {1}, 0.0);
    one.advantages = Eigen::VectorXd::Constant(1, 3.0);
    one.returns = Eigen::VectorXd::Zero(1);
    one.advantages_computed = true;
    rollout::normalize_advantages(one);
    CHECK(one.advantages(0) == 3.0);
}

TEST_CASE("collection is deterministic per seed and records old quantities") {
    ScriptEnv env(5);
    nets::PolicyNet policy(2, 1, {8});
    nets::ValueNet value(2, {8});
    const diff::ParamVector pp = policy.init_params(17);
    const diff::ParamVector vp = value.init_params(17);

    TrajectoryBatch a = rollout::collect_rollout(env, policy, pp, value, vp, 12, 99);
    ScriptEnv env2(5);
    TrajectoryBatch b =
        rollout::collect_rollout(env2, policy, pp, value, vp, 12, 99);
    ScriptEnv env3(5);
    TrajectoryBatch c =
        rollout::collect_rollout(env3, policy, pp, value, vp, 12, 100);

    REQUIRE(a.size() == 12);
    REQUIRE(b.size() == 12);
    bool same = true, diff_seed_same = true;
    for (int t = 0; t < 12; ++t) {
        same = same && a.transitions[t].action == b.transitions[t].action &&
               a.transitions[t].reward == b.transitions[t].reward;
        diff_seed_same =
            diff_seed_same && a.transitions[t].action == c.transitions[t].action;
    }
    CHECK(same);
    CHECK(!diff_seed_same);

    // log_prob_old and value_old match recomputation at collection params.
    for (int t = 0; t < 12; ++t) {
        const auto& tr = a.transitions[t];
        const nets::GaussianDist d = policy.forward(pp, tr.obs);
        CHECK(tr.log_prob_old == doctest::Approx(d.log_prob(tr.action)).epsilon(1e-12));
        CHECK(tr.value_old == doctest::Approx(value.forward(vp, tr.obs)).epsilon(1e-12));
    }

    // Episodes of length 5 inside horizon 12: dones at t = 4 and 9.
    CHECK(a.transitions[4].done);
    CHECK(a.transitions[9].done);
    CHECK(!a.transitions[11].done);
    CHECK(a.episode_rewards.size() == 2);
    // Truncated tail bootstraps from the value net.
    CHECK(!a.final_done);
}
