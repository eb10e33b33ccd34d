#include <benchmark/benchmark.h>

#include <random>

#include "pertrl/env/perturb_env.hpp"
#include "pertrl/rollout/rollout.hpp"
#include "pertrl/trpo/trust_region.hpp"

using namespace pertrl;

namespace {

diff::ParamVector randomized(const diff::LayoutPtr& layout, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.4);
    diff::ParamVector p(layout);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.values()(i) = normal(rng);
    return p;
}

rollout::TrajectoryBatch sample_batch(const nets::PolicyNet& policy,
                                      const diff::ParamVector& params, int T) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 0.5);
    rollout::TrajectoryBatch b;
    for (int t = 0; t < T; ++t) {
        rollout::Transition tr;
        tr.obs = Eigen::VectorXd::NullaryExpr(
            policy.obs_dim(), [&](Eigen::Index) { return normal(rng); });
        const nets::GaussianDist d = policy.forward(params, tr.obs);
        tr.action = d.mean + Eigen::VectorXd::NullaryExpr(
                                 policy.action_dim(),
                                 [&](Eigen::Index) { return normal(rng); });
        tr.log_prob_old = d.log_prob(tr.action);
        tr.done = (t + 1) % 8 == 0;
        b.transitions.push_back(tr);
    }
    b.advantages = Eigen::VectorXd::NullaryExpr(
        T, [&](Eigen::Index) { return normal(rng); });
    b.returns = Eigen::VectorXd::Zero(T);
    b.advantages_computed = true;
    return b;
}

void BM_GraphForward(benchmark::State& state) {
    const int T = static_cast<int>(state.range(0));
    nets::PolicyNet policy(97, 32);
    const diff::ParamVector params = randomized(policy.layout(), 1);
    diff::Graph g;
    auto [mean, log_std] = policy.build_graph(g, T);
    const diff::NodeId loss = g.sum(g.square(mean));
    Eigen::MatrixXd obs = Eigen::MatrixXd::Random(T, 97);
    const diff::Binding bind = {{"obs", obs}};
    for (auto _ : state)
        benchmark::DoNotOptimize(diff::evaluate(g, loss, params, bind));
    state.SetItemsProcessed(state.iterations() * T);
}

void BM_GraphGradient(benchmark::State& state) {
    const int T = static_cast<int>(state.range(0));
    nets::PolicyNet policy(97, 32);
    const diff::ParamVector params = randomized(policy.layout(), 1);
    diff::Graph g;
    auto [mean, log_std] = policy.build_graph(g, T);
    const diff::NodeId loss = g.sum(g.square(mean));
    Eigen::MatrixXd obs = Eigen::MatrixXd::Random(T, 97);
    const diff::Binding bind = {{"obs", obs}};
    for (auto _ : state)
        benchmark::DoNotOptimize(diff::gradient(g, loss, params, bind));
    state.SetItemsProcessed(state.iterations() * T);
}

void BM_FisherVectorProduct(benchmark::State& state) {
    const int T = static_cast<int>(state.range(0));
    nets::PolicyNet policy(16, 4, {32, 32});
    const diff::ParamVector params = randomized(policy.layout(), 2);
    trpo::TrpoStage stage(policy);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 0.3);
    rollout::TrajectoryBatch b;
    for (int t = 0; t < T; ++t) {
        rollout::Transition tr;
        tr.obs = Eigen::VectorXd::NullaryExpr(16, [&](Eigen::Index) { return normal(rng); });
        const nets::GaussianDist d = policy.forward(params, tr.obs);
        tr.action = d.mean;
        tr.log_prob_old = d.log_prob(tr.action);
        b.transitions.push_back(tr);
    }
    b.advantages = Eigen::VectorXd::Ones(T);
    b.returns = Eigen::VectorXd::Zero(T);
    b.advantages_computed = true;
    const diff::ParamVector v = randomized(policy.layout(), 4);
    for (auto _ : state)
        benchmark::DoNotOptimize(stage.fisher_vector_product(b, params, v, 0.1));
}

void BM_ConjugateGradient(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto layout = std::make_shared<diff::ParamLayout>();
    layout->add("x", n, 1);
    Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, n);
    const Eigen::MatrixXd H = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
    diff::ParamVector g{diff::LayoutPtr(layout)};
    g.values() = Eigen::VectorXd::Random(n);
    auto apply = [&](const diff::ParamVector& v) {
        diff::ParamVector out{diff::LayoutPtr(layout)};
        out.values() = H * v.values();
        return out;
    };
    for (auto _ : state)
        benchmark::DoNotOptimize(trpo::conjugate_gradient(apply, g, 10, 1e-10));
}

void BM_EnvStep(benchmark::State& state) {
    const env::SyntheticData data = env::synthesize_dataset(1, 256, 32, 0.1);
    env::EnvConfig cfg;
    env::PerturbEnv env(data.dataset, data.network, cfg, env::Split::TRAIN);
    util::Rng rng(5);
    (void)env.reset(rng);
    const Eigen::VectorXd action = Eigen::VectorXd::Constant(32, 0.01);
    int t = 0;
    for (auto _ : state) {
        const rollout::StepResult r = env.step(action);
        benchmark::DoNotOptimize(r.reward);
        if (++t % cfg.episode_length == 0) (void)env.reset(rng);
    }
}

void BM_Gae(benchmark::State& state) {
    const int T = static_cast<int>(state.range(0));
    nets::PolicyNet policy(8, 2, {8});
    const diff::ParamVector params = policy.init_params(1);
    rollout::TrajectoryBatch base = sample_batch(policy, params, T);
    for (auto _ : state) {
        rollout::TrajectoryBatch b = base;
        b.advantages_computed = false;
        rollout::compute_gae(b, 0.99, 0.95);
        benchmark::DoNotOptimize(b.advantages);
    }
    state.SetItemsProcessed(state.iterations() * T);
}

}  // namespace

BENCHMARK(BM_GraphForward)->Arg(64)->Arg(2048);
BENCHMARK(BM_GraphGradient)->Arg(64)->Arg(2048);
BENCHMARK(BM_FisherVectorProduct)->Arg(128);
BENCHMARK(BM_ConjugateGradient)->Arg(64)->Arg(1024);
BENCHMARK(BM_EnvStep);
BENCHMARK(BM_Gae)->Arg(2048);

BENCHMARK_MAIN();
