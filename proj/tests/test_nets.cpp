#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <random>

#include "pertrl/nets/checkpoint.hpp"
#include "pertrl/nets/policy_value.hpp"

using namespace pertrl;
using nets::GaussianDist;

namespace {

diff::ParamVector randomized(const diff::LayoutPtr& layout, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.5);
    diff::ParamVector p(layout);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.values()(i) = normal(rng);
    return p;
}

}  // namespace

TEST_CASE("standard normal log density at the origin") {
    GaussianDist d;
    d.mean = Eigen::VectorXd::Zero(1);
    d.log_std = Eigen::VectorXd::Zero(1);
    // -0.5 * log(2*pi)
    CHECK(d.log_prob(Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    CHECK(d.entropy() == doctest::Approx(1.4189385332046727).epsilon(1e-12));
}

TEST_CASE("log density integrates to one (quadrature)") {
    GaussianDist d;
    d.mean = Eigen::VectorXd::Constant(1, 0.3);
    d.log_std = Eigen::VectorXd::Constant(1, -0.2);
    const double lo = -8.0, hi = 8.0;
    const int n = 20000;
    const double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + h * i;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        integral += w * std::exp(d.log_prob(Eigen::VectorXd::Constant(1, x)));
    }
    integral *= h;
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("entropy matches a Monte Carlo estimate") {
    GaussianDist d;
    d.mean = Eigen::VectorXd::Constant(3, -0.4);
    d.log_std = Eigen::VectorXd::Zero(3);
    d.log_std << 0.1, -0.3, 0.5;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd a(3);
        for (int k = 0; k < 3; ++k)
            a(k) = d.mean(k) + std::exp(d.log_std(k)) * normal(rng);
        acc -= d.log_prob(a);
    }
    CHECK(d.entropy() == doctest::Approx(acc / n).epsilon(0.01));
}

TEST_CASE("kl matches a Monte Carlo estimate and is zero at equality") {
    GaussianDist p, q;
    p.mean = Eigen::VectorXd::Constant(2, 0.2);
    p.log_std = Eigen::VectorXd::Constant(2, -0.1);
    q.mean = Eigen::VectorXd::Constant(2, -0.5);
    q.log_std = Eigen::VectorXd::Constant(2, 0.3);

    CHECK(GaussianDist::kl(p, p) == doctest::Approx(0.0).epsilon(1e-14));

    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 400000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd a(2);
        for (int k = 0; k < 2; ++k)
            a(k) = p.mean(k) + std::exp(p.log_std(k)) * normal(rng);
        acc += p.log_prob(a) - q.log_prob(a);
    }
    CHECK(GaussianDist::kl(p, q) == doctest::Approx(acc / n).epsilon(0.02));
    CHECK(GaussianDist::kl(p, q) > 0.0);
}

TEST_CASE("policy graph reproduces the eager forward pass") {
    nets::PolicyNet policy(5, 3, {8, 8});
    const diff::ParamVector params = randomized(policy.layout(), 2);

    diff::Graph g;
    auto [mean_node, log_std_node] = policy.build_graph(g, 4);
    Eigen::MatrixXd obs(4, 5);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 5; ++c) obs(r, c) = normal(rng);

    const Eigen::MatrixXd mean = diff::evaluate(g, mean_node, params, {{"obs", obs}});
    const Eigen::MatrixXd eager = policy.mean_batch(params, obs);
    CHECK((mean - eager).cwiseAbs().maxCoeff() < 1e-12);
    for (int r = 0; r < 4; ++r) {
        const GaussianDist d = policy.forward(params, obs.row(r).transpose());
        CHECK((d.mean - mean.row(r).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Eigen::MatrixXd ls = diff::evaluate(g, log_std_node, params, {{"obs", obs}});
    CHECK(ls == params.tensor("log_std"));
}

TEST_CASE("value graph reproduces the eager forward pass") {
    nets::ValueNet value(4, {8});
    const diff::ParamVector params = randomized(value.layout(), 9);
    diff::Graph g;
    diff::NodeId v_node = value.build_graph(g, 3);
    Eigen::MatrixXd obs(3, 4);
    obs << 0.1, -0.2, 0.5, 0.9, -1.0, 0.3, 0.0, 0.2, 2.0, -0.7, 0.4, -0.1;
    const Eigen::MatrixXd v = diff::evaluate(g, v_node, params, {{"obs", obs}});
    const Eigen::VectorXd eager = value.value_batch(params, obs);
    CHECK((v.col(0) - eager).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(value.forward(params, obs.row(1).transpose()) ==
          doctest::Approx(eager(1)).epsilon(1e-14));
}

TEST_CASE("initialization: orthogonal hidden weights, zero biases and log_std") {
    nets::PolicyNet policy(6, 2, {16, 16});
    const diff::ParamVector params = policy.init_params(123);
    const Eigen::MatrixXd w0 = params.tensor("W0");
    // Rows of the wide 6x16 matrix orthonormal up to the gain sqrt(2).
    const Eigen::MatrixXd gram = w0 * w0.transpose();
    CHECK((gram - 2.0 * Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <
          1e-9);
    CHECK(params.tensor("b0") == Eigen::MatrixXd::Zero(1, 16));
    CHECK(params.tensor("log_std") == Eigen::MatrixXd::Zero(1, 2));
    // Final layer damped.
    CHECK(params.tensor("W2").norm() < 0.1);
    // Deterministic per seed, different across seeds.
    CHECK(policy.init_params(123).values() == params.values());
    CHECK(policy.init_params(124).values() != params.values());
}

TEST_CASE("log_std clamping") {
    nets::PolicyNet policy(3, 2, {4});
    diff::ParamVector params = policy.init_params(0);
    Eigen::MatrixXd ls(1, 2);
    ls << -9.0, 7.0;
    params.set_tensor("log_std", ls);
    policy.clamp_log_std(params);
    CHECK(params.tensor("log_std")(0, 0) == nets::kLogStdMin);
    CHECK(params.tensor("log_std")(0, 1) == nets::kLogStdMax);
}

TEST_CASE("checkpoint round-trips bitwise") {
    nets::PolicyNet policy(5, 2, {8});
    nets::ValueNet value(5, {8});
    nets::Checkpoint ckpt;
    ckpt.meta["obs_dim"] = "5";
    ckpt.meta["note"] = "round trip";
    ckpt.sections.emplace_back("policy", randomized(policy.layout(), 31));
    ckpt.sections.emplace_back("value", randomized(value.layout(), 32));

    const std::string path = "test_ckpt_roundtrip.bin";
    nets::save_checkpoint(path, ckpt);
    const nets::Checkpoint back = nets::load_checkpoint(path);
    CHECK(back.meta == ckpt.meta);
    REQUIRE(back.sections.size() == 2);
    CHECK(back.section("policy").values() == ckpt.section("policy").values());
    CHECK(back.section("value").values() == ckpt.section("value").values());
    CHECK(*back.section("policy").layout() == *policy.layout());
    CHECK_THROWS(back.section("missing"));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects corrupted files") {
    const std::string path = "test_ckpt_bad.bin";
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("not a checkpoint at all", f);
        std::fclose(f);
    }
    CHECK_THROWS(nets::load_checkpoint(path));
    CHECK_THROWS(nets::load_checkpoint("does_not_exist.bin"));
    std::remove(path.c_str());
}
