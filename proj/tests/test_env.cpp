#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "pertrl/env/dataset.hpp"
#include "pertrl/env/perturb_env.hpp"
#include "pertrl/util/errors.hpp"

using namespace pertrl;
using env::EnvConfig;
using env::ExpressionDataset;
using env::Modality;
using env::PerturbationSpec;
using env::PerturbEnv;
using env::RegulatoryNetwork;
using env::Split;

namespace {

env::SyntheticData small_data(std::uint64_t seed = 1, int cells = 30, int genes = 6) {
    return env::synthesize_dataset(seed, cells, genes, 0.3);
}

EnvConfig quiet_config(int genes) {
    EnvConfig cfg;
    cfg.noise_std = 0.0;
    cfg.gene_subset = genes;
    cfg.episode_length = 4;
    return cfg;
}

}  // namespace

TEST_CASE("synthetic data is deterministic, positive, and split 80/20") {
    const auto a = small_data(7, 100, 10);
    const auto b = small_data(7, 100, 10);
    const auto c = small_data(8, 100, 10);
    CHECK(a.dataset.matrix == b.dataset.matrix);
    CHECK(a.network.effects == b.network.effects);
    CHECK(a.dataset.matrix != c.dataset.matrix);

    CHECK(a.dataset.matrix.minCoeff() > 0.0);  // log-normal baselines
    CHECK(a.dataset.pseudotime.minCoeff() >= 0.0);
    CHECK(a.dataset.pseudotime.maxCoeff() <= 1.0);
    CHECK(a.network.effects.diagonal().isZero());
    CHECK(a.dataset.cells_in(Split::TRAIN).size() == 80);
    CHECK(a.dataset.cells_in(Split::TEST).size() == 20);
    a.dataset.validate();
}

TEST_CASE("dataset file round-trip preserves everything") {
    const auto d = small_data(3, 12, 5);
    const std::string path = "test_env_ds.tsv";
    env::save_dataset(d.dataset, path);
    const ExpressionDataset back = env::load_dataset(path);
    CHECK(back.matrix.rows() == 12);
    CHECK((back.matrix - d.dataset.matrix).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(back.cell_ids == d.dataset.cell_ids);
    CHECK(back.gene_names == d.dataset.gene_names);
    CHECK(back.split == d.dataset.split);
    CHECK(back.modality == d.dataset.modality);
    std::remove(path.c_str());

    env::save_network(d.network, path);
    const RegulatoryNetwork net = env::load_network(path, 5);
    CHECK((net.effects - d.network.effects).cwiseAbs().maxCoeff() < 1e-14);
    std::remove(path.c_str());
}

TEST_CASE("loader diagnostics name the offending cell and gene") {
    const std::string path = "test_env_bad.tsv";
    {
        std::ofstream os(path);
        os << "#pertrl-dataset\tv1\tmodality=RNA\n";
        os << "cell_id\tpseudotime\tsplit\tg0\tg1\n";
        os << "cell_0\t0.5\tTRAIN\t1.0\t2.0\n";
        os << "cell_1\t0.5\tTEST\t1.0\tnan\n";
    }
    try {
        (void)env::load_dataset(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("cell_1") != std::string::npos);
        CHECK(msg.find("g1") != std::string::npos);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS((void)env::load_dataset("missing_file.tsv"), DataError);
}

TEST_CASE("joint fusion concatenates columns over aligned cells") {
    auto rna = small_data(1, 8, 3).dataset;
    auto atac = small_data(2, 8, 4).dataset;
    atac.modality = Modality::ATAC;
    atac.cell_ids = rna.cell_ids;  // align
    atac.pseudotime = rna.pseudotime;
    atac.split = rna.split;
    const ExpressionDataset joint = env::fuse_joint(rna, atac);
    CHECK(joint.modality == Modality::JOINT);
    CHECK(joint.n_cells() == 8);
    CHECK(joint.n_genes() == 7);
    CHECK(joint.matrix.leftCols(3) == rna.matrix);
    CHECK(joint.matrix.rightCols(4) == atac.matrix);
    CHECK(joint.gene_names.size() == 7);

    // Misaligned cells are rejected.
    auto bad = atac;
    bad.cell_ids[3] = "other_cell";
    CHECK_THROWS_AS((void)env::fuse_joint(rna, bad), DataError);
}

TEST_CASE("block diagonal network composition") {
    RegulatoryNetwork a{Eigen::MatrixXd::Constant(2, 2, 0.5)};
    a.effects.diagonal().setZero();
    RegulatoryNetwork b{Eigen::MatrixXd::Constant(3, 3, -0.25)};
    b.effects.diagonal().setZero();
    const RegulatoryNetwork c = env::block_diag(a, b);
    CHECK(c.n_genes() == 5);
    CHECK(c.effects.topLeftCorner(2, 2) == a.effects);
    CHECK(c.effects.bottomRightCorner(3, 3) == b.effects);
    CHECK(c.effects.topRightCorner(2, 3).isZero());
    CHECK(c.effects.bottomLeftCorner(3, 2).isZero());
}

TEST_CASE("knockout response has a closed form without noise") {
    const auto d = small_data();
    EnvConfig cfg = quiet_config(6);
    const Eigen::VectorXd profile = d.dataset.matrix.row(0).transpose();
    util::Rng rng(0);

    PerturbationSpec spec;
    spec.kind = PerturbationSpec::Kind::Knockout;
    spec.target = 2;
    const Eigen::VectorXd out =
        env::apply_perturbation(profile, spec, d.network, cfg, rng);

    const double direct_change = -profile(2);  // floor 0.0
    Eigen::VectorXd expected = profile + d.network.effects.col(2) * direct_change;
    expected(2) = 0.0;
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);

    // Partial knockout floor.
    cfg.knockout_floor = 0.25;
    const Eigen::VectorXd partial =
        env::apply_perturbation(profile, spec, d.network, cfg, rng);
    CHECK(partial(2) == doctest::Approx(0.25 * profile(2)).epsilon(1e-12));
}

TEST_CASE("overexpression multiplies the target by the drawn fold") {
    const auto d = small_data();
    const EnvConfig cfg = quiet_config(6);
    const Eigen::VectorXd profile = d.dataset.matrix.row(1).transpose();
    util::Rng rng(0);

    PerturbationSpec spec;
    spec.kind = PerturbationSpec::Kind::Overexpress;
    spec.target = 4;
    spec.magnitude = 2.0;
    const Eigen::VectorXd out =
        env::apply_perturbation(profile, spec, d.network, cfg, rng);
    const double direct_change = profile(4);  // (2 - 1) * x
    Eigen::VectorXd expected = profile + d.network.effects.col(4) * direct_change;
    expected(4) = 2.0 * profile(4);
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);

    PerturbationSpec bad = spec;
    bad.target = 99;
    CHECK_THROWS((void)env::apply_perturbation(profile, bad, d.network, cfg, rng));
}

TEST_CASE("observation layout: prediction, one-hot block, pseudotime") {
    const auto d = small_data();
    const EnvConfig cfg = quiet_config(6);
    PerturbEnv e(d.dataset, d.network, cfg, Split::TRAIN);
    CHECK(e.observation_dim() == 3 * 6 + 1);
    CHECK(e.action_dim() == 6);

    util::Rng rng(123);
    const Eigen::VectorXd obs = e.reset(rng);
    REQUIRE(obs.size() == 19);
    // Leading block: the running prediction starts at the baseline.
    CHECK(obs.head(6) == e.baseline());
    // One-hot block: exactly one hot entry in the right half.
    const Eigen::VectorXd onehot = obs.segment(6, 12);
    CHECK(onehot.sum() == doctest::Approx(1.0));
    CHECK(onehot.maxCoeff() == 1.0);
    const int hot_offset =
        e.spec().kind == PerturbationSpec::Kind::Knockout ? 0 : 6;
    CHECK(onehot(hot_offset + e.spec().target) == 1.0);
    // Pseudotime slot.
    CHECK(obs(18) >= 0.0);
    CHECK(obs(18) <= 1.0);
}

TEST_CASE("reward telescopes to the total mse reduction") {
    const auto d = small_data();
    const EnvConfig cfg = quiet_config(6);
    PerturbEnv e(d.dataset, d.network, cfg, Split::TRAIN);
    util::Rng rng(9);
    (void)e.reset(rng);

    const auto mse = [&](const Eigen::VectorXd& pred) {
        return (pred - e.target()).squaredNorm() / 6.0;
    };
    const double mse0 = mse(e.prediction());
    double total = 0.0;
    util::Rng action_rng(10);
    std::normal_distribution<double> normal(0.0, 1.0);
    bool done = false;
    int steps = 0;
    while (!done) {
        Eigen::VectorXd a(6);
        for (int i = 0; i < 6; ++i) a(i) = normal(action_rng);
        const rollout::StepResult r = e.step(a);
        total += r.reward;
        done = r.done;
        ++steps;
    }
    CHECK(steps == cfg.episode_length);
    CHECK(total == doctest::Approx(mse0 - mse(e.prediction())).epsilon(1e-10));
    CHECK_THROWS_AS((void)e.step(Eigen::VectorXd::Zero(6)), std::logic_error);
}

TEST_CASE("actions are clamped to the action scale") {
    const auto d = small_data();
    const EnvConfig cfg = quiet_config(6);
    PerturbEnv e(d.dataset, d.network, cfg, Split::TRAIN);
    util::Rng rng(4);
    (void)e.reset(rng);
    const Eigen::VectorXd before = e.prediction();
    (void)e.step(Eigen::VectorXd::Constant(6, 100.0));
    CHECK((e.prediction() - before).maxCoeff() <=
          cfg.action_scale + 1e-12);
}

TEST_CASE("resets are deterministic per rng stream and draw split cells only") {
    const auto d = small_data(2, 40, 6);
    const EnvConfig cfg = quiet_config(6);
    PerturbEnv e1(d.dataset, d.network, cfg, Split::TEST);
    PerturbEnv e2(d.dataset, d.network, cfg, Split::TEST);
    util::Rng r1(31), r2(31);
    const Eigen::VectorXd o1 = e1.reset(r1);
    const Eigen::VectorXd o2 = e2.reset(r2);
    CHECK(o1 == o2);
    CHECK(e1.spec().target == e2.spec().target);

    // reset_to_cell accepts members of the split and rejects others.
    const auto test_cells = d.dataset.cells_in(Split::TEST);
    const auto train_cells = d.dataset.cells_in(Split::TRAIN);
    util::Rng r3(1);
    (void)e1.reset_to_cell(test_cells.front(), r3);
    CHECK_THROWS((void)e1.reset_to_cell(train_cells.front(), r3));
}

TEST_CASE("gene subset restricts the environment to leading genes") {
    const auto d = small_data(5, 20, 6);
    EnvConfig cfg = quiet_config(6);
    cfg.gene_subset = 4;
    PerturbEnv e(d.dataset, d.network, cfg, Split::TRAIN);
    CHECK(e.n_genes() == 4);
    CHECK(e.observation_dim() == 13);
    util::Rng rng(2);
    const Eigen::VectorXd obs = e.reset(rng);
    CHECK(obs.size() == 13);
    CHECK(e.baseline().size() == 4);
}

TEST_CASE("config validation") {
    EnvConfig cfg;
    cfg.episode_length = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.overexpress_min = 3.0;
    cfg.overexpress_max = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.knockout_floor = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
