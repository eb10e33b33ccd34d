#include "pertrl/train/trainer.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pertrl/rollout/rollout.hpp"
#include "pertrl/util/errors.hpp"

namespace pertrl::train {

namespace fs = std::filesystem;

namespace {

// Shortest round-trip double formatting; deterministic for identical bits.
std::string jnum(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hidden_str(const std::vector<int>& hidden) {
    std::ostringstream os;
    for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
    return os.str();
}

}  // namespace

std::string IterationRecord::to_json() const {
    std::ostringstream os;
    os << "{\"v\":1,\"iter\":" << iteration << ",\"timestep\":" << timestep;
    if (has_episode_reward)
        os << ",\"mean_episode_reward\":" << jnum(mean_episode_reward);
    if (has_natural_step) {
        os << ",\"natural\":{\"g_norm\":" << jnum(natural.g_norm)
           << ",\"d_norm\":" << jnum(natural.d_norm)
           << ",\"g_dot_d\":" << jnum(natural.g_dot_d)
           << ",\"alpha\":" << jnum(natural.alpha)
           << ",\"kl_after\":" << jnum(natural.kl_after)
           << ",\"surrogate_before\":" << jnum(natural.surrogate_before)
           << ",\"surrogate_after\":" << jnum(natural.surrogate_after)
           << ",\"backtracks_used\":" << natural.backtracks_used
           << ",\"cg_residual\":" << jnum(natural.cg_residual)
           << ",\"accepted\":" << (natural.accepted ? "true" : "false")
           << ",\"skipped_degenerate\":" << (natural.skipped_degenerate ? "true" : "false")
           << "}";
    }
    os << ",\"ppo_loss\":" << jnum(ppo_loss)
       << ",\"ppo_policy_term\":" << jnum(ppo_policy_term)
       << ",\"ppo_value_term\":" << jnum(ppo_value_term);
    if (flagged_non_finite) os << ",\"non_finite\":true";
    os << "}";
    return os.str();
}

TrainingSetup build_setup(const RunConfig& cfg) {
    TrainingSetup setup;
    if (cfg.dataset_path.empty()) {
        env::SyntheticData syn = env::synthesize_dataset(
            cfg.seed, cfg.synthetic.n_cells, cfg.synthetic.n_genes,
            cfg.synthetic.regulatory_density, cfg.modality);
        setup.dataset = std::move(syn.dataset);
        setup.network = std::move(syn.network);
    } else if (cfg.modality == env::Modality::JOINT) {
        env::ExpressionDataset rna = env::load_dataset(cfg.dataset_path);
        env::ExpressionDataset atac = env::load_dataset(cfg.dataset_path_atac);
        setup.dataset = env::fuse_joint(rna, atac);
        setup.network = env::block_diag(
            env::load_network(cfg.dataset_path + ".regnet", rna.n_genes()),
            env::load_network(cfg.dataset_path_atac + ".regnet", atac.n_genes()));
    } else {
        setup.dataset = env::load_dataset(cfg.dataset_path);
        if (setup.dataset.modality != cfg.modality)
            throw DataError("dataset modality tag does not match configured modality");
        setup.network = env::load_network(cfg.dataset_path + ".regnet",
                                          setup.dataset.n_genes());
    }
    const int genes = std::min(cfg.env_config.gene_subset, setup.dataset.n_genes());
    setup.obs_dim = 3 * genes + 1;
    setup.action_dim = genes;
    return setup;
}

metrics::MetricReport evaluate_params(const diff::ParamVector& policy_params,
                                      const TrainingSetup& setup,
                                      const RunConfig& cfg, env::Split split,
                                      std::uint64_t eval_seed) {
    env::EnvConfig env_cfg = cfg.env_config;
    env_cfg.gene_subset = std::min(env_cfg.gene_subset, setup.dataset.n_genes());
    env::PerturbEnv env(setup.dataset, setup.network, env_cfg, split);
    nets::PolicyNet policy(env.observation_dim(), env.action_dim(), cfg.hidden);

    const std::vector<int> cells = setup.dataset.cells_in(split);
    const int genes = env.n_genes();
    metrics::PredictionSet set;
    set.predicted.resize(static_cast<int>(cells.size()), genes);
    set.observed.resize(static_cast<int>(cells.size()), genes);
    set.baseline.resize(static_cast<int>(cells.size()), genes);

    for (std::size_t i = 0; i < cells.size(); ++i) {
        util::Rng rng(util::mix_seed(eval_seed, static_cast<std::uint64_t>(cells[i])));
        Eigen::VectorXd obs = env.reset_to_cell(cells[i], rng);
        set.baseline.row(static_cast<int>(i)) = env.baseline().transpose();
        set.observed.row(static_cast<int>(i)) = env.target().transpose();
        bool done = false;
        while (!done) {
            const nets::GaussianDist dist = policy.forward(policy_params, obs);
            const rollout::StepResult sr = env.step(dist.mean);  // no sampling
            obs = sr.obs;
            done = sr.done;
        }
        set.predicted.row(static_cast<int>(i)) = env.prediction().transpose();
    }
    return metrics::full_report(set, cfg.effect_threshold);
}

metrics::MetricReport evaluate_checkpoint(const std::string& checkpoint_path,
                                          const RunConfig& cfg, env::Split split) {
    const nets::Checkpoint ckpt = nets::load_checkpoint(checkpoint_path);
    const TrainingSetup setup = build_setup(cfg);
    auto need = [&](const std::string& key, const std::string& expected) {
        auto it = ckpt.meta.find(key);
        if (it == ckpt.meta.end() || it->second != expected)
            throw DataError("checkpoint architecture mismatch for " + key +
                            ": checkpoint has '" +
                            (it == ckpt.meta.end() ? "<missing>" : it->second) +
                            "', config expects '" + expected + "'");
    };
    need("obs_dim", std::to_string(setup.obs_dim));
    need("action_dim", std::to_string(setup.action_dim));
    need("hidden", hidden_str(cfg.hidden));
    const std::uint64_t eval_seed = util::mix_seed(cfg.seed, 0x6576616cULL);
    return evaluate_params(ckpt.section("policy"), setup, cfg, split, eval_seed);
}

namespace {

nets::Checkpoint make_checkpoint(const RunConfig& cfg, const TrainingSetup& setup,
                                 const diff::ParamVector& policy_params,
                                 const diff::ParamVector& value_params) {
    nets::Checkpoint ckpt;
    ckpt.meta["obs_dim"] = std::to_string(setup.obs_dim);
    ckpt.meta["action_dim"] = std::to_string(setup.action_dim);
    ckpt.meta["hidden"] = hidden_str(cfg.hidden);
    ckpt.meta["modality"] = env::to_string(cfg.modality);
    ckpt.sections.emplace_back("policy", policy_params);
    ckpt.sections.emplace_back("value", value_params);
    return ckpt;
}

}  // namespace

RunLog run_training(const RunConfig& cfg) {
    cfg.validate();
    const TrainingSetup setup = build_setup(cfg);

    fs::create_directories(cfg.out_dir);
    {
        std::ofstream snap(cfg.out_dir + "/config.snapshot", std::ios::trunc);
        snap << cfg.snapshot();
    }
    std::ofstream log_os(cfg.out_dir + "/runlog.jsonl", std::ios::trunc);
    std::ofstream timing_os(cfg.out_dir + "/timing.jsonl", std::ios::trunc);
    log_os << "{\"v\":1,\"schema\":\"pertrl-runlog\"}\n";

    env::EnvConfig env_cfg = cfg.env_config;
    env_cfg.gene_subset = std::min(env_cfg.gene_subset, setup.dataset.n_genes());
    env::PerturbEnv env(setup.dataset, setup.network, env_cfg, env::Split::TRAIN);

    nets::PolicyNet policy(env.observation_dim(), env.action_dim(), cfg.hidden);
    nets::ValueNet value(env.observation_dim(), cfg.hidden);
    diff::ParamVector policy_params = policy.init_params(cfg.seed);
    diff::ParamVector value_params = value.init_params(cfg.seed);

    trpo::TrpoStage trpo_stage(policy);
    ppo::PpoStage ppo_stage(policy, value);

    RunLog log;
    std::uint64_t timestep = 0;
    int iteration = 0;
    bool phase1_saved = false;
    const bool trpo_enabled = cfg.variant == Variant::TRPO_PPO;

    const auto t0 = std::chrono::steady_clock::now();
    while (timestep < cfg.total_timesteps) {
        const bool in_trpo_phase =
            trpo_enabled && (cfg.trpo_every_iteration || timestep < cfg.trpo_phase_timesteps);

        if (trpo_enabled && !phase1_saved && !cfg.trpo_every_iteration &&
            timestep >= cfg.trpo_phase_timesteps && cfg.trpo_phase_timesteps > 0) {
            nets::save_checkpoint(cfg.out_dir + "/checkpoint_phase1.bin",
                                  make_checkpoint(cfg, setup, policy_params, value_params));
            phase1_saved = true;
        }

        IterationRecord rec;
        rec.iteration = iteration;

        rollout::TrajectoryBatch batch = rollout::collect_rollout(
            env, policy, policy_params, value, value_params, cfg.batch_size,
            util::mix_seed(cfg.seed, 0xc0defeedULL + static_cast<std::uint64_t>(iteration)));
        rollout::compute_gae(batch, cfg.gamma, cfg.gae_lambda);
        rollout::normalize_advantages(batch);

        if (!batch.episode_rewards.empty()) {
            double sum = 0.0;
            for (double r : batch.episode_rewards) sum += r;
            rec.mean_episode_reward = sum / static_cast<double>(batch.episode_rewards.size());
            rec.has_episode_reward = true;
        }

        if (in_trpo_phase) {
            rec.natural = trpo_stage.major_step(batch, policy_params, cfg.trust_region);
            rec.has_natural_step = true;
        }

        ppo::FineTuneResult ft = ppo_stage.fine_tune(policy_params, value_params, batch,
                                                     cfg.ppo_config,
                                                     util::mix_seed(cfg.seed,
                                                                    0xf17e0000ULL + static_cast<std::uint64_t>(iteration)));
        if (ft.aborted || !ft.policy_params.all_finite() || !ft.value_params.all_finite()) {
            rec.flagged_non_finite = true;
            log.halted_non_finite = true;
            timestep += static_cast<std::uint64_t>(cfg.batch_size);
            rec.timestep = timestep;
            log.records.push_back(rec);
            log_os << rec.to_json() << '\n';
            break;  // keep last good parameters
        }
        policy_params = std::move(ft.policy_params);
        value_params = std::move(ft.value_params);
        rec.ppo_loss = ft.final_loss;
        rec.ppo_policy_term = ft.final_policy_term;
        rec.ppo_value_term = ft.final_value_term;

        timestep += static_cast<std::uint64_t>(cfg.batch_size);
        rec.timestep = timestep;
        log.records.push_back(rec);
        log_os << rec.to_json() << '\n';
        const auto now = std::chrono::steady_clock::now();
        timing_os << "{\"iter\":" << iteration << ",\"elapsed_s\":"
                  << jnum(std::chrono::duration<double>(now - t0).count()) << "}\n";
        ++iteration;
    }

    nets::save_checkpoint(cfg.out_dir + "/checkpoint_final.bin",
                          make_checkpoint(cfg, setup, policy_params, value_params));

    const std::uint64_t eval_seed = util::mix_seed(cfg.seed, 0x6576616cULL);
    log.train_report =
        evaluate_params(policy_params, setup, cfg, env::Split::TRAIN, eval_seed);
    log.test_report =
        evaluate_params(policy_params, setup, cfg, env::Split::TEST, eval_seed);

    for (auto [name, rep] : {std::pair<const char*, const metrics::MetricReport*>{
                                 "metrics_train.csv", &log.train_report},
                             {"metrics_test.csv", &log.test_report}}) {
        std::ofstream os(cfg.out_dir + "/" + name, std::ios::trunc);
        for (std::size_t i = 0; i < metrics::MetricReport::column_names().size(); ++i)
            os << (i ? "," : "") << metrics::MetricReport::column_names()[i];
        os << '\n' << rep->csv_row() << '\n';
    }

    RunSummary summary{to_string(cfg.variant), env::to_string(cfg.modality), cfg.seed,
                       log.test_report};
    write_summary(cfg.out_dir + "/summary.tsv", summary);
    return log;
}

void write_summary(const std::string& path, const RunSummary& summary) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("write_summary: cannot open " + path);
    os << "#pertrl-summary\tv1\n";
    os << "algorithm\t" << summary.algorithm << '\n';
    os << "modality\t" << summary.modality << '\n';
    os << "seed\t" << summary.seed << '\n';
    const auto& names = metrics::MetricReport::column_names();
    const auto cols = summary.test_metrics.columns();
    for (std::size_t i = 0; i < names.size(); ++i)
        os << names[i] << '\t' << jnum(cols[i]) << '\n';
    os << "r2_defined\t" << (summary.test_metrics.r2_defined ? 1 : 0) << '\n';
}

RunSummary read_summary(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("read_summary: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != "#pertrl-summary\tv1")
        throw DataError("read_summary: bad header in " + path);
    std::map<std::string, std::string> kv;
    while (std::getline(is, line)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        kv[line.substr(0, tab)] = line.substr(tab + 1);
    }
    RunSummary s;
    auto need = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw DataError("read_summary: missing " + k + " in " + path);
        return it->second;
    };
    s.algorithm = need("algorithm");
    s.modality = need("modality");
    s.seed = std::stoull(need("seed"));
    auto& r = s.test_metrics;
    r.accuracy = std::stod(need("Accuracy"));
    r.precision = std::stod(need("Precision"));
    r.recall = std::stod(need("Recall"));
    r.f1 = std::stod(need("F1"));
    r.auprc = std::stod(need("AUPRC"));
    r.mse = std::stod(need("MSE"));
    r.rmse = std::stod(need("RMSE"));
    r.mae = std::stod(need("MAE"));
    r.r2 = std::stod(need("R2"));
    r.pearson = std::stod(need("PearsonCorr"));
    r.r2_defined = need("r2_defined") == "1";
    return s;
}

std::vector<metrics::ReportRow> aggregate_summaries(
    const std::vector<RunSummary>& summaries) {
    if (summaries.empty()) throw DataError("aggregate_summaries: no runs");
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<metrics::MetricReport>> groups;
    for (const auto& s : summaries) {
        const auto key = std::make_pair(s.algorithm, s.modality);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(s.test_metrics);
    }
    std::vector<metrics::ReportRow> rows;
    for (const auto& key : order)
        rows.push_back({key.first, key.second, metrics::mean_report(groups[key])});
    return rows;
}

}  // namespace pertrl::train
