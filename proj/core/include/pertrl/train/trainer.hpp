#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pertrl/env/perturb_env.hpp"
#include "pertrl/metrics/metrics.hpp"
#include "pertrl/nets/checkpoint.hpp"
#include "pertrl/train/run_config.hpp"

namespace pertrl::train {

struct IterationRecord {
    int iteration = 0;
    std::uint64_t timestep = 0;  // cumulative transitions after this iteration
    double mean_episode_reward = 0.0;
    bool has_episode_reward = false;
    bool has_natural_step = false;
    trpo::NaturalStepReport natural;
    double ppo_loss = 0.0;
    double ppo_policy_term = 0.0;
    double ppo_value_term = 0.0;
    bool flagged_non_finite = false;

    std::string to_json() const;  // versioned line-delimited record
};

struct RunLog {
    std::vector<IterationRecord> records;
    metrics::MetricReport train_report;
    metrics::MetricReport test_report;
    bool halted_non_finite = false;
};

// Dataset + regulatory network + network architectures derived from a config.
struct TrainingSetup {
    env::ExpressionDataset dataset;
    env::RegulatoryNetwork network;
    int obs_dim = 0;
    int action_dim = 0;
};

TrainingSetup build_setup(const RunConfig& cfg);

// Full Alg.-1 loop: per-iteration collect -> GAE -> (TRPO major step while in
// the first phase) -> PPO fine-tune; checkpoints at the phase boundary and at
// the end; evaluation reports on both splits. Artifacts land in cfg.out_dir.
RunLog run_training(const RunConfig& cfg);

// Deterministic-policy evaluation of explicit parameters over every cell of
// the split, with seeded perturbations.
metrics::MetricReport evaluate_params(const diff::ParamVector& policy_params,
                                      const TrainingSetup& setup,
                                      const RunConfig& cfg, env::Split split,
                                      std::uint64_t eval_seed);

// Checkpoint-file evaluation; rejects architecture mismatches.
metrics::MetricReport evaluate_checkpoint(const std::string& checkpoint_path,
                                          const RunConfig& cfg, env::Split split);

struct RunSummary {
    std::string algorithm;
    std::string modality;
    std::uint64_t seed = 0;
    metrics::MetricReport test_metrics;
};

void write_summary(const std::string& path, const RunSummary& summary);
RunSummary read_summary(const std::string& path);

// One row per (algorithm, modality); multi-seed groups report the mean.
std::vector<metrics::ReportRow> aggregate_summaries(
    const std::vector<RunSummary>& summaries);

}  // namespace pertrl::train
