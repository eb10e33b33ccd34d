#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pertrl/env/perturb_env.hpp"
#include "pertrl/ppo/ppo.hpp"
#include "pertrl/trpo/trust_region.hpp"

namespace pertrl::train {

enum class Variant { PPO_ONLY, TRPO_PPO };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct SyntheticSpec {
    int n_cells = 256;
    int n_genes = 32;
    double regulatory_density = 0.1;
};

struct RunConfig {
    std::uint64_t total_timesteps = 50'000;
    std::uint64_t trpo_phase_timesteps = 10'000;
    int batch_size = 2048;
    std::uint64_t seed = 0;
    Variant variant = Variant::TRPO_PPO;
    // §-style temporal phase split by default; true runs a TRPO major step
    // every iteration instead.
    bool trpo_every_iteration = false;

    env::Modality modality = env::Modality::RNA;
    std::string dataset_path;       // empty -> synthetic data
    std::string dataset_path_atac;  // second file for JOINT loads
    SyntheticSpec synthetic;

    env::EnvConfig env_config;
    trpo::TrustRegionConfig trust_region;
    ppo::PpoConfig ppo_config;

    double gamma = 0.99;
    double gae_lambda = 0.95;
    double effect_threshold = 0.1;  // metric binarization, log-expression units
    std::vector<int> hidden = {256, 256};

    std::string out_dir = "runs/run0";

    void validate() const;
    std::string snapshot() const;  // flat key=value dump, stable key order
};

// Flat key-value config file: "key = value" lines, '#' comments. Every key
// mirrors a CLI flag; unknown keys are rejected.
RunConfig parse_config_file(const std::string& path);
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);

}  // namespace pertrl::train
