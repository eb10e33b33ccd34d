#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "pertrl/env/dataset.hpp"
#include "pertrl/train/trainer.hpp"
#include "pertrl/util/errors.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

using pertrl::train::RunConfig;

// Every training option is a flat "key = value" entry; the CLI exposes each
// key as --key with '.' -> '-'. CLI flags override --config file entries.
void add_config_options(CLI::App& app, RunConfig& cfg,
                        std::vector<std::pair<std::string, std::string>>& overrides,
                        std::string& config_path) {
    app.add_option("--config", config_path, "key = value config file");
    static const std::vector<std::string> keys = {
        "total_timesteps", "trpo_phase_timesteps", "batch_size", "seed", "variant",
        "trpo_every_iteration", "modality", "dataset", "dataset_atac",
        "synthetic.n_cells", "synthetic.n_genes", "synthetic.regulatory_density",
        "env.episode_length", "env.action_scale", "env.noise_std",
        "env.knockout_floor", "env.overexpress_min", "env.overexpress_max",
        "env.gene_subset", "trpo.delta", "trpo.damping", "trpo.cg_iters",
        "trpo.cg_tol", "trpo.eps_guard", "trpo.ls_backtracks", "trpo.ls_accept_ratio",
        "ppo.clip_eps", "ppo.value_coef", "ppo.entropy_coef", "ppo.epochs",
        "ppo.minibatch_size", "ppo.learning_rate", "ppo.max_grad_norm",
        "gamma", "gae_lambda", "effect_threshold", "hidden", "out_dir"};
    for (const auto& key : keys) {
        std::string flag = "--" + key;
        for (auto& c : flag)
            if (c == '.') c = '-';
        app.add_option_function<std::string>(
            flag,
            [&overrides, key](const std::string& value) {
                overrides.emplace_back(key, value);
            },
            "config key " + key);
    }
    (void)cfg;
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = pertrl::train::parse_config_file(config_path);
    for (const auto& [key, value] : overrides)
        pertrl::train::apply_config_entry(cfg, key, value);
    cfg.validate();
    return cfg;
}

void print_report(const std::string& label, const pertrl::metrics::MetricReport& rep) {
    const auto& names = pertrl::metrics::MetricReport::column_names();
    std::cout << label << "\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        std::cout << (i ? "," : "") << names[i];
    std::cout << "\n" << rep.csv_row() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pertrl: two-stage trust-region + proximal policy optimization "
                 "for simulated gene-perturbation response prediction"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    RunConfig cfg_holder;
    auto* train = app.add_subcommand("train", "run the full training loop");
    add_config_options(*train, cfg_holder, overrides, config_path);

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved checkpoint");
    std::string ckpt_path, eval_split = "test";
    evaluate->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    evaluate->add_option("--split", eval_split, "train or test")
        ->check(CLI::IsMember({"train", "test"}));
    add_config_options(*evaluate, cfg_holder, overrides, config_path);

    auto* report = app.add_subcommand("report", "aggregate run summaries into a table");
    std::vector<std::string> summary_paths;
    std::string report_format = "table";
    report->add_option("summaries", summary_paths, "summary.tsv files")->required();
    report->add_option("--format", report_format, "table or csv")
        ->check(CLI::IsMember({"table", "csv"}));

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset + network");
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    int gen_cells = 256, gen_genes = 32;
    double gen_density = 0.1;
    std::string gen_modality = "rna";
    gen->add_option("--out", gen_out, "output dataset path")->required();
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--cells", gen_cells, "number of cells");
    gen->add_option("--genes", gen_genes, "number of genes");
    gen->add_option("--density", gen_density, "regulatory-network density");
    gen->add_option("--modality", gen_modality, "rna | atac | joint");

    auto* validate = app.add_subcommand("validate-data", "check a dataset file");
    std::string validate_path;
    validate->add_option("path", validate_path, "dataset file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (train->parsed()) {
            const RunConfig cfg = resolve_config(config_path, overrides);
            const pertrl::train::RunLog log = pertrl::train::run_training(cfg);
            std::cout << "iterations: " << log.records.size() << "\n";
            if (log.halted_non_finite)
                std::cout << "halted: non-finite update, last good checkpoint kept\n";
            print_report("train split", log.train_report);
            print_report("test split", log.test_report);
            std::cout << "artifacts: " << cfg.out_dir << "\n";
            return log.halted_non_finite ? kExitNumerical : 0;
        }
        if (evaluate->parsed()) {
            const RunConfig cfg = resolve_config(config_path, overrides);
            const auto split = eval_split == "train" ? pertrl::env::Split::TRAIN
                                                     : pertrl::env::Split::TEST;
            const auto rep = pertrl::train::evaluate_checkpoint(ckpt_path, cfg, split);
            print_report(eval_split + " split", rep);
            return 0;
        }
        if (report->parsed()) {
            std::vector<pertrl::train::RunSummary> summaries;
            for (const auto& path : summary_paths)
                summaries.push_back(pertrl::train::read_summary(path));
            const auto rows = pertrl::train::aggregate_summaries(summaries);
            std::cout << (report_format == "csv" ? pertrl::metrics::render_csv(rows)
                                                 : pertrl::metrics::render_table(rows));
            return 0;
        }
        if (gen->parsed()) {
            const auto modality = pertrl::env::modality_from_string(gen_modality);
            const auto syn = pertrl::env::synthesize_dataset(
                gen_seed, gen_cells, gen_genes, gen_density, modality);
            pertrl::env::save_dataset(syn.dataset, gen_out);
            pertrl::env::save_network(syn.network, gen_out + ".regnet");
            std::cout << "wrote " << gen_out << " and " << gen_out << ".regnet\n";
            return 0;
        }
        if (validate->parsed()) {
            const auto ds = pertrl::env::load_dataset(validate_path);
            ds.validate();
            std::cout << "ok: " << ds.n_cells() << " cells x " << ds.n_genes()
                      << " genes, modality " << pertrl::env::to_string(ds.modality)
                      << "\n";
            return 0;
        }
    } catch (const pertrl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pertrl::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const pertrl::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
