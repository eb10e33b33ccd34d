#include "pertrl/train/run_config.hpp"

#include <fstream>
#include <sstream>

#include "pertrl/util/errors.hpp"

namespace pertrl::train {

std::string to_string(Variant v) {
    return v == Variant::PPO_ONLY ? "PPO_ONLY" : "TRPO_PPO";
}

Variant variant_from_string(const std::string& s) {
    if (s == "PPO_ONLY" || s == "PPO") return Variant::PPO_ONLY;
    if (s == "TRPO_PPO") return Variant::TRPO_PPO;
    throw ConfigError("unknown variant: " + s);
}

void RunConfig::validate() const {
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (trpo_phase_timesteps > total_timesteps)
        throw ConfigError("config: trpo_phase_timesteps must be <= total_timesteps");
    if (total_timesteps < 1) throw ConfigError("config: total_timesteps must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0 && gae_lambda >= 0.0 && gae_lambda <= 1.0))
        throw ConfigError("config: gamma and gae_lambda must be in [0,1]");
    if (hidden.empty()) throw ConfigError("config: at least one hidden layer");
    env_config.validate();
    trust_region.validate();
    ppo_config.validate();
    if (modality == env::Modality::JOINT && !dataset_path.empty() &&
        dataset_path_atac.empty())
        throw ConfigError("config: JOINT loads need dataset and dataset_atac paths");
}

namespace {
template <typename T>
std::string str(T v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
}  // namespace

std::string RunConfig::snapshot() const {
    std::ostringstream os;
    os << "total_timesteps = " << total_timesteps << '\n'
       << "trpo_phase_timesteps = " << trpo_phase_timesteps << '\n'
       << "batch_size = " << batch_size << '\n'
       << "seed = " << seed << '\n'
       << "variant = " << to_string(variant) << '\n'
       << "trpo_every_iteration = " << (trpo_every_iteration ? "true" : "false") << '\n'
       << "modality = " << env::to_string(modality) << '\n'
       << "dataset = " << dataset_path << '\n'
       << "dataset_atac = " << dataset_path_atac << '\n'
       << "synthetic.n_cells = " << synthetic.n_cells << '\n'
       << "synthetic.n_genes = " << synthetic.n_genes << '\n'
       << "synthetic.regulatory_density = " << str(synthetic.regulatory_density) << '\n'
       << "env.episode_length = " << env_config.episode_length << '\n'
       << "env.action_scale = " << str(env_config.action_scale) << '\n'
       << "env.noise_std = " << str(env_config.noise_std) << '\n'
       << "env.knockout_floor = " << str(env_config.knockout_floor) << '\n'
       << "env.overexpress_min = " << str(env_config.overexpress_min) << '\n'
       << "env.overexpress_max = " << str(env_config.overexpress_max) << '\n'
       << "env.gene_subset = " << env_config.gene_subset << '\n'
       << "trpo.delta = " << str(trust_region.delta) << '\n'
       << "trpo.damping = " << str(trust_region.damping) << '\n'
       << "trpo.cg_iters = " << trust_region.cg_iters << '\n'
       << "trpo.cg_tol = " << str(trust_region.cg_tol) << '\n'
       << "trpo.eps_guard = " << str(trust_region.eps_guard) << '\n'
       << "trpo.ls_backtracks = " << trust_region.ls_backtracks << '\n'
       << "trpo.ls_accept_ratio = " << str(trust_region.ls_accept_ratio) << '\n'
       << "ppo.clip_eps = " << str(ppo_config.clip_eps) << '\n'
       << "ppo.value_coef = " << str(ppo_config.value_coef) << '\n'
       << "ppo.entropy_coef = " << str(ppo_config.entropy_coef) << '\n'
       << "ppo.epochs = " << ppo_config.epochs << '\n'
       << "ppo.minibatch_size = " << ppo_config.minibatch_size << '\n'
       << "ppo.learning_rate = " << str(ppo_config.learning_rate) << '\n'
       << "ppo.max_grad_norm = " << str(ppo_config.max_grad_norm) << '\n'
       << "gamma = " << str(gamma) << '\n'
       << "gae_lambda = " << str(gae_lambda) << '\n'
       << "effect_threshold = " << str(effect_threshold) << '\n';
    os << "hidden = ";
    for (std::size_t i = 0; i < hidden.size(); ++i)
        os << (i ? "," : "") << hidden[i];
    os << '\n' << "out_dir = " << out_dir << '\n';
    return os.str();
}

namespace {

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try { return std::stoull(v); } catch (...) { throw ConfigError("config: bad integer for " + key + ": " + v); }
}
int to_int(const std::string& key, const std::string& v) {
    try { return std::stoi(v); } catch (...) { throw ConfigError("config: bad integer for " + key + ": " + v); }
}
double to_double(const std::string& key, const std::string& v) {
    try { return std::stod(v); } catch (...) { throw ConfigError("config: bad number for " + key + ": " + v); }
}
bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + v);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
    if (key == "total_timesteps") cfg.total_timesteps = to_u64(key, value);
    else if (key == "trpo_phase_timesteps") cfg.trpo_phase_timesteps = to_u64(key, value);
    else if (key == "batch_size") cfg.batch_size = to_int(key, value);
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "variant") cfg.variant = variant_from_string(value);
    else if (key == "trpo_every_iteration") cfg.trpo_every_iteration = to_bool(key, value);
    else if (key == "modality") cfg.modality = env::modality_from_string(value);
    else if (key == "dataset") cfg.dataset_path = value;
    else if (key == "dataset_atac") cfg.dataset_path_atac = value;
    else if (key == "synthetic.n_cells") cfg.synthetic.n_cells = to_int(key, value);
    else if (key == "synthetic.n_genes") cfg.synthetic.n_genes = to_int(key, value);
    else if (key == "synthetic.regulatory_density")
        cfg.synthetic.regulatory_density = to_double(key, value);
    else if (key == "env.episode_length") cfg.env_config.episode_length = to_int(key, value);
    else if (key == "env.action_scale") cfg.env_config.action_scale = to_double(key, value);
    else if (key == "env.noise_std") cfg.env_config.noise_std = to_double(key, value);
    else if (key == "env.knockout_floor") cfg.env_config.knockout_floor = to_double(key, value);
    else if (key == "env.overexpress_min") cfg.env_config.overexpress_min = to_double(key, value);
    else if (key == "env.overexpress_max") cfg.env_config.overexpress_max = to_double(key, value);
    else if (key == "env.gene_subset") cfg.env_config.gene_subset = to_int(key, value);
    else if (key == "trpo.delta") cfg.trust_region.delta = to_double(key, value);
    else if (key == "trpo.damping") cfg.trust_region.damping = to_double(key, value);
    else if (key == "trpo.cg_iters") cfg.trust_region.cg_iters = to_int(key, value);
    else if (key == "trpo.cg_tol") cfg.trust_region.cg_tol = to_double(key, value);
    else if (key == "trpo.eps_guard") cfg.trust_region.eps_guard = to_double(key, value);
    else if (key == "trpo.ls_backtracks") cfg.trust_region.ls_backtracks = to_int(key, value);
    else if (key == "trpo.ls_accept_ratio") cfg.trust_region.ls_accept_ratio = to_double(key, value);
    else if (key == "ppo.clip_eps") cfg.ppo_config.clip_eps = to_double(key, value);
    else if (key == "ppo.value_coef") cfg.ppo_config.value_coef = to_double(key, value);
    else if (key == "ppo.entropy_coef") cfg.ppo_config.entropy_coef = to_double(key, value);
    else if (key == "ppo.epochs") cfg.ppo_config.epochs = to_int(key, value);
    else if (key == "ppo.minibatch_size") cfg.ppo_config.minibatch_size = to_int(key, value);
    else if (key == "ppo.learning_rate") cfg.ppo_config.learning_rate = to_double(key, value);
    else if (key == "ppo.max_grad_norm") cfg.ppo_config.max_grad_norm = to_double(key, value);
    else if (key == "gamma") cfg.gamma = to_double(key, value);
    else if (key == "gae_lambda") cfg.gae_lambda = to_double(key, value);
    else if (key == "effect_threshold") cfg.effect_threshold = to_double(key, value);
    else if (key == "hidden") {
        cfg.hidden.clear();
        std::istringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ','))
            cfg.hidden.push_back(to_int(key, trim(tok)));
    } else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("config: unknown key " + key);
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              ": expected key = value");
        apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

}  // namespace pertrl::train
