#include "pertrl/nets/policy_value.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pertrl/util/rng.hpp"

namespace pertrl::nets {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

diff::LayoutPtr make_mlp_layout(int in_dim, const std::vector<int>& hidden, int out_dim,
                                bool with_log_std) {
    auto layout = std::make_shared<diff::ParamLayout>();
    int prev = in_dim;
    int li = 0;
    for (int h : hidden) {
        layout->add("W" + std::to_string(li), prev, h);
        layout->add("b" + std::to_string(li), 1, h);
        prev = h;
        ++li;
    }
    layout->add("W" + std::to_string(li), prev, out_dim);
    layout->add("b" + std::to_string(li), 1, out_dim);
    if (with_log_std) layout->add("log_std", 1, out_dim);
    return layout;
}

// Orthogonal init via QR of a Gaussian matrix, sign-fixed, scaled by gain.
Eigen::MatrixXd orthogonal(int rows, int cols, double gain, util::Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const int big = std::max(rows, cols);
    Eigen::MatrixXd a(big, big);
    for (int r = 0; r < big; ++r)
        for (int c = 0; c < big; ++c) a(r, c) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int c = 0; c < big; ++c)
        if (rmat(c, c) < 0) q.col(c) = -q.col(c);
    return gain * q.topLeftCorner(rows, cols);
}

diff::ParamVector init_mlp(const detail::MlpLayout& mlp, std::uint64_t seed,
                           double final_gain, bool with_log_std) {
    util::Rng rng(util::mix_seed(seed, 0x6d6c70ULL));
    diff::ParamVector params(mlp.layout);
    const std::size_t n_layers = mlp.hidden.size() + 1;
    for (std::size_t li = 0; li < n_layers; ++li) {
        const auto& wslot = mlp.layout->slot(2 * li);
        const double gain = (li + 1 == n_layers) ? final_gain : std::sqrt(2.0);
        params.set_tensor(2 * li, orthogonal(wslot.rows, wslot.cols, gain, rng));
        // biases stay zero
    }
    (void)with_log_std;  // log_std slot stays zero (std = 1)
    return params;
}

Eigen::VectorXd mlp_forward(const detail::MlpLayout& mlp,
                            const diff::ParamVector& params,
                            const Eigen::VectorXd& obs) {
    if (obs.size() != mlp.in_dim)
        throw std::invalid_argument("mlp_forward: observation dimension mismatch");
    if (!obs.allFinite())
        throw std::invalid_argument("mlp_forward: non-finite observation");
    Eigen::RowVectorXd h = obs.transpose();
    const std::size_t n_layers = mlp.hidden.size() + 1;
    for (std::size_t li = 0; li < n_layers; ++li) {
        Eigen::RowVectorXd z =
            h * params.tensor(2 * li) + params.tensor(2 * li + 1).row(0);
        if (li + 1 < n_layers)
            h = z.array().tanh();
        else
            h = z;
    }
    return h.transpose();
}

Eigen::MatrixXd mlp_forward_batch(const detail::MlpLayout& mlp,
                                  const diff::ParamVector& params,
                                  const Eigen::MatrixXd& obs) {
    if (obs.cols() != mlp.in_dim)
        throw std::invalid_argument("mlp_forward_batch: observation dimension mismatch");
    Eigen::MatrixXd h = obs;
    const std::size_t n_layers = mlp.hidden.size() + 1;
    for (std::size_t li = 0; li < n_layers; ++li) {
        Eigen::MatrixXd z = h * params.tensor(2 * li);
        z.rowwise() += params.tensor(2 * li + 1).row(0);
        h = (li + 1 < n_layers) ? z.array().tanh().matrix() : z;
    }
    return h;
}

diff::NodeId mlp_graph(const detail::MlpLayout& mlp, diff::Graph& g, int batch,
                       bool with_log_std, diff::NodeId* log_std_out) {
    diff::NodeId x = g.input("obs", batch, mlp.in_dim);
    const std::size_t n_layers = mlp.hidden.size() + 1;
    std::vector<diff::NodeId> weights, biases;
    int prev = mlp.in_dim;
    int li = 0;
    for (int h : mlp.hidden) {
        weights.push_back(g.param("W" + std::to_string(li), prev, h));
        biases.push_back(g.param("b" + std::to_string(li), 1, h));
        prev = h;
        ++li;
    }
    weights.push_back(g.param("W" + std::to_string(li), prev, mlp.out_dim));
    biases.push_back(g.param("b" + std::to_string(li), 1, mlp.out_dim));
    if (with_log_std) {
        *log_std_out = g.param("log_std", 1, mlp.out_dim);
    }
    diff::NodeId h = x;
    for (std::size_t i = 0; i < n_layers; ++i) {
        diff::NodeId z = g.add(g.matmul(h, weights[i]), g.bcast_rows(biases[i], batch));
        h = (i + 1 < n_layers) ? g.tanh(z) : z;
    }
    return h;
}

}  // namespace

double GaussianDist::log_prob(const Eigen::VectorXd& action) const {
    if (action.size() != mean.size())
        throw std::invalid_argument("GaussianDist::log_prob: dimension mismatch");
    const Eigen::ArrayXd sigma = log_std.array().exp();
    const Eigen::ArrayXd z = (action - mean).array() / sigma;
    return (-0.5 * z.square() - log_std.array() - kHalfLog2Pi).sum();
}

double GaussianDist::entropy() const {
    return (0.5 + kHalfLog2Pi) * static_cast<double>(mean.size()) + log_std.sum();
}

double GaussianDist::kl(const GaussianDist& old_dist, const GaussianDist& new_dist) {
    if (old_dist.dim() != new_dist.dim())
        throw std::invalid_argument("GaussianDist::kl: dimension mismatch");
    const Eigen::ArrayXd var_old = (2.0 * old_dist.log_std.array()).exp();
    const Eigen::ArrayXd var_new = (2.0 * new_dist.log_std.array()).exp();
    const Eigen::ArrayXd dmu = (old_dist.mean - new_dist.mean).array();
    return ((new_dist.log_std - old_dist.log_std).array() +
            (var_old + dmu.square()) / (2.0 * var_new) - 0.5)
        .sum();
}

PolicyNet::PolicyNet(int obs_dim, int action_dim, std::vector<int> hidden) {
    if (obs_dim < 1 || action_dim < 1)
        throw std::invalid_argument("PolicyNet: dimensions must be positive");
    mlp_ = {obs_dim, std::move(hidden), action_dim, nullptr};
    mlp_.layout = make_mlp_layout(obs_dim, mlp_.hidden, action_dim, true);
}

diff::ParamVector PolicyNet::init_params(std::uint64_t seed) const {
    // Final layer scaled down so the initial policy is near-uniform.
    return init_mlp(mlp_, util::mix_seed(seed, 0x706f6cULL), 0.01, true);
}

GaussianDist PolicyNet::forward(const diff::ParamVector& params,
                                const Eigen::VectorXd& obs) const {
    GaussianDist d;
    d.mean = mlp_forward(mlp_, params, obs);
    d.log_std = params.tensor("log_std").row(0).transpose();
    return d;
}

Eigen::MatrixXd PolicyNet::mean_batch(const diff::ParamVector& params,
                                      const Eigen::MatrixXd& obs) const {
    return mlp_forward_batch(mlp_, params, obs);
}

std::pair<diff::NodeId, diff::NodeId> PolicyNet::build_graph(diff::Graph& g,
                                                             int batch) const {
    diff::NodeId log_std = -1;
    diff::NodeId mean = mlp_graph(mlp_, g, batch, true, &log_std);
    if (!(*g.layout() == *mlp_.layout))
        throw std::logic_error("PolicyNet::build_graph: graph layout drifted");
    return {mean, log_std};
}

void PolicyNet::clamp_log_std(diff::ParamVector& params) const {
    Eigen::MatrixXd ls = params.tensor("log_std");
    params.set_tensor("log_std",
                      ls.array().max(kLogStdMin).min(kLogStdMax).matrix());
}

ValueNet::ValueNet(int obs_dim, std::vector<int> hidden) {
    if (obs_dim < 1) throw std::invalid_argument("ValueNet: obs_dim must be positive");
    mlp_ = {obs_dim, std::move(hidden), 1, nullptr};
    mlp_.layout = make_mlp_layout(obs_dim, mlp_.hidden, 1, false);
}

diff::ParamVector ValueNet::init_params(std::uint64_t seed) const {
    return init_mlp(mlp_, util::mix_seed(seed, 0x76616cULL), 1.0, false);
}

double ValueNet::forward(const diff::ParamVector& params,
                         const Eigen::VectorXd& obs) const {
    return mlp_forward(mlp_, params, obs)(0);
}

Eigen::VectorXd ValueNet::value_batch(const diff::ParamVector& params,
                                      const Eigen::MatrixXd& obs) const {
    return mlp_forward_batch(mlp_, params, obs).col(0);
}

diff::NodeId ValueNet::build_graph(diff::Graph& g, int batch) const {
    return mlp_graph(mlp_, g, batch, false, nullptr);
}

}  // namespace pertrl::nets
