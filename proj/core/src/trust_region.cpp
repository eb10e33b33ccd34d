#include "pertrl/trpo/trust_region.hpp"

#include <cmath>
#include <stdexcept>

#include "pertrl/util/errors.hpp"

namespace pertrl::trpo {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;
}

void TrustRegionConfig::validate() const {
    if (delta <= 0.0) throw ConfigError("trust region: delta must be > 0");
    if (damping < 0.0) throw ConfigError("trust region: damping must be >= 0");
    if (cg_iters < 1) throw ConfigError("trust region: cg_iters must be >= 1");
    if (cg_tol <= 0.0) throw ConfigError("trust region: cg_tol must be > 0");
    if (eps_guard <= 0.0) throw ConfigError("trust region: eps_guard must be > 0");
    if (ls_backtracks < 0) throw ConfigError("trust region: ls_backtracks must be >= 0");
    if (ls_accept_ratio <= 0.0 || ls_accept_ratio > 1.0)
        throw ConfigError("trust region: ls_accept_ratio must be in (0, 1]");
}

std::pair<diff::ParamVector, double> conjugate_gradient(
    const std::function<diff::ParamVector(const diff::ParamVector&)>& apply_H,
    const diff::ParamVector& g, int max_iters, double tol) {
    diff::ParamVector x(g.layout());  // zeros
    diff::ParamVector r = g;          // r = g - H*0
    diff::ParamVector p = r;
    double rs = r.dot(r);
    double res_norm = std::sqrt(rs);
    // Floating-point CG residual norms can tick upward near stall; keep the
    // best iterate seen so the returned residual is non-increasing in the
    // iteration cap.
    diff::ParamVector best_x = x;
    double best_res = res_norm;
    for (int it = 0; it < max_iters && res_norm > tol; ++it) {
        diff::ParamVector hp = apply_H(p);
        if (!hp.all_finite())
            throw NumericalError("conjugate_gradient: non-finite operator application");
        const double php = p.dot(hp);
        if (php <= 0.0) break;  // lost positive definiteness numerically
        const double a = rs / php;
        x += a * p;
        r -= a * hp;
        const double rs_new = r.dot(r);
        p = r + (rs_new / rs) * p;
        rs = rs_new;
        res_norm = std::sqrt(rs);
        if (!std::isfinite(res_norm))
            throw NumericalError("conjugate_gradient: residual diverged");
        if (res_norm < best_res) {
            best_res = res_norm;
            best_x = x;
        }
    }
    return {std::move(best_x), best_res};
}

TrpoStage::TrpoStage(const nets::PolicyNet& policy) : policy_(&policy) {}

TrpoStage::BatchGraphs& TrpoStage::graphs_for(int batch_size) {
    auto it = cache_.find(batch_size);
    if (it != cache_.end()) return it->second;

    BatchGraphs bg;
    diff::Graph& g = bg.graph;
    const int T = batch_size;
    const int A = policy_->action_dim();

    auto [mean, log_std] = policy_->build_graph(g, T);

    diff::NodeId actions = g.input("actions", T, A);
    diff::NodeId adv = g.input("adv", T, 1);
    diff::NodeId logp_old = g.input("logp_old", T, 1);
    diff::NodeId mu_old = g.input("mu_old", T, A);
    diff::NodeId log_std_old = g.input("log_std_old", 1, A);

    // log pi(a_t|s_t) rows under the current parameters.
    diff::NodeId ls_rows = g.bcast_rows(log_std, T);
    diff::NodeId z = g.div(g.sub(actions, mean), g.exp(ls_rows));
    diff::NodeId logp = g.sub(g.scale(g.row_sum(g.square(z)), -0.5),
                              g.add_const(g.row_sum(ls_rows),
                                          kHalfLog2Pi * static_cast<double>(A)));

    // Surrogate: mean_t exp(logp - logp_old) * adv.
    diff::NodeId ratio = g.exp(g.sub(logp, logp_old));
    bg.surrogate = g.scale(g.sum(g.mul(ratio, adv)), 1.0 / static_cast<double>(T));

    // Mean KL(old || new) with the old distribution bound as constants.
    diff::NodeId ls_old_rows = g.bcast_rows(log_std_old, T);
    diff::NodeId var_old = g.exp(g.scale(ls_old_rows, 2.0));
    diff::NodeId var_new = g.exp(g.scale(ls_rows, 2.0));
    diff::NodeId quad =
        g.div(g.add(var_old, g.square(g.sub(mu_old, mean))), g.scale(var_new, 2.0));
    diff::NodeId kl_elem = g.add_const(g.add(g.sub(ls_rows, ls_old_rows), quad), -0.5);
    bg.mean_kl = g.scale(g.sum(kl_elem), 1.0 / static_cast<double>(T));

    return cache_.emplace(batch_size, std::move(bg)).first->second;
}

diff::Binding TrpoStage::make_binding(const rollout::TrajectoryBatch& batch,
                                      const diff::ParamVector& params_old) const {
    if (batch.size() == 0) throw std::invalid_argument("trpo: empty batch");
    if (!batch.advantages_computed)
        throw std::invalid_argument("trpo: batch advantages not computed");
    const int T = batch.size();
    const int A = policy_->action_dim();
    Eigen::MatrixXd obs(T, policy_->obs_dim());
    Eigen::MatrixXd actions(T, A);
    Eigen::MatrixXd adv(T, 1);
    Eigen::MatrixXd logp_old(T, 1);
    for (int t = 0; t < T; ++t) {
        const auto& tr = batch.transitions[static_cast<std::size_t>(t)];
        obs.row(t) = tr.obs.transpose();
        actions.row(t) = tr.action.transpose();
        adv(t, 0) = batch.advantages(t);
        logp_old(t, 0) = tr.log_prob_old;
    }
    diff::Binding bind;
    bind["obs"] = std::move(obs);
    bind["actions"] = std::move(actions);
    bind["adv"] = std::move(adv);
    bind["logp_old"] = std::move(logp_old);
    bind["mu_old"] = policy_->mean_batch(params_old, bind["obs"]);
    bind["log_std_old"] = params_old.tensor("log_std");
    return bind;
}

diff::ParamVector TrpoStage::surrogate_gradient(const rollout::TrajectoryBatch& batch,
                                                const diff::ParamVector& params_old) {
    BatchGraphs& bg = graphs_for(batch.size());
    return diff::gradient(bg.graph, bg.surrogate, params_old,
                          make_binding(batch, params_old));
}

diff::ParamVector TrpoStage::fisher_vector_product(
    const rollout::TrajectoryBatch& batch, const diff::ParamVector& params_old,
    const diff::ParamVector& v, double damping) {
    BatchGraphs& bg = graphs_for(batch.size());
    diff::ParamVector hv = diff::hessian_vector_product(
        bg.graph, bg.mean_kl, params_old, v, make_binding(batch, params_old));
    hv += damping * v;
    return hv;
}

double TrpoStage::surrogate_value(const rollout::TrajectoryBatch& batch,
                                  const diff::ParamVector& params_old,
                                  const diff::ParamVector& params) {
    BatchGraphs& bg = graphs_for(batch.size());
    return bg.graph.eval_one(bg.surrogate, params, make_binding(batch, params_old))(0, 0);
}

double TrpoStage::mean_kl(const rollout::TrajectoryBatch& batch,
                          const diff::ParamVector& params_old,
                          const diff::ParamVector& params) {
    BatchGraphs& bg = graphs_for(batch.size());
    return bg.graph.eval_one(bg.mean_kl, params, make_binding(batch, params_old))(0, 0);
}

NaturalStepReport TrpoStage::major_step(const rollout::TrajectoryBatch& batch,
                                        diff::ParamVector& policy_params,
                                        const TrustRegionConfig& config) {
    config.validate();
    NaturalStepReport report;

    BatchGraphs& bg = graphs_for(batch.size());
    const diff::Binding bind = make_binding(batch, policy_params);
    const diff::ParamVector params_old = policy_params;

    diff::ParamVector g =
        diff::gradient(bg.graph, bg.surrogate, params_old, bind);
    report.g_norm = g.norm();
    report.surrogate_before =
        bg.graph.eval_one(bg.surrogate, params_old, bind)(0, 0);
    report.surrogate_after = report.surrogate_before;
    if (report.g_norm == 0.0) {  // e.g. all advantages zero
        report.skipped_degenerate = true;
        return report;
    }

    auto apply_H = [&](const diff::ParamVector& v) {
        diff::ParamVector hv = diff::hessian_vector_product(bg.graph, bg.mean_kl,
                                                            params_old, v, bind);
        hv += config.damping * v;
        return hv;
    };
    auto [d, residual] = conjugate_gradient(apply_H, g, config.cg_iters, config.cg_tol);
    report.cg_residual = residual;
    report.d_norm = d.norm();
    report.g_dot_d = g.dot(d);

    if (report.g_dot_d <= 0.0) {  // heavy damping + CG truncation can produce this
        report.skipped_degenerate = true;
        return report;
    }

    report.alpha = std::sqrt(2.0 * config.delta / (report.g_dot_d + config.eps_guard));
    diff::ParamVector delta_theta = report.alpha * d;

    const double linear_full = g.dot(delta_theta);
    double step_scale = 1.0;
    for (int k = 0; k <= config.ls_backtracks; ++k, step_scale *= 0.5) {
        diff::ParamVector candidate = params_old + step_scale * delta_theta;
        const double kl = bg.graph.eval_one(bg.mean_kl, candidate, bind)(0, 0);
        const double surr = bg.graph.eval_one(bg.surrogate, candidate, bind)(0, 0);
        if (!std::isfinite(kl) || !std::isfinite(surr)) continue;
        const double improvement = surr - report.surrogate_before;
        const double expected = step_scale * linear_full;
        if (kl <= config.delta && improvement >= config.ls_accept_ratio * expected) {
            report.accepted = true;
            report.backtracks_used = k;
            report.kl_after = kl;
            report.surrogate_after = surr;
            policy_params = std::move(candidate);
            policy_->clamp_log_std(policy_params);
            return report;
        }
    }
    report.backtracks_used = config.ls_backtracks + 1;  // none qualified
    return report;
}

}  // namespace pertrl::trpo
