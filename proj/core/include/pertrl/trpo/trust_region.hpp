#pragma once

#include <functional>
#include <map>
#include <utility>

#include "pertrl/diff/graph.hpp"
#include "pertrl/nets/policy_value.hpp"
#include "pertrl/rollout/rollout.hpp"

namespace pertrl::trpo {

struct TrustRegionConfig {
    double delta = 0.01;          // KL budget (nats)
    double damping = 0.1;         // lambda_damp
    int cg_iters = 10;
    double cg_tol = 1e-10;        // absolute residual-norm stop
    double eps_guard = 1e-8;      // epsilon inside the step-scale square root
    int ls_backtracks = 10;
    double ls_accept_ratio = 0.1; // minimum fraction of the linear prediction

    void validate() const;
};

struct NaturalStepReport {
    double g_norm = 0.0;
    double d_norm = 0.0;
    double g_dot_d = 0.0;
    double alpha = 0.0;
    double kl_after = 0.0;
    double surrogate_before = 0.0;
    double surrogate_after = 0.0;
    int backtracks_used = 0;
    double cg_residual = 0.0;
    bool accepted = false;
    bool skipped_degenerate = false;  // g.d <= 0 or zero gradient
};

// Matrix-free CG for SPD operators; stops when the residual norm drops to
// tol (absolute) or after max_iters. Returns (solution, final residual norm).
std::pair<diff::ParamVector, double> conjugate_gradient(
    const std::function<diff::ParamVector(const diff::ParamVector&)>& apply_H,
    const diff::ParamVector& g, int max_iters, double tol);

// The curvature-aware major step over policy parameters: surrogate gradient,
// damped Fisher-vector products, CG solve, KL-budget scaling, backtracking
// line search. Value-network parameters are untouched here.
class TrpoStage {
public:
    explicit TrpoStage(const nets::PolicyNet& policy);

    diff::ParamVector surrogate_gradient(const rollout::TrajectoryBatch& batch,
                                         const diff::ParamVector& params_old);
    diff::ParamVector fisher_vector_product(const rollout::TrajectoryBatch& batch,
                                            const diff::ParamVector& params_old,
                                            const diff::ParamVector& v,
                                            double damping);
    // Surrogate / batch-mean KL at params, with old quantities taken at
    // params_old (ratios against stored log_prob_old; old dists detached).
    double surrogate_value(const rollout::TrajectoryBatch& batch,
                           const diff::ParamVector& params_old,
                           const diff::ParamVector& params);
    double mean_kl(const rollout::TrajectoryBatch& batch,
                   const diff::ParamVector& params_old,
                   const diff::ParamVector& params);

    // Full Eq.-style major step; returns the (possibly unchanged) parameters.
    NaturalStepReport major_step(const rollout::TrajectoryBatch& batch,
                                 diff::ParamVector& policy_params,
                                 const TrustRegionConfig& config);

private:
    struct BatchGraphs {
        diff::Graph graph;
        diff::NodeId surrogate = -1;
        diff::NodeId mean_kl = -1;
    };
    BatchGraphs& graphs_for(int batch_size);
    diff::Binding make_binding(const rollout::TrajectoryBatch& batch,
                               const diff::ParamVector& params_old) const;

    const nets::PolicyNet* policy_;
    std::map<int, BatchGraphs> cache_;
};

}  // namespace pertrl::trpo
