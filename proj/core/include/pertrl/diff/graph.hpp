#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pertrl/diff/param_vector.hpp"

namespace pertrl::diff {

// Operation vocabulary. Restricted to what the policy/value networks and
// losses need; shapes are rank-2 (scalar == 1x1).
enum class Op {
    Param,     // leaf bound from a ParamVector slot
    Input,     // leaf bound at evaluation time by name
    Const,     // embedded constant
    Add, Sub, Mul, Div,   // elementwise, equal shapes
    MatMul,
    Transpose,
    Tanh, Exp, Log, Square,
    Scale,     // multiply by a fixed scalar
    AddConst,  // add a fixed scalar elementwise
    Neg,
    Sum,       // full reduction to 1x1
    RowSum,    // (r x c) -> (r x 1)
    ColSum,    // (r x c) -> (1 x c)
    BcastRows, // (1 x c) -> (r x c)
    BcastCols, // (r x 1) -> (r x c)
    BcastFull, // (1 x 1) -> (r x c)
    Min,       // elementwise min; subgradient routes to the smaller arg
    Clip,      // clamp to [lo, hi]; zero gradient outside the band
    LeqMask,   // 1[a <= b]; piecewise-constant, zero derivative
    InBandMask // 1[lo < a < hi]; piecewise-constant, zero derivative
};

using NodeId = int;

struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    int rows = 0;
    int cols = 0;
    double scalar = 0.0;   // Scale factor / AddConst addend / Clip lo
    double scalar2 = 0.0;  // Clip hi
    int slot = -1;         // Param slot index
    int input_index = -1;  // Input leaf index
    Eigen::MatrixXd constant;
};

using Binding = std::map<std::string, Eigen::MatrixXd>;

// Computation graph over rank-2 double tensors. Nodes are appended in
// topological order. Derivatives are constructed symbolically as additional
// nodes in the same graph, which is what makes gradient-of-gradient-dot-vector
// (double backprop) work for Fisher-vector products.
//
// Construction (param/input/op calls, backward) is single-threaded;
// evaluation uses a caller-owned workspace and is reentrant.
class Graph {
public:
    Graph() : layout_(std::make_shared<ParamLayout>()) {}

    // Leaves.
    NodeId param(const std::string& name, int rows, int cols);
    NodeId input(const std::string& name, int rows, int cols);
    NodeId constant(const Eigen::MatrixXd& value);
    NodeId scalar_const(double value);

    // Ops.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId square(NodeId a);
    NodeId scale(NodeId a, double s);
    NodeId add_const(NodeId a, double s);
    NodeId neg(NodeId a);
    NodeId sum(NodeId a);
    NodeId row_sum(NodeId a);
    NodeId col_sum(NodeId a);
    NodeId bcast_rows(NodeId a, int rows);
    NodeId bcast_cols(NodeId a, int cols);
    NodeId bcast_full(NodeId a, int rows, int cols);
    NodeId min(NodeId a, NodeId b);
    NodeId clip(NodeId a, double lo, double hi);

    // Gradient of a scalar node w.r.t. every param slot, as new graph nodes
    // (one per slot, layout order). Cached per output node.
    const std::vector<NodeId>& backward(NodeId scalar_out);

    // Nodes for H·v where H is the Hessian of scalar_out w.r.t. the params.
    // v is bound at evaluation time via inputs named hvp_input_name(slot).
    const std::vector<NodeId>& hvp_nodes(NodeId scalar_out);
    static std::string hvp_input_name(const std::string& param_name);

    std::size_t node_count() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    std::pair<int, int> shape(NodeId id) const;

    LayoutPtr layout() const { return layout_; }
    const std::vector<std::pair<std::string, std::pair<int, int>>>& inputs() const {
        return input_decls_;
    }

    // Forward-evaluate the requested nodes; only ancestors are computed.
    std::vector<Eigen::MatrixXd> eval(const std::vector<NodeId>& outs,
                                      const ParamVector& params,
                                      const Binding& inputs) const;
    Eigen::MatrixXd eval_one(NodeId out, const ParamVector& params,
                             const Binding& inputs) const;

private:
    NodeId push(Node n);
    NodeId binary(Op op, NodeId a, NodeId b);
    NodeId unary(Op op, NodeId a);
    void check_id(NodeId id) const;

    std::shared_ptr<ParamLayout> layout_;
    std::vector<Node> nodes_;
    std::vector<NodeId> param_nodes_;  // slot -> node id
    std::vector<std::pair<std::string, std::pair<int, int>>> input_decls_;
    std::vector<NodeId> input_nodes_;
    std::unordered_map<std::string, int> input_index_;
    std::unordered_map<NodeId, std::vector<NodeId>> grad_cache_;
    std::unordered_map<NodeId, std::vector<NodeId>> hvp_cache_;
};

// Spec-level entry points.
Eigen::MatrixXd evaluate(const Graph& g, NodeId out, const ParamVector& params,
                         const Binding& inputs = {});
ParamVector gradient(Graph& g, NodeId scalar_out, const ParamVector& params,
                     const Binding& inputs = {});
ParamVector hessian_vector_product(Graph& g, NodeId scalar_out,
                                   const ParamVector& params,
                                   const ParamVector& v,
                                   const Binding& inputs = {});

}  // namespace pertrl::diff
