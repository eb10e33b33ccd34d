#include "pertrl/diff/graph.hpp"

#include <optional>
#include <stdexcept>

namespace pertrl::diff {

namespace {
[[noreturn]] void shape_error(const std::string& what, NodeId id) {
    throw std::invalid_argument("graph shape mismatch at node " + std::to_string(id) +
                                ": " + what);
}
}  // namespace

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument("graph: invalid node id " + std::to_string(id));
}

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

std::pair<int, int> Graph::shape(NodeId id) const {
    check_id(id);
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return {n.rows, n.cols};
}

NodeId Graph::param(const std::string& name, int rows, int cols) {
    const int slot = layout_->add(name, rows, cols);
    Node n;
    n.op = Op::Param;
    n.rows = rows;
    n.cols = cols;
    n.slot = slot;
    const NodeId id = push(std::move(n));
    param_nodes_.push_back(id);
    return id;
}

NodeId Graph::input(const std::string& name, int rows, int cols) {
    if (input_index_.count(name))
        throw std::invalid_argument("graph: duplicate input " + name);
    Node n;
    n.op = Op::Input;
    n.rows = rows;
    n.cols = cols;
    n.input_index = static_cast<int>(input_decls_.size());
    input_index_[name] = n.input_index;
    input_decls_.push_back({name, {rows, cols}});
    const NodeId id = push(std::move(n));
    input_nodes_.push_back(id);
    return id;
}

NodeId Graph::constant(const Eigen::MatrixXd& value) {
    Node n;
    n.op = Op::Const;
    n.rows = static_cast<int>(value.rows());
    n.cols = static_cast<int>(value.cols());
    n.constant = value;
    return push(std::move(n));
}

NodeId Graph::scalar_const(double value) {
    return constant(Eigen::MatrixXd::Constant(1, 1, value));
}

NodeId Graph::binary(Op op, NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const auto [ar, ac] = shape(a);
    const auto [br, bc] = shape(b);
    if (ar != br || ac != bc) shape_error("elementwise op on unequal shapes", b);
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.rows = ar;
    n.cols = ac;
    return push(std::move(n));
}

NodeId Graph::unary(Op op, NodeId a) {
    check_id(a);
    const auto [r, c] = shape(a);
    Node n;
    n.op = op;
    n.a = a;
    n.rows = r;
    n.cols = c;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
NodeId Graph::div(NodeId a, NodeId b) { return binary(Op::Div, a, b); }
NodeId Graph::min(NodeId a, NodeId b) { return binary(Op::Min, a, b); }

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const auto [ar, ac] = shape(a);
    const auto [br, bc] = shape(b);
    if (ac != br) shape_error("matmul inner dimensions", b);
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.rows = ar;
    n.cols = bc;
    return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
    check_id(a);
    const auto [r, c] = shape(a);
    Node n;
    n.op = Op::Transpose;
    n.a = a;
    n.rows = c;
    n.cols = r;
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) { return unary(Op::Tanh, a); }
NodeId Graph::exp(NodeId a) { return unary(Op::Exp, a); }
NodeId Graph::log(NodeId a) { return unary(Op::Log, a); }
NodeId Graph::square(NodeId a) { return unary(Op::Square, a); }
NodeId Graph::neg(NodeId a) { return unary(Op::Neg, a); }

NodeId Graph::scale(NodeId a, double s) {
    NodeId id = unary(Op::Scale, a);
    nodes_.back().scalar = s;
    return id;
}

NodeId Graph::add_const(NodeId a, double s) {
    NodeId id = unary(Op::AddConst, a);
    nodes_.back().scalar = s;
    return id;
}

NodeId Graph::clip(NodeId a, double lo, double hi) {
    NodeId id = unary(Op::Clip, a);
    nodes_.back().scalar = lo;
    nodes_.back().scalar2 = hi;
    return id;
}

NodeId Graph::sum(NodeId a) {
    check_id(a);
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.rows = 1;
    n.cols = 1;
    return push(std::move(n));
}

NodeId Graph::row_sum(NodeId a) {
    check_id(a);
    const auto [r, c] = shape(a);
    (void)c;
    Node n;
    n.op = Op::RowSum;
    n.a = a;
    n.rows = r;
    n.cols = 1;
    return push(std::move(n));
}

NodeId Graph::col_sum(NodeId a) {
    check_id(a);
    const auto [r, c] = shape(a);
    (void)r;
    Node n;
    n.op = Op::ColSum;
    n.a = a;
    n.rows = 1;
    n.cols = c;
    return push(std::move(n));
}

NodeId Graph::bcast_rows(NodeId a, int rows) {
    check_id(a);
    const auto [r, c] = shape(a);
    if (r != 1) shape_error("bcast_rows expects a 1 x c operand", a);
    Node n;
    n.op = Op::BcastRows;
    n.a = a;
    n.rows = rows;
    n.cols = c;
    return push(std::move(n));
}

NodeId Graph::bcast_cols(NodeId a, int cols) {
    check_id(a);
    const auto [r, c] = shape(a);
    if (c != 1) shape_error("bcast_cols expects an r x 1 operand", a);
    Node n;
    n.op = Op::BcastCols;
    n.a = a;
    n.rows = r;
    n.cols = cols;
    return push(std::move(n));
}

NodeId Graph::bcast_full(NodeId a, int rows, int cols) {
    check_id(a);
    const auto [r, c] = shape(a);
    if (r != 1 || c != 1) shape_error("bcast_full expects a scalar operand", a);
    Node n;
    n.op = Op::BcastFull;
    n.a = a;
    n.rows = rows;
    n.cols = cols;
    return push(std::move(n));
}

const std::vector<NodeId>& Graph::backward(NodeId out) {
    if (auto it = grad_cache_.find(out); it != grad_cache_.end()) return it->second;
    check_id(out);
    if (shape(out) != std::pair<int, int>{1, 1})
        throw std::invalid_argument("backward: output node must be scalar");

    // adj[i] = node holding d(out)/d(node i); built in reverse topological
    // order. Nodes appended during this pass have ids > out and never need
    // adjoints here.
    std::vector<std::optional<NodeId>> adj(static_cast<std::size_t>(out) + 1);
    adj[static_cast<std::size_t>(out)] = scalar_const(1.0);

    auto accumulate = [&](NodeId target, NodeId contrib) {
        auto& slot = adj[static_cast<std::size_t>(target)];
        slot = slot ? add(*slot, contrib) : contrib;
    };

    for (NodeId id = out; id >= 0; --id) {
        if (!adj[static_cast<std::size_t>(id)]) continue;
        const Node n = nodes_[static_cast<std::size_t>(id)];  // copy: vector may grow
        const NodeId g = *adj[static_cast<std::size_t>(id)];
        switch (n.op) {
            case Op::Param:
            case Op::Input:
            case Op::Const:
                break;
            case Op::Add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::Sub:
                accumulate(n.a, g);
                accumulate(n.b, neg(g));
                break;
            case Op::Mul:
                accumulate(n.a, mul(g, n.b));
                accumulate(n.b, mul(g, n.a));
                break;
            case Op::Div:
                accumulate(n.a, div(g, n.b));
                accumulate(n.b, neg(div(mul(g, n.a), square(n.b))));
                break;
            case Op::MatMul:
                accumulate(n.a, matmul(g, transpose(n.b)));
                accumulate(n.b, matmul(transpose(n.a), g));
                break;
            case Op::Transpose:
                accumulate(n.a, transpose(g));
                break;
            case Op::Tanh:
                // d tanh = 1 - tanh^2, reusing this node's output.
                accumulate(n.a, mul(g, add_const(neg(square(id)), 1.0)));
                break;
            case Op::Exp:
                accumulate(n.a, mul(g, id));
                break;
            case Op::Log:
                accumulate(n.a, div(g, n.a));
                break;
            case Op::Square:
                accumulate(n.a, scale(mul(g, n.a), 2.0));
                break;
            case Op::Scale:
                accumulate(n.a, scale(g, n.scalar));
                break;
            case Op::AddConst:
                accumulate(n.a, g);
                break;
            case Op::Neg:
                accumulate(n.a, neg(g));
                break;
            case Op::Sum: {
                const auto [ar, ac] = shape(n.a);
                accumulate(n.a, bcast_full(g, ar, ac));
                break;
            }
            case Op::RowSum:
                accumulate(n.a, bcast_cols(g, shape(n.a).second));
                break;
            case Op::ColSum:
                accumulate(n.a, bcast_rows(g, shape(n.a).first));
                break;
            case Op::BcastRows:
                accumulate(n.a, col_sum(g));
                break;
            case Op::BcastCols:
                accumulate(n.a, row_sum(g));
                break;
            case Op::BcastFull:
                accumulate(n.a, sum(g));
                break;
            case Op::Min: {
                NodeId mask = binary(Op::LeqMask, n.a, n.b);
                accumulate(n.a, mul(g, mask));
                accumulate(n.b, mul(g, add_const(neg(mask), 1.0)));
                break;
            }
            case Op::Clip: {
                NodeId mask = unary(Op::InBandMask, n.a);
                nodes_.back().scalar = n.scalar;
                nodes_.back().scalar2 = n.scalar2;
                accumulate(n.a, mul(g, mask));
                break;
            }
            case Op::LeqMask:
            case Op::InBandMask:
                break;  // piecewise constant
        }
    }

    std::vector<NodeId> grads;
    grads.reserve(param_nodes_.size());
    for (NodeId pn : param_nodes_) {
        if (pn <= out && adj[static_cast<std::size_t>(pn)]) {
            grads.push_back(*adj[static_cast<std::size_t>(pn)]);
        } else {
            const auto [r, c] = shape(pn);
            grads.push_back(constant(Eigen::MatrixXd::Zero(r, c)));
        }
    }
    return grad_cache_.emplace(out, std::move(grads)).first->second;
}

std::string Graph::hvp_input_name(const std::string& param_name) {
    return "__hvp_v::" + param_name;
}

const std::vector<NodeId>& Graph::hvp_nodes(NodeId scalar_out) {
    if (auto it = hvp_cache_.find(scalar_out); it != hvp_cache_.end()) return it->second;
    const std::vector<NodeId> grads = backward(scalar_out);

    // dot = sum_k <grad_k, v_k>, with v bound as input leaves.
    NodeId dot = -1;
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const TensorSlot& s = layout_->slot(k);
        const std::string vname = hvp_input_name(s.name);
        auto it = input_index_.find(vname);
        NodeId v = it != input_index_.end()
                       ? input_nodes_[static_cast<std::size_t>(it->second)]
                       : input(vname, s.rows, s.cols);
        NodeId term = sum(mul(grads[k], v));
        dot = dot < 0 ? term : add(dot, term);
    }
    if (dot < 0) throw std::invalid_argument("hvp_nodes: graph has no parameters");
    std::vector<NodeId> result = backward(dot);
    return hvp_cache_.emplace(scalar_out, std::move(result)).first->second;
}

std::vector<Eigen::MatrixXd> Graph::eval(const std::vector<NodeId>& outs,
                                         const ParamVector& params,
                                         const Binding& inputs) const {
    if (!ParamVector::same_layout(params.layout(), layout_) && layout_->total() > 0)
        throw std::invalid_argument("graph eval: ParamVector layout mismatch");

    // Mark ancestors of the requested outputs.
    std::vector<char> needed(nodes_.size(), 0);
    std::vector<NodeId> stack;
    for (NodeId o : outs) {
        check_id(o);
        stack.push_back(o);
    }
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        if (needed[static_cast<std::size_t>(id)]) continue;
        needed[static_cast<std::size_t>(id)] = 1;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.a >= 0) stack.push_back(n.a);
        if (n.b >= 0) stack.push_back(n.b);
    }

    std::vector<Eigen::MatrixXd> val(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!needed[i]) continue;
        const Node& n = nodes_[i];
        const NodeId id = static_cast<NodeId>(i);
        switch (n.op) {
            case Op::Param:
                val[i] = params.tensor(static_cast<std::size_t>(n.slot));
                break;
            case Op::Input: {
                const std::string& name = input_decls_[static_cast<std::size_t>(n.input_index)].first;
                auto it = inputs.find(name);
                if (it == inputs.end())
                    throw std::invalid_argument("graph eval: missing input " + name);
                if (it->second.rows() != n.rows || it->second.cols() != n.cols)
                    shape_error("bound input " + name, id);
                val[i] = it->second;
                break;
            }
            case Op::Const: val[i] = n.constant; break;
            case Op::Add: val[i] = val[n.a] + val[n.b]; break;
            case Op::Sub: val[i] = val[n.a] - val[n.b]; break;
            case Op::Mul: val[i] = val[n.a].cwiseProduct(val[n.b]); break;
            case Op::Div: val[i] = val[n.a].cwiseQuotient(val[n.b]); break;
            case Op::MatMul: val[i].noalias() = val[n.a] * val[n.b]; break;
            case Op::Transpose: val[i] = val[n.a].transpose(); break;
            case Op::Tanh: val[i] = val[n.a].array().tanh(); break;
            case Op::Exp: val[i] = val[n.a].array().exp(); break;
            case Op::Log: val[i] = val[n.a].array().log(); break;
            case Op::Square: val[i] = val[n.a].array().square(); break;
            case Op::Scale: val[i] = n.scalar * val[n.a]; break;
            case Op::AddConst: val[i] = val[n.a].array() + n.scalar; break;
            case Op::Neg: val[i] = -val[n.a]; break;
            case Op::Sum:
                val[i] = Eigen::MatrixXd::Constant(1, 1, val[n.a].sum());
                break;
            case Op::RowSum: val[i] = val[n.a].rowwise().sum(); break;
            case Op::ColSum: val[i] = val[n.a].colwise().sum(); break;
            case Op::BcastRows: val[i] = val[n.a].replicate(n.rows, 1); break;
            case Op::BcastCols: val[i] = val[n.a].replicate(1, n.cols); break;
            case Op::BcastFull:
                val[i] = Eigen::MatrixXd::Constant(n.rows, n.cols, val[n.a](0, 0));
                break;
            case Op::Min: val[i] = val[n.a].cwiseMin(val[n.b]); break;
            case Op::Clip:
                val[i] = val[n.a].array().max(n.scalar).min(n.scalar2);
                break;
            case Op::LeqMask:
                val[i] = (val[n.a].array() <= val[n.b].array()).cast<double>();
                break;
            case Op::InBandMask:
                val[i] = (val[n.a].array() > n.scalar && val[n.a].array() < n.scalar2)
                             .cast<double>();
                break;
        }
    }

    std::vector<Eigen::MatrixXd> result;
    result.reserve(outs.size());
    for (NodeId o : outs) result.push_back(val[static_cast<std::size_t>(o)]);
    return result;
}

Eigen::MatrixXd Graph::eval_one(NodeId out, const ParamVector& params,
                                const Binding& inputs) const {
    return eval({out}, params, inputs)[0];
}

Eigen::MatrixXd evaluate(const Graph& g, NodeId out, const ParamVector& params,
                         const Binding& inputs) {
    return g.eval_one(out, params, inputs);
}

ParamVector gradient(Graph& g, NodeId scalar_out, const ParamVector& params,
                     const Binding& inputs) {
    const std::vector<NodeId>& grads = g.backward(scalar_out);
    const auto values = g.eval(grads, params, inputs);
    ParamVector out(g.layout());
    for (std::size_t k = 0; k < grads.size(); ++k) out.set_tensor(k, values[k]);
    return out;
}

ParamVector hessian_vector_product(Graph& g, NodeId scalar_out,
                                   const ParamVector& params, const ParamVector& v,
                                   const Binding& inputs) {
    if (!ParamVector::same_layout(v.layout(), g.layout()))
        throw std::invalid_argument("hessian_vector_product: v layout mismatch");
    const std::vector<NodeId>& hv = g.hvp_nodes(scalar_out);
    Binding bound = inputs;
    for (std::size_t k = 0; k < g.layout()->slot_count(); ++k) {
        const TensorSlot& s = g.layout()->slot(k);
        bound[Graph::hvp_input_name(s.name)] = v.tensor(k);
    }
    const auto values = g.eval(hv, params, bound);
    ParamVector out(g.layout());
    for (std::size_t k = 0; k < hv.size(); ++k) out.set_tensor(k, values[k]);
    return out;
}

}  // namespace pertrl::diff
