#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qvl/tensor.hpp"

namespace qvl {

// Operation kinds understood by the tape. Eager evaluation: apply() computes
// the output immediately and records the node for the backward pass.
//
// Shape rules:
//   matmul        {m,k}x{k,n}->{m,n}; rank-1 promotes: {k}x{k,n}->{n}, {m,k}x{k}->{m}
//   add           same shape, or {r,c}+{c} (bias broadcast over rows)
//   multiply      same shape, elementwise
//   tanh/relu/sigmoid/abs/square   elementwise
//   sum/mean      all elements -> {1}
//   gather_index  values {r,c} + per-row index -> {r}   (rank-1 treated as {1,c})
//   masked_max    values {r,c} + boolean mask  -> {r}; a row with no unmasked
//                 entry raises EmptyReductionError        (rank-1 -> {1})
//   concat        n-ary, axis 0 or 1
//   slice         contiguous range [start, start+length) of the last dim
//   reshape       metadata-only view, element count preserved
//
// Non-differentiable points use fixed subgradients: relu'(0)=0, abs'(0)=0,
// masked_max routes the gradient to the first unmasked maximum of each row.
enum class OpKind {
    leaf,
    matmul,
    add,
    multiply,
    tanh,
    relu,
    sigmoid,
    abs,
    sum,
    mean,
    square,
    gather_index,
    masked_max,
    concat,
    slice,
    reshape,
};

const char* op_name(OpKind k);

struct OpAttrs {
    int axis = 0;                          // concat
    std::int64_t start = 0;                // slice
    std::int64_t length = 0;               // slice
    Shape target_shape;                    // reshape
    std::vector<std::int32_t> indices;     // gather_index, one per row
    std::vector<std::uint8_t> mask;        // masked_max, row-major, 1 = usable
};

struct NodeId {
    std::uint32_t index = 0;
    bool operator==(const NodeId& o) const { return index == o.index; }
};

// Gradients keyed by node id. Nodes the backward pass never reached report
// has() == false; parameter leaves bound into the graph always get a tensor
// (zeros if no path contributed).
class GradientMap {
  public:
    explicit GradientMap(std::size_t n) : grads_(n), present_(n, 0) {}

    bool has(NodeId id) const { return present_[id.index] != 0; }
    const Tensor& at(NodeId id) const;

    void accumulate(NodeId id, const Shape& shape, const double* g, std::int64_t n);
    Tensor& slot(NodeId id, const Shape& shape);

  private:
    std::vector<Tensor> grads_;
    std::vector<std::uint8_t> present_;
};

class Tape {
  public:
    Tape() = default;

    // Leaves: parameters (requires_grad) or plain data constants.
    NodeId leaf(Tensor value, bool requires_grad = false);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }

    // Generic entry point; the typed helpers below all route through it.
    NodeId apply(OpKind kind, const std::vector<NodeId>& inputs, OpAttrs attrs = {});

    NodeId matmul(NodeId a, NodeId b) { return apply(OpKind::matmul, {a, b}); }
    NodeId add(NodeId a, NodeId b) { return apply(OpKind::add, {a, b}); }
    NodeId multiply(NodeId a, NodeId b) { return apply(OpKind::multiply, {a, b}); }
    NodeId tanh(NodeId x) { return apply(OpKind::tanh, {x}); }
    NodeId relu(NodeId x) { return apply(OpKind::relu, {x}); }
    NodeId sigmoid(NodeId x) { return apply(OpKind::sigmoid, {x}); }
    NodeId abs(NodeId x) { return apply(OpKind::abs, {x}); }
    NodeId sum(NodeId x) { return apply(OpKind::sum, {x}); }
    NodeId mean(NodeId x) { return apply(OpKind::mean, {x}); }
    NodeId square(NodeId x) { return apply(OpKind::square, {x}); }
    NodeId gather_index(NodeId values, std::vector<std::int32_t> indices);
    NodeId masked_max(NodeId values, std::vector<std::uint8_t> mask);
    NodeId concat(const std::vector<NodeId>& parts, int axis);
    NodeId slice(NodeId x, std::int64_t start, std::int64_t length);
    NodeId reshape(NodeId x, Shape target);

    // a - b without a dedicated op kind: a + (-1) * b.
    NodeId sub(NodeId a, NodeId b);

    const Tensor& value(NodeId id) const { return nodes_[id.index].value; }
    std::size_t size() const { return nodes_.size(); }
    bool needs_grad(NodeId id) const { return nodes_[id.index].needs_grad; }

    // Reverse pass from a scalar loss, visiting nodes in exact reverse
    // creation order. Forward values are left untouched.
    GradientMap backward(NodeId loss) const;

  private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        OpAttrs attrs;
        bool needs_grad;
    };

    NodeId push(Node n);
    Tensor forward(OpKind kind, const std::vector<NodeId>& inputs, const OpAttrs& attrs) const;
    void backward_node(std::uint32_t idx, const Tensor& g, GradientMap& gm) const;

    std::vector<Node> nodes_;
};

}  // namespace qvl
