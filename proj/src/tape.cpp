#include "qvl/tape.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <limits>

#include "qvl/errors.hpp"

namespace qvl {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

[[noreturn]] void shape_fail(OpKind k, const std::string& detail) {
    throw ShapeError(std::string(op_name(k)) + ": " + detail);
}

}  // namespace

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::multiply: return "multiply";
        case OpKind::tanh: return "tanh";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::abs: return "abs";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::square: return "square";
        case OpKind::gather_index: return "gather_index";
        case OpKind::masked_max: return "masked_max";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::reshape: return "reshape";
    }
    return "?";
}

const Tensor& GradientMap::at(NodeId id) const {
    if (!present_[id.index]) throw ValidationError("no gradient recorded for node " + std::to_string(id.index));
    return grads_[id.index];
}

Tensor& GradientMap::slot(NodeId id, const Shape& shape) {
    if (!present_[id.index]) {
        grads_[id.index] = Tensor::zeros(shape);
        present_[id.index] = 1;
    }
    return grads_[id.index];
}

void GradientMap::accumulate(NodeId id, const Shape& shape, const double* g, std::int64_t n) {
    Tensor& t = slot(id, shape);
    double* d = t.data();
    for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
}

NodeId Tape::push(Node n) {
    if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
        throw TooLargeError("tape node limit exceeded");
    }
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    return push(Node{OpKind::leaf, {}, std::move(value), {}, requires_grad});
}

NodeId Tape::gather_index(NodeId values, std::vector<std::int32_t> indices) {
    OpAttrs a;
    a.indices = std::move(indices);
    return apply(OpKind::gather_index, {values}, std::move(a));
}

NodeId Tape::masked_max(NodeId values, std::vector<std::uint8_t> mask) {
    OpAttrs a;
    a.mask = std::move(mask);
    return apply(OpKind::masked_max, {values}, std::move(a));
}

NodeId Tape::concat(const std::vector<NodeId>& parts, int axis) {
    OpAttrs a;
    a.axis = axis;
    return apply(OpKind::concat, parts, std::move(a));
}

NodeId Tape::slice(NodeId x, std::int64_t start, std::int64_t length) {
    OpAttrs a;
    a.start = start;
    a.length = length;
    return apply(OpKind::slice, {x}, std::move(a));
}

NodeId Tape::reshape(NodeId x, Shape target) {
    OpAttrs a;
    a.target_shape = std::move(target);
    return apply(OpKind::reshape, {x}, std::move(a));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    NodeId neg = constant(Tensor::full(value(b).shape(), -1.0));
    return add(a, multiply(b, neg));
}

NodeId Tape::apply(OpKind kind, const std::vector<NodeId>& inputs, OpAttrs attrs) {
    if (kind == OpKind::leaf) throw ValidationError("apply: leaf nodes are created via leaf()");
    for (NodeId id : inputs) {
        if (id.index >= nodes_.size()) throw ValidationError("apply: input node id out of range");
    }
    Tensor out = forward(kind, inputs, attrs);
    bool ng = false;
    for (NodeId id : inputs) ng = ng || nodes_[id.index].needs_grad;
    return push(Node{kind, inputs, std::move(out), std::move(attrs), ng});
}

Tensor Tape::forward(OpKind kind, const std::vector<NodeId>& in, const OpAttrs& attrs) const {
    auto arity = [&](std::size_t n) {
        if (in.size() != n) shape_fail(kind, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    };
    switch (kind) {
        case OpKind::leaf:
            break;
        case OpKind::matmul: {
            arity(2);
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            // Promote rank-1 operands: vector-times-matrix acts as a row,
            // matrix-times-vector as a column.
            std::int64_t m, k, k2, n;
            if (a.rank() == 2) { m = a.dim(0); k = a.dim(1); }
            else if (a.rank() == 1) { m = 1; k = a.dim(0); }
            else shape_fail(kind, "lhs rank must be 1 or 2, got " + shape_str(a.shape()));
            if (b.rank() == 2) { k2 = b.dim(0); n = b.dim(1); }
            else if (b.rank() == 1) { k2 = b.dim(0); n = 1; }
            else shape_fail(kind, "rhs rank must be 1 or 2, got " + shape_str(b.shape()));
            if (k != k2) shape_fail(kind, shape_str(a.shape()) + " x " + shape_str(b.shape()));
            Shape out_shape;
            if (a.rank() == 1 && b.rank() == 1) shape_fail(kind, "two rank-1 operands are ambiguous");
            else if (a.rank() == 1) out_shape = {n};
            else if (b.rank() == 1) out_shape = {m};
            else out_shape = {m, n};
            Tensor out = Tensor::zeros(out_shape);
            CMap am(a.data(), m, k), bm(b.data(), k, n);
            MMap om(out.data(), m, n);
            om.noalias() = am * bm;
            return out;
        }
        case OpKind::add: {
            arity(2);
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            if (a.same_shape(b)) {
                Tensor out = Tensor::zeros(a.shape());
                const double* pa = a.data();
                const double* pb = b.data();
                double* po = out.data();
                const std::int64_t n = a.numel();
                for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
                return out;
            }
            if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
                Tensor out = Tensor::zeros(a.shape());
                const std::int64_t r = a.dim(0), c = a.dim(1);
                const double* pa = a.data();
                const double* pb = b.data();
                double* po = out.data();
                for (std::int64_t i = 0; i < r; ++i)
                    for (std::int64_t j = 0; j < c; ++j) po[i * c + j] = pa[i * c + j] + pb[j];
                return out;
            }
            shape_fail(kind, shape_str(a.shape()) + " + " + shape_str(b.shape()));
        }
        case OpKind::multiply: {
            arity(2);
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            if (!a.same_shape(b)) shape_fail(kind, shape_str(a.shape()) + " * " + shape_str(b.shape()));
            Tensor out = Tensor::zeros(a.shape());
            const double* pa = a.data();
            const double* pb = b.data();
            double* po = out.data();
            const std::int64_t n = a.numel();
            for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
            return out;
        }
        case OpKind::tanh:
        case OpKind::relu:
        case OpKind::sigmoid:
        case OpKind::abs:
        case OpKind::square: {
            arity(1);
            const Tensor& x = value(in[0]);
            Tensor out = Tensor::zeros(x.shape());
            const double* px = x.data();
            double* po = out.data();
            const std::int64_t n = x.numel();
            switch (kind) {
                case OpKind::tanh:
                    for (std::int64_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
                    break;
                case OpKind::relu:
                    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
                    break;
                case OpKind::sigmoid:
                    for (std::int64_t i = 0; i < n; ++i) po[i] = 1.0 / (1.0 + std::exp(-px[i]));
                    break;
                case OpKind::abs:
                    for (std::int64_t i = 0; i < n; ++i) po[i] = std::fabs(px[i]);
                    break;
                default:
                    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] * px[i];
                    break;
            }
            return out;
        }
        case OpKind::sum:
        case OpKind::mean: {
            arity(1);
            const Tensor& x = value(in[0]);
            const double* px = x.data();
            const std::int64_t n = x.numel();
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += px[i];
            if (kind == OpKind::mean) acc /= static_cast<double>(n);
            return Tensor::scalar(acc);
        }
        case OpKind::gather_index: {
            arity(1);
            const Tensor& v = value(in[0]);
            std::int64_t r, c;
            if (v.rank() == 2) { r = v.dim(0); c = v.dim(1); }
            else if (v.rank() == 1) { r = 1; c = v.dim(0); }
            else shape_fail(kind, "values rank must be 1 or 2");
            if (static_cast<std::int64_t>(attrs.indices.size()) != r)
                shape_fail(kind, "need one index per row");
            Tensor out = Tensor::zeros({r});
            for (std::int64_t i = 0; i < r; ++i) {
                const std::int32_t ix = attrs.indices[static_cast<std::size_t>(i)];
                if (ix < 0 || ix >= c) throw ValidationError("gather_index: index out of range");
                out.at(i) = v.data()[i * c + ix];
            }
            return out;
        }
        case OpKind::masked_max: {
            arity(1);
            const Tensor& v = value(in[0]);
            std::int64_t r, c;
            if (v.rank() == 2) { r = v.dim(0); c = v.dim(1); }
            else if (v.rank() == 1) { r = 1; c = v.dim(0); }
            else shape_fail(kind, "values rank must be 1 or 2");
            if (static_cast<std::int64_t>(attrs.mask.size()) != r * c)
                shape_fail(kind, "mask size must match values");
            Tensor out = Tensor::zeros({r});
            for (std::int64_t i = 0; i < r; ++i) {
                bool found = false;
                double best = 0.0;
                for (std::int64_t j = 0; j < c; ++j) {
                    if (!attrs.mask[static_cast<std::size_t>(i * c + j)]) continue;
                    const double x = v.data()[i * c + j];
                    if (!found || x > best) { best = x; found = true; }
                }
                if (!found) throw EmptyReductionError("masked_max: row " + std::to_string(i) + " has no unmasked entry");
                out.at(i) = best;
            }
            return out;
        }
        case OpKind::concat: {
            if (in.empty()) throw EmptyInputError("concat: no inputs");
            const Tensor& first = value(in[0]);
            if (first.rank() == 1) {
                if (attrs.axis != 0) shape_fail(kind, "rank-1 concat must use axis 0");
                std::int64_t total = 0;
                for (NodeId id : in) {
                    if (value(id).rank() != 1) shape_fail(kind, "mixed ranks");
                    total += value(id).numel();
                }
                Tensor out = Tensor::zeros({total});
                std::int64_t off = 0;
                for (NodeId id : in) {
                    const Tensor& t = value(id);
                    std::memcpy(out.data() + off, t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
                    off += t.numel();
                }
                return out;
            }
            if (first.rank() != 2 || (attrs.axis != 0 && attrs.axis != 1)) shape_fail(kind, "axis must be 0 or 1 on rank-2");
            if (attrs.axis == 0) {
                const std::int64_t c = first.dim(1);
                std::int64_t rows = 0;
                for (NodeId id : in) {
                    if (value(id).rank() != 2 || value(id).dim(1) != c) shape_fail(kind, "column counts differ");
                    rows += value(id).dim(0);
                }
                Tensor out = Tensor::zeros({rows, c});
                std::int64_t off = 0;
                for (NodeId id : in) {
                    const Tensor& t = value(id);
                    std::memcpy(out.data() + off, t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
                    off += t.numel();
                }
                return out;
            }
            const std::int64_t r = first.dim(0);
            std::int64_t cols = 0;
            for (NodeId id : in) {
                if (value(id).rank() != 2 || value(id).dim(0) != r) shape_fail(kind, "row counts differ");
                cols += value(id).dim(1);
            }
            Tensor out = Tensor::zeros({r, cols});
            std::int64_t off = 0;
            for (NodeId id : in) {
                const Tensor& t = value(id);
                const std::int64_t c = t.dim(1);
                for (std::int64_t i = 0; i < r; ++i)
                    std::memcpy(out.data() + i * cols + off, t.data() + i * c, static_cast<std::size_t>(c) * sizeof(double));
                off += c;
            }
            return out;
        }
        case OpKind::slice: {
            arity(1);
            const Tensor& x = value(in[0]);
            const std::int64_t last = x.dim(static_cast<int>(x.rank() - 1));
            if (attrs.start < 0 || attrs.length <= 0 || attrs.start + attrs.length > last)
                shape_fail(kind, "range [" + std::to_string(attrs.start) + "," + std::to_string(attrs.start + attrs.length) + ") out of " + std::to_string(last));
            if (x.rank() == 1) {
                Tensor out = Tensor::zeros({attrs.length});
                std::memcpy(out.data(), x.data() + attrs.start, static_cast<std::size_t>(attrs.length) * sizeof(double));
                return out;
            }
            if (x.rank() != 2) shape_fail(kind, "rank must be 1 or 2");
            const std::int64_t r = x.dim(0);
            Tensor out = Tensor::zeros({r, attrs.length});
            for (std::int64_t i = 0; i < r; ++i)
                std::memcpy(out.data() + i * attrs.length, x.data() + i * last + attrs.start,
                            static_cast<std::size_t>(attrs.length) * sizeof(double));
            return out;
        }
        case OpKind::reshape: {
            arity(1);
            return value(in[0]).reshaped(attrs.target_shape);
        }
    }
    throw ValidationError("unhandled op kind");
}

GradientMap Tape::backward(NodeId loss) const {
    if (loss.index >= nodes_.size()) throw ValidationError("backward: unknown node");
    const Tensor& lv = nodes_[loss.index].value;
    if (lv.numel() != 1) throw NotScalarError("backward: loss has shape " + shape_str(lv.shape()));

    GradientMap gm(nodes_.size());
    gm.slot(loss, lv.shape()).at(0) = 1.0;

    // Exact reverse creation order; nodes above the loss cannot feed it.
    for (std::uint32_t idx = loss.index + 1; idx-- > 0;) {
        const Node& node = nodes_[idx];
        if (node.kind == OpKind::leaf || !node.needs_grad) continue;
        if (!gm.has(NodeId{idx})) continue;
        backward_node(idx, gm.at(NodeId{idx}), gm);
    }

    // Parameter leaves always report a gradient, even if no path reached them.
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].kind == OpKind::leaf && nodes_[i].needs_grad) gm.slot(NodeId{i}, nodes_[i].value.shape());
    }
    return gm;
}

void Tape::backward_node(std::uint32_t idx, const Tensor& g, GradientMap& gm) const {
    const Node& node = nodes_[idx];
    const std::vector<NodeId>& in = node.inputs;
    auto wants = [&](std::size_t i) { return nodes_[in[i].index].needs_grad; };

    switch (node.kind) {
        case OpKind::leaf:
            return;
        case OpKind::matmul: {
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            const std::int64_t m = a.rank() == 2 ? a.dim(0) : 1;
            const std::int64_t k = a.rank() == 2 ? a.dim(1) : a.dim(0);
            const std::int64_t n = b.rank() == 2 ? b.dim(1) : 1;
            CMap am(a.data(), m, k), bm(b.data(), k, n), gmad(g.data(), m, n);
            if (wants(0)) {
                Tensor& da = gm.slot(in[0], a.shape());
                MMap dam(da.data(), m, k);
                dam.noalias() += gmad * bm.transpose();
            }
            if (wants(1)) {
                Tensor& db = gm.slot(in[1], b.shape());
                MMap dbm(db.data(), k, n);
                dbm.noalias() += am.transpose() * gmad;
            }
            return;
        }
        case OpKind::add: {
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            if (wants(0)) gm.accumulate(in[0], a.shape(), g.data(), a.numel());
            if (wants(1)) {
                if (a.same_shape(b)) {
                    gm.accumulate(in[1], b.shape(), g.data(), b.numel());
                } else {  // bias broadcast: column-sum the incoming gradient
                    Tensor& db = gm.slot(in[1], b.shape());
                    const std::int64_t r = a.dim(0), c = a.dim(1);
                    for (std::int64_t i = 0; i < r; ++i)
                        for (std::int64_t j = 0; j < c; ++j) db.at(j) += g.data()[i * c + j];
                }
            }
            return;
        }
        case OpKind::multiply: {
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            const std::int64_t n = a.numel();
            if (wants(0)) {
                Tensor& da = gm.slot(in[0], a.shape());
                for (std::int64_t i = 0; i < n; ++i) da.at(i) += g.data()[i] * b.data()[i];
            }
            if (wants(1)) {
                Tensor& db = gm.slot(in[1], b.shape());
                for (std::int64_t i = 0; i < n; ++i) db.at(i) += g.data()[i] * a.data()[i];
            }
            return;
        }
        case OpKind::tanh: {
            if (!wants(0)) return;
            const Tensor& y = node.value;
            Tensor& dx = gm.slot(in[0], y.shape());
            const std::int64_t n = y.numel();
            for (std::int64_t i = 0; i < n; ++i) dx.at(i) += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
            return;
        }
        case OpKind::relu: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            Tensor& dx = gm.slot(in[0], x.shape());
            const std::int64_t n = x.numel();
            for (std::int64_t i = 0; i < n; ++i) dx.at(i) += x.data()[i] > 0.0 ? g.data()[i] : 0.0;
            return;
        }
        case OpKind::sigmoid: {
            if (!wants(0)) return;
            const Tensor& y = node.value;
            Tensor& dx = gm.slot(in[0], y.shape());
            const std::int64_t n = y.numel();
            for (std::int64_t i = 0; i < n; ++i) dx.at(i) += g.data()[i] * y.data()[i] * (1.0 - y.data()[i]);
            return;
        }
        case OpKind::abs: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            Tensor& dx = gm.slot(in[0], x.shape());
            const std::int64_t n = x.numel();
            for (std::int64_t i = 0; i < n; ++i) {
                const double xv = x.data()[i];
                const double s = xv > 0.0 ? 1.0 : (xv < 0.0 ? -1.0 : 0.0);
                dx.at(i) += g.data()[i] * s;
            }
            return;
        }
        case OpKind::square: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            Tensor& dx = gm.slot(in[0], x.shape());
            const std::int64_t n = x.numel();
            for (std::int64_t i = 0; i < n; ++i) dx.at(i) += g.data()[i] * 2.0 * x.data()[i];
            return;
        }
        case OpKind::sum: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            Tensor& dx = gm.slot(in[0], x.shape());
            const double gv = g.at(0);
            const std::int64_t n = x.numel();
            for (std::int64_t i = 0; i < n; ++i) dx.at(i) += gv;
            return;
        }
        case OpKind::mean: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            Tensor& dx = gm.slot(in[0], x.shape());
            const std::int64_t n = x.numel();
            const double gv = g.at(0) / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) dx.at(i) += gv;
            return;
        }
        case OpKind::gather_index: {
            if (!wants(0)) return;
            const Tensor& v = value(in[0]);
            const std::int64_t r = v.rank() == 2 ? v.dim(0) : 1;
            const std::int64_t c = v.rank() == 2 ? v.dim(1) : v.dim(0);
            Tensor& dv = gm.slot(in[0], v.shape());
            for (std::int64_t i = 0; i < r; ++i)
                dv.data()[i * c + node.attrs.indices[static_cast<std::size_t>(i)]] += g.data()[i];
            return;
        }
        case OpKind::masked_max: {
            if (!wants(0)) return;
            const Tensor& v = value(in[0]);
            const std::int64_t r = v.rank() == 2 ? v.dim(0) : 1;
            const std::int64_t c = v.rank() == 2 ? v.dim(1) : v.dim(0);
            Tensor& dv = gm.slot(in[0], v.shape());
            for (std::int64_t i = 0; i < r; ++i) {
                std::int64_t arg = -1;
                double best = 0.0;
                for (std::int64_t j = 0; j < c; ++j) {
                    if (!node.attrs.mask[static_cast<std::size_t>(i * c + j)]) continue;
                    const double x = v.data()[i * c + j];
                    if (arg < 0 || x > best) { best = x; arg = j; }
                }
                dv.data()[i * c + arg] += g.data()[i];
            }
            return;
        }
        case OpKind::concat: {
            const Tensor& out = node.value;
            if (out.rank() == 1 || node.attrs.axis == 0) {
                std::int64_t off = 0;
                for (std::size_t p = 0; p < in.size(); ++p) {
                    const Tensor& t = value(in[p]);
                    if (wants(p)) gm.accumulate(in[p], t.shape(), g.data() + off, t.numel());
                    off += t.numel();
                }
                return;
            }
            const std::int64_t r = out.dim(0), cols = out.dim(1);
            std::int64_t off = 0;
            for (std::size_t p = 0; p < in.size(); ++p) {
                const Tensor& t = value(in[p]);
                const std::int64_t c = t.dim(1);
                if (wants(p)) {
                    Tensor& dt = gm.slot(in[p], t.shape());
                    for (std::int64_t i = 0; i < r; ++i)
                        for (std::int64_t j = 0; j < c; ++j) dt.data()[i * c + j] += g.data()[i * cols + off + j];
                }
                off += c;
            }
            return;
        }
        case OpKind::slice: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            Tensor& dx = gm.slot(in[0], x.shape());
            const std::int64_t last = x.dim(static_cast<int>(x.rank() - 1));
            const std::int64_t r = x.rank() == 2 ? x.dim(0) : 1;
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < node.attrs.length; ++j)
                    dx.data()[i * last + node.attrs.start + j] += g.data()[i * node.attrs.length + j];
            return;
        }
        case OpKind::reshape: {
            if (!wants(0)) return;
            const Tensor& x = value(in[0]);
            gm.accumulate(in[0], x.shape(), g.data(), x.numel());
            return;
        }
    }
}

}  // namespace qvl
