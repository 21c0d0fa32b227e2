#include "taskgroup/diff/graph.hpp"

#include "taskgroup/errors.hpp"

namespace taskgroup::diff {

const Tensor& Var::value() const {
    if (graph_ == nullptr) throw ContractError("value() on an unbound Var");
    return graph_->value(id_);
}

bool Var::requires_grad() const { return graph_ != nullptr && graph_->requires_grad(id_); }

const Tensor& Gradients::of(const Tensor& leaf) const {
    const auto it = grads_.find(&leaf);
    if (it == grads_.end()) throw ContractError("tensor was not a gradient leaf of this graph");
    return it->second;
}

Var Graph::constant(Tensor value) {
    value.set_requires_grad(false);
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

Var Graph::leaf(const Tensor& source) {
    if (const auto it = leaf_ids_.find(&source); it != leaf_ids_.end()) return {this, it->second};
    Node node;
    node.value = source;
    node.requires_grad = source.requires_grad();
    node.source = &source;
    nodes_.push_back(std::move(node));
    const std::size_t id = nodes_.size() - 1;
    leaf_ids_.emplace(&source, id);
    return {this, id};
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    node.value.set_requires_grad(false);
    for (const Var& p : parents) {
        if (p.graph_ != this) throw ContractError("operands belong to different graphs");
        node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

Tensor* Graph::grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return &n.grad;
}

Gradients Graph::backward(Var loss) {
    if (loss.graph_ != this) throw ContractError("loss belongs to a different graph");
    const Tensor& lv = nodes_[loss.id_].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward needs a scalar loss, got " + lv.shape_string());
    }
    if (backward_done_) throw ContractError("backward already ran on this graph");
    backward_done_ = true;

    if (Tensor* g = grad_sink(loss.id_)) (*g)[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && n.has_grad) n.backward(*this, n.grad);
    }

    Gradients out;
    for (const auto& [source, id] : leaf_ids_) {
        Node& n = nodes_[id];
        if (!n.requires_grad) continue;
        out.grads_.emplace(source, n.has_grad ? n.grad : Tensor(n.value.rows(), n.value.cols()));
    }
    return out;
}

}  // namespace taskgroup::diff
