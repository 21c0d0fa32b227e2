#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "taskgroup/diff/tensor.hpp"

namespace taskgroup::diff {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;
    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// d(loss)/d(leaf) for every gradient-requiring leaf registered on a graph,
/// keyed by the address of the source tensor.
class Gradients {
public:
    const Tensor& of(const Tensor& leaf) const;
    bool contains(const Tensor& leaf) const { return grads_.contains(&leaf); }
    std::size_t size() const noexcept { return grads_.size(); }

private:
    friend class Graph;
    std::unordered_map<const Tensor*, Tensor> grads_;
};

/// Tape of operation records. Nodes are appended in construction order, which
/// is a valid topological order, so backward is a single reverse sweep that
/// visits each node once.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor& upstream)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Value that never receives a gradient.
    Var constant(Tensor value);

    /// Leaf whose value is copied from `source`. When `source.requires_grad()`,
    /// its gradient is reported by backward under the key `&source`.
    /// Registering the same tensor twice returns the same node.
    Var leaf(const Tensor& source);

    /// Appends an operation node. `fn` is called during backward only when
    /// some parent requires gradients.
    Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);

    /// Gradient accumulator of node `id`, allocated on first use; nullptr when
    /// the node does not require gradients.
    Tensor* grad_sink(std::size_t id);

    Gradients backward(Var loss);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        const Tensor* source = nullptr;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> leaf_ids_;
    bool backward_done_ = false;
};

// Kernel set. All operands must belong to the same graph.
namespace ops {

/// Same shape, or `b` a 1×cols row vector added to every row of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var relu(Var a);
Var exp(Var a);
/// Throws DomainError on any non-positive entry.
Var log(Var a);
/// Elementwise max(a, floor); gradient passes only where a > floor.
Var maximum(Var a, double floor);
Var sum(Var a);
Var mean(Var a);
/// Column sums as a 1×cols row.
Var col_sum(Var a);
/// Largest entry as a scalar; gradient goes to the first maximal entry.
Var max(Var a);
Var row_softmax(Var a);
Var row_log_softmax(Var a);
/// Rows of `table` selected by `indices` (repeats allowed).
Var gather_rows(Var table, std::span<const std::size_t> indices);
/// Column vector with entry r equal to a(r, cols[r]).
Var pick(Var a, std::span<const std::size_t> cols);
/// Means of consecutive segments of a column vector; segment k spans
/// [offsets[k], offsets[k+1]).
Var segment_mean(Var column, std::span<const std::size_t> offsets);
/// Places equally long column vectors side by side.
Var concat_columns(std::span<const Var> columns);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator*(double k, Var a) { return ops::scale(a, k); }

}  // namespace taskgroup::diff
