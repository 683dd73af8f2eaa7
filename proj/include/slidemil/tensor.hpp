#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "slidemil/errors.hpp"
#include "slidemil/rng.hpp"

namespace slidemil {

// Dense row-major tensor of 64-bit reals. Data is held behind a shared_ptr so
// that binding a parameter onto a tape aliases the buffer instead of copying
// it; tensors are never mutated while a tape referencing them is alive
// (optimizer updates happen between tapes).
class Tensor {
public:
    Tensor() : shape_{1}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0,
                        double mean = 0.0);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_->size(); }
    std::size_t rows() const;  // leading extents collapsed
    std::size_t cols() const { return shape_.back(); }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::vector<double>& vec() { return *data_; }
    const std::vector<double>& vec() const { return *data_; }

    double& at(std::size_t i) { return (*data_)[i]; }
    double at(std::size_t i) const { return (*data_)[i]; }
    double& at(std::size_t r, std::size_t c) { return (*data_)[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }

    std::string shape_str() const;
    bool all_finite() const;

    bool requires_grad = false;

private:
    std::vector<std::size_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

using NodeId = std::uint32_t;

// Append-only reverse-mode tape. Built fresh per forward pass; every node's
// inputs precede it, so backward is a single reverse sweep. Each backward call
// uses fresh per-node adjoint buffers and accumulates (+=) the results into
// the persistent gradients of requires_grad leaves, so two backward calls
// without a reset double the leaf gradients.
class Tape {
public:
    struct MaxResult {
        NodeId node;
        std::size_t argmax;  // smallest index on ties
    };

    // Leaf aliasing t's data. Allocates a persistent gradient buffer iff
    // t.requires_grad.
    NodeId leaf(const Tensor& t);
    // Leaf with requires_grad forced off (inputs, frozen weights, targets).
    NodeId constant(Tensor t);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    // x[... x d] + row[d], broadcast over leading rows
    NodeId add_row(NodeId x, NodeId row);
    NodeId scale(NodeId x, double c);
    NodeId gelu(NodeId x);
    // row-wise softmax(x / temperature) over the last axis, max-subtracted
    NodeId softmax(NodeId x, double temperature);
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps);
    // -sum(target * log(pred)); both must be distributions (validated)
    NodeId cross_entropy(NodeId target, NodeId pred);
    // binary cross-entropy of sigmoid(score) against label, stable fused form
    NodeId bce_with_logits(NodeId score, double label);
    NodeId sum(NodeId x);
    NodeId take_row(NodeId x, std::size_t row);
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId reshape(NodeId x, std::vector<std::size_t> shape);
    MaxResult max_all(NodeId x);

    void backward(NodeId root);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    // Persistent accumulated gradient of a requires_grad leaf.
    const std::vector<double>& grad(NodeId id) const;
    bool has_grad(NodeId id) const;
    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node;
    using BackwardFn =
        std::function<void(Tape&, const Node&, const std::vector<double>&,
                           std::vector<std::vector<double>>&)>;

    struct Node {
        const char* op;
        std::array<NodeId, 3> in{};
        int n_in = 0;
        Tensor value;
        bool needs_grad = false;
        std::size_t aux = 0;  // argmax for max_all
        std::shared_ptr<std::vector<double>> leaf_grad;  // requires_grad leaves only
        BackwardFn backward;
    };

    NodeId push(const char* op, Tensor value, std::initializer_list<NodeId> inputs,
                BackwardFn fn);
    bool any_needs_grad(std::initializer_list<NodeId> inputs) const;
    void check_id(NodeId id) const;

    // Lazily allocated adjoint for `id` during a backward sweep.
    static std::vector<double>& adj(std::vector<std::vector<double>>& adjoints, NodeId id,
                                    std::size_t n);

    std::vector<Node> nodes_;
};

// Maps persistent parameter tensors to their leaf nodes on one tape, so a
// model can be bound once per step and forwarded any number of times (all
// views of a batch share the same leaves and their gradients accumulate).
// A frozen binding ignores requires_grad flags; no gradients are recorded.
class Binding {
public:
    Binding(Tape& tape, std::span<Tensor* const> params, bool frozen = false);
    Binding(Tape& tape, const std::vector<Tensor*>& params, bool frozen = false)
        : Binding(tape, std::span<Tensor* const>(params.data(), params.size()), frozen) {}

    NodeId operator()(const Tensor& param) const;
    Tape& tape() const { return *tape_; }

private:
    Tape* tape_;
    std::vector<std::pair<const Tensor*, NodeId>> ids_;
};

}  // namespace slidemil
