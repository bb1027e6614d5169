#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvladdm/errors.hpp"
#include "mvladdm/rng.hpp"

namespace mvladdm {

// Dense multi-dimensional array of 64-bit reals. Row-major; rank 1 or 2 in
// practice (column vectors are {d,1}, scalars {1,1}).
class Tensor {
 public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> v);
    static Tensor col(std::vector<double> v);
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int rows() const { return shape_.at(0); }
    int cols() const { return shape_.size() >= 2 ? shape_[1] : 1; }

    double& operator[](std::int64_t i) { return data_[i]; }
    double operator[](std::int64_t i) const { return data_[i]; }
    double& operator()(int r, int c) { return data_[static_cast<std::int64_t>(r) * cols() + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::int64_t>(r) * cols() + c]; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the given stream.
Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng);

// In-place p <- p - lr * g.
void sgd_step(Tensor& param, const Tensor& grad, double lr);

using VarId = std::int32_t;

// Reverse-mode tape. Nodes are appended in topological order during the
// forward pass; backward() sweeps them once in reverse. One tape per
// forward/backward episode; parameters live outside and enter via leaf().
class Tape {
 public:
    enum class Op {
        Leaf,
        MatMul,
        Add,
        Mul,
        Scale,
        Sigmoid,
        Tanh,
        Exp,
        Log,
        Softplus,
        Square,
        Reciprocal,
        Sum,
        Mean,
        Concat,
        Slice,
        LogSumExp,
        LogSumExpRows,
        Transpose,
    };

    VarId leaf(Tensor value, bool requires_grad = false);

    VarId matmul(VarId a, VarId b);
    // Elementwise same-shape add, or bias-add {m,n} + {1,n}.
    VarId add(VarId a, VarId b);
    VarId mul(VarId a, VarId b);
    VarId scale(VarId a, double c);
    VarId sigmoid(VarId a);
    VarId tanh(VarId a);
    VarId exp(VarId a);
    VarId log(VarId a);
    VarId softplus(VarId a);
    VarId square(VarId a);
    VarId reciprocal(VarId a);
    VarId sum(VarId a);
    VarId mean(VarId a);
    VarId concat(std::span<const VarId> parts, int axis);
    VarId slice(VarId a, int axis, int start, int len);
    // Stable log(sum(exp(x))) over all elements -> {1,1}.
    VarId logsumexp(VarId a);
    // Per-row stable LSE: {m,n} -> {m,1}.
    VarId logsumexp_rows(VarId a);
    VarId transpose(VarId a);

    // d(loss)/d(node) for every node; loss must have exactly one element.
    void backward(VarId loss);

    const Tensor& value(VarId id) const { return nodes_[id].value; }
    const Tensor& grad(VarId id) const { return nodes_[id].grad; }
    std::size_t node_count() const { return nodes_.size(); }

 private:
    struct Node {
        Tensor value;
        Tensor grad;
        Op op = Op::Leaf;
        bool requires_grad = false;
        std::function<void(Tape&)> pullback;  // empty for leaves
    };

    VarId push(Tensor value, Op op, bool requires_grad, std::function<void(Tape&)> pullback);
    Tensor& grad_mut(VarId id) { return nodes_[id].grad; }
    bool wants_grad(VarId id) const { return nodes_[id].requires_grad; }

    std::vector<Node> nodes_;
};

}  // namespace mvladdm
