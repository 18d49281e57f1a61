#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sharplab/array.hpp"

namespace sharplab {

// Dual number for forward-mode differentiation. Running the whole
// forward+backward tape on Dual scalars with input tangents seeded to v
// yields the Hessian-vector product H*v in the tangent of the gradient.
struct Dual {
    double v = 0.0;
    double t = 0.0;

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit from double is intended
    Dual(double value, double tangent) : v(value), t(tangent) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.t + b.t}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.t - b.t}; }
inline Dual operator-(Dual a) { return {-a.v, -a.t}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.t * b.v + a.v * b.t}; }
inline Dual operator/(Dual a, Dual b) {
    double inv = 1.0 / b.v;
    double q = a.v * inv;
    return {q, (a.t - q * b.t) * inv};
}
inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a = a - b; return a; }
inline Dual& operator*=(Dual& a, Dual b) { a = a * b; return a; }

inline Dual exp(Dual a) { double e = std::exp(a.v); return {e, e * a.t}; }
inline Dual log(Dual a) { return {std::log(a.v), a.t / a.v}; }
inline Dual sqrt(Dual a) { double s = std::sqrt(a.v); return {s, s > 0.0 ? 0.5 * a.t / s : 0.0}; }
inline double primal(double x) { return x; }
inline double primal(Dual x) { return x.v; }

enum class OpKind {
    Input,
    Constant,
    MatMul,          // (m x k)(k x n) -> (m x n); also (m x k)(k) -> (m)
    Add,             // same shape, or (m x k) + (k) row broadcast
    Mul,             // elementwise, same shape
    Relu,
    Mean,            // mean over all entries -> scalar
    SoftmaxXent,     // (m x K) logits + integer labels -> mean cross-entropy
    HalfSquaredError,// 0.5 * sum((a - b)^2) -> scalar
    LogitNormalize,  // per-row Eq.-5 normalization of (m x K) logits
};

using NodeId = int;

struct Node {
    OpKind op;
    std::array<NodeId, 2> in{-1, -1};
    Shape shape;
    Array constant;           // Constant nodes only
    std::vector<int> labels;  // SoftmaxXent only
};

// Immutable computation graph over dense arrays. Nodes are stored in
// construction order, which is a topological order by construction.
// All evaluation state lives in per-call buffers, so a single Graph may be
// evaluated concurrently from multiple threads.
class Graph {
public:
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<NodeId>& inputs() const { return inputs_; }
    NodeId output() const { return output_; }
    const Shape& shape_of(NodeId id) const { return nodes_[id].shape; }
    bool scalar_output() const { return nodes_[output_].shape.empty(); }

    // Total number of scalars across all declared inputs, in declaration order.
    int flat_input_dim() const;

    // Forward pass; returns the primal output.
    Array forward(std::span<const Array> inputs) const;

    // Scalar forward on a flat input vector (inputs concatenated in
    // declaration order). Requires scalar output.
    double value(std::span<const double> flat) const;

    // Reverse pass; d(output)/d(input_i) for every declared input.
    // Requires scalar output.
    std::vector<Array> gradient(std::span<const Array> inputs) const;
    double value_grad(std::span<const double> flat, std::span<double> grad_out) const;

    // Nested differentiation (forward-over-reverse): exact H*v.
    void hvp_nested(std::span<const double> flat, std::span<const double> v,
                    std::span<double> out) const;

private:
    friend class GraphBuilder;
    std::vector<Node> nodes_;
    std::vector<NodeId> inputs_;
    NodeId output_ = -1;

    template <typename T>
    void eval_forward(std::span<const std::vector<T>> in_values,
                      std::vector<std::vector<T>>& values) const;
    template <typename T>
    void eval_backward(const std::vector<std::vector<T>>& values,
                       std::vector<std::vector<T>>& adjoints) const;

    void split_flat(std::span<const double> flat, std::vector<std::vector<double>>& out) const;
};

class GraphBuilder {
public:
    NodeId input(Shape shape);
    NodeId constant(Array value);
    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId relu(NodeId a);
    NodeId mean(NodeId a);
    NodeId softmax_xent(NodeId logits, std::vector<int> labels);
    NodeId half_squared_error(NodeId a, NodeId b);
    NodeId logit_normalize(NodeId a);

    Graph build(NodeId output) &&;

private:
    NodeId push(Node n);
    const Shape& shape_of(NodeId id) const { return g_.nodes_[id].shape; }
    Graph g_;
};

enum class HvpMethod { nested, finite_diff };

struct HvpOptions {
    HvpMethod method = HvpMethod::nested;
    double fd_step = 1e-4;  // h; actual step is h * ||w||_inf / ||v||_inf
};

// A scalar loss over a flat parameter vector. The interface every numerical
// module (sharpness, hessian) consumes; ModelLoss and GraphLoss implement it.
class Objective {
public:
    virtual ~Objective() = default;
    virtual int dim() const = 0;
    virtual double value(std::span<const double> w) const = 0;
    virtual double value_grad(std::span<const double> w, std::span<double> grad) const = 0;
    virtual void hvp(std::span<const double> w, std::span<const double> v,
                     std::span<double> out, const HvpOptions& opt = {}) const;

protected:
    // Central finite differences of the gradient; default hvp path for
    // objectives without nested differentiation.
    void hvp_finite_diff(std::span<const double> w, std::span<const double> v,
                         std::span<double> out, double h) const;
};

// Objective backed by a Graph whose inputs are concatenated into one flat
// parameter vector in declaration order.
class GraphLoss final : public Objective {
public:
    explicit GraphLoss(Graph g);
    int dim() const override { return dim_; }
    double value(std::span<const double> w) const override;
    double value_grad(std::span<const double> w, std::span<double> grad) const override;
    void hvp(std::span<const double> w, std::span<const double> v, std::span<double> out,
             const HvpOptions& opt = {}) const override;
    const Graph& graph() const { return graph_; }

private:
    Graph graph_;
    int dim_;
};

}  // namespace sharplab
