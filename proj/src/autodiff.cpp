#include "sharplab/autodiff.hpp"

#include <cmath>
#include <cstring>

namespace sharplab {

namespace {

constexpr double kDegenerateVarianceThreshold = 1e-24;

template <typename T>
T relu_of(T x) {
    return primal(x) > 0.0 ? x : T(0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// GraphBuilder
// ---------------------------------------------------------------------------

NodeId GraphBuilder::push(Node n) {
    g_.nodes_.push_back(std::move(n));
    return static_cast<NodeId>(g_.nodes_.size() - 1);
}

NodeId GraphBuilder::input(Shape shape) {
    Node n;
    n.op = OpKind::Input;
    n.shape = std::move(shape);
    NodeId id = push(std::move(n));
    g_.inputs_.push_back(id);
    return id;
}

NodeId GraphBuilder::constant(Array value) {
    Node n;
    n.op = OpKind::Constant;
    n.shape = value.shape;
    n.constant = std::move(value);
    return push(std::move(n));
}

NodeId GraphBuilder::matmul(NodeId a, NodeId b) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    if (sa.size() != 2) throw ShapeError("matmul: left operand must be rank 2, got " + shape_str(sa));
    Shape out;
    if (sb.size() == 2) {
        if (sa[1] != sb[0])
            throw ShapeError("matmul: inner dimensions differ: " + shape_str(sa) + " x " + shape_str(sb));
        out = {sa[0], sb[1]};
    } else if (sb.size() == 1) {
        if (sa[1] != sb[0])
            throw ShapeError("matmul: inner dimensions differ: " + shape_str(sa) + " x " + shape_str(sb));
        out = {sa[0]};
    } else {
        throw ShapeError("matmul: right operand must be rank 1 or 2");
    }
    Node n;
    n.op = OpKind::MatMul;
    n.in = {a, b};
    n.shape = std::move(out);
    return push(std::move(n));
}

NodeId GraphBuilder::add(NodeId a, NodeId b) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    bool broadcast_row = sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0];
    if (!(sa == sb || broadcast_row))
        throw ShapeError("add: incompatible shapes " + shape_str(sa) + " + " + shape_str(sb));
    Node n;
    n.op = OpKind::Add;
    n.in = {a, b};
    n.shape = sa;
    return push(std::move(n));
}

NodeId GraphBuilder::mul(NodeId a, NodeId b) {
    if (shape_of(a) != shape_of(b))
        throw ShapeError("mul: shapes differ: " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
    Node n;
    n.op = OpKind::Mul;
    n.in = {a, b};
    n.shape = shape_of(a);
    return push(std::move(n));
}

NodeId GraphBuilder::relu(NodeId a) {
    Node n;
    n.op = OpKind::Relu;
    n.in = {a, -1};
    n.shape = shape_of(a);
    return push(std::move(n));
}

NodeId GraphBuilder::mean(NodeId a) {
    if (shape_numel(shape_of(a)) == 0) throw ShapeError("mean of empty array");
    Node n;
    n.op = OpKind::Mean;
    n.in = {a, -1};
    n.shape = {};
    return push(std::move(n));
}

NodeId GraphBuilder::softmax_xent(NodeId logits, std::vector<int> labels) {
    const Shape& s = shape_of(logits);
    if (s.size() != 2) throw ShapeError("softmax_xent: logits must be rank 2");
    if (static_cast<int>(labels.size()) != s[0])
        throw ShapeError("softmax_xent: label count does not match row count");
    for (int y : labels)
        if (y < 0 || y >= s[1]) throw ShapeError("softmax_xent: label out of range");
    Node n;
    n.op = OpKind::SoftmaxXent;
    n.in = {logits, -1};
    n.shape = {};
    n.labels = std::move(labels);
    return push(std::move(n));
}

NodeId GraphBuilder::half_squared_error(NodeId a, NodeId b) {
    if (shape_of(a) != shape_of(b))
        throw ShapeError("half_squared_error: shapes differ");
    Node n;
    n.op = OpKind::HalfSquaredError;
    n.in = {a, b};
    n.shape = {};
    return push(std::move(n));
}

NodeId GraphBuilder::logit_normalize(NodeId a) {
    const Shape& s = shape_of(a);
    if (s.size() != 2) throw ShapeError("logit_normalize: logits must be rank 2");
    if (s[1] < 2) throw ShapeError("logit_normalize: needs K >= 2 classes");
    Node n;
    n.op = OpKind::LogitNormalize;
    n.in = {a, -1};
    n.shape = s;
    return push(std::move(n));
}

Graph GraphBuilder::build(NodeId output) && {
    if (output < 0 || output >= static_cast<NodeId>(g_.nodes_.size()))
        throw ShapeError("build: invalid output node");
    g_.output_ = output;
    return std::move(g_);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

int Graph::flat_input_dim() const {
    int total = 0;
    for (NodeId id : inputs_) total += static_cast<int>(shape_numel(nodes_[id].shape));
    return total;
}

template <typename T>
void Graph::eval_forward(std::span<const std::vector<T>> in_values,
                         std::vector<std::vector<T>>& values) const {
    using std::exp;
    using std::log;
    using std::sqrt;
    if (in_values.size() != inputs_.size())
        throw ShapeError("forward: expected " + std::to_string(inputs_.size()) + " inputs, got " +
                         std::to_string(in_values.size()));
    values.assign(nodes_.size(), {});
    std::size_t next_input = 0;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        const std::size_t numel = shape_numel(n.shape);
        switch (n.op) {
            case OpKind::Input: {
                const std::vector<T>& src = in_values[next_input++];
                if (src.size() != numel)
                    throw ShapeError("forward: input " + std::to_string(next_input - 1) +
                                     " has wrong size");
                values[id] = src;
                break;
            }
            case OpKind::Constant: {
                values[id].resize(numel);
                for (std::size_t i = 0; i < numel; ++i) values[id][i] = T(n.constant.data[i]);
                break;
            }
            case OpKind::MatMul: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                const Shape& sa = nodes_[n.in[0]].shape;
                const Shape& sb = nodes_[n.in[1]].shape;
                const int m = sa[0], k = sa[1];
                values[id].assign(numel, T(0.0));
                auto& C = values[id];
                if (sb.size() == 2) {
                    const int cols = sb[1];
                    for (int i = 0; i < m; ++i)
                        for (int p = 0; p < k; ++p) {
                            T a = A[i * k + p];
                            for (int j = 0; j < cols; ++j) C[i * cols + j] += a * B[p * cols + j];
                        }
                } else {
                    for (int i = 0; i < m; ++i) {
                        T acc(0.0);
                        for (int p = 0; p < k; ++p) acc += A[i * k + p] * B[p];
                        C[i] = acc;
                    }
                }
                break;
            }
            case OpKind::Add: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                values[id].resize(numel);
                if (A.size() == B.size()) {
                    for (std::size_t i = 0; i < numel; ++i) values[id][i] = A[i] + B[i];
                } else {
                    const int cols = n.shape[1];
                    for (std::size_t i = 0; i < numel; ++i)
                        values[id][i] = A[i] + B[i % cols];
                }
                break;
            }
            case OpKind::Mul: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                values[id].resize(numel);
                for (std::size_t i = 0; i < numel; ++i) values[id][i] = A[i] * B[i];
                break;
            }
            case OpKind::Relu: {
                const auto& A = values[n.in[0]];
                values[id].resize(numel);
                for (std::size_t i = 0; i < numel; ++i) values[id][i] = relu_of(A[i]);
                break;
            }
            case OpKind::Mean: {
                const auto& A = values[n.in[0]];
                T acc(0.0);
                for (const T& x : A) acc += x;
                values[id] = {acc / T(static_cast<double>(A.size()))};
                break;
            }
            case OpKind::SoftmaxXent: {
                const auto& F = values[n.in[0]];
                const Shape& sf = nodes_[n.in[0]].shape;
                const int m = sf[0], K = sf[1];
                T acc(0.0);
                for (int i = 0; i < m; ++i) {
                    double mx = primal(F[i * K]);
                    for (int j = 1; j < K; ++j) mx = std::max(mx, primal(F[i * K + j]));
                    T sum(0.0);
                    for (int j = 0; j < K; ++j) sum += exp(F[i * K + j] - T(mx));
                    T lse = log(sum) + T(mx);
                    acc += lse - F[i * K + n.labels[i]];
                }
                values[id] = {acc / T(static_cast<double>(m))};
                break;
            }
            case OpKind::HalfSquaredError: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                T acc(0.0);
                for (std::size_t i = 0; i < A.size(); ++i) {
                    T d = A[i] - B[i];
                    acc += d * d;
                }
                values[id] = {T(0.5) * acc};
                break;
            }
            case OpKind::LogitNormalize: {
                const auto& F = values[n.in[0]];
                const int m = n.shape[0], K = n.shape[1];
                values[id].resize(numel);
                for (int i = 0; i < m; ++i) {
                    T mu(0.0);
                    for (int j = 0; j < K; ++j) mu += F[i * K + j];
                    mu = mu / T(static_cast<double>(K));
                    T var(0.0);
                    for (int j = 0; j < K; ++j) {
                        T d = F[i * K + j] - mu;
                        var += d * d;
                    }
                    var = var / T(static_cast<double>(K));
                    if (primal(var) < kDegenerateVarianceThreshold)
                        throw DegenerateLogits("logit variance below 1e-24 in row " + std::to_string(i));
                    T sigma = sqrt(var);
                    for (int j = 0; j < K; ++j) values[id][i * K + j] = F[i * K + j] / sigma;
                }
                break;
            }
        }
    }
}

template <typename T>
void Graph::eval_backward(const std::vector<std::vector<T>>& values,
                          std::vector<std::vector<T>>& adjoints) const {
    using std::exp;
    using std::log;
    using std::sqrt;
    adjoints.assign(nodes_.size(), {});
    for (std::size_t id = 0; id < nodes_.size(); ++id)
        adjoints[id].assign(values[id].size(), T(0.0));
    adjoints[output_][0] = T(1.0);

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        const NodeId id = static_cast<NodeId>(idx);
        const Node& n = nodes_[id];
        const auto& adj = adjoints[id];
        switch (n.op) {
            case OpKind::Input:
            case OpKind::Constant:
                break;
            case OpKind::MatMul: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                auto& dA = adjoints[n.in[0]];
                auto& dB = adjoints[n.in[1]];
                const Shape& sa = nodes_[n.in[0]].shape;
                const Shape& sb = nodes_[n.in[1]].shape;
                const int m = sa[0], k = sa[1];
                if (sb.size() == 2) {
                    const int cols = sb[1];
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < cols; ++j) {
                            T g = adj[i * cols + j];
                            for (int p = 0; p < k; ++p) {
                                dA[i * k + p] += g * B[p * cols + j];
                                dB[p * cols + j] += A[i * k + p] * g;
                            }
                        }
                } else {
                    for (int i = 0; i < m; ++i) {
                        T g = adj[i];
                        for (int p = 0; p < k; ++p) {
                            dA[i * k + p] += g * B[p];
                            dB[p] += A[i * k + p] * g;
                        }
                    }
                }
                break;
            }
            case OpKind::Add: {
                auto& dA = adjoints[n.in[0]];
                auto& dB = adjoints[n.in[1]];
                if (dA.size() == dB.size()) {
                    for (std::size_t i = 0; i < adj.size(); ++i) {
                        dA[i] += adj[i];
                        dB[i] += adj[i];
                    }
                } else {
                    const int cols = n.shape[1];
                    for (std::size_t i = 0; i < adj.size(); ++i) {
                        dA[i] += adj[i];
                        dB[i % cols] += adj[i];
                    }
                }
                break;
            }
            case OpKind::Mul: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                auto& dA = adjoints[n.in[0]];
                auto& dB = adjoints[n.in[1]];
                for (std::size_t i = 0; i < adj.size(); ++i) {
                    dA[i] += adj[i] * B[i];
                    dB[i] += adj[i] * A[i];
                }
                break;
            }
            case OpKind::Relu: {
                const auto& A = values[n.in[0]];
                auto& dA = adjoints[n.in[0]];
                for (std::size_t i = 0; i < adj.size(); ++i)
                    if (primal(A[i]) > 0.0) dA[i] += adj[i];
                break;
            }
            case OpKind::Mean: {
                auto& dA = adjoints[n.in[0]];
                T g = adj[0] / T(static_cast<double>(dA.size()));
                for (auto& x : dA) x += g;
                break;
            }
            case OpKind::SoftmaxXent: {
                const auto& F = values[n.in[0]];
                auto& dF = adjoints[n.in[0]];
                const Shape& sf = nodes_[n.in[0]].shape;
                const int m = sf[0], K = sf[1];
                T g = adj[0] / T(static_cast<double>(m));
                for (int i = 0; i < m; ++i) {
                    double mx = primal(F[i * K]);
                    for (int j = 1; j < K; ++j) mx = std::max(mx, primal(F[i * K + j]));
                    T sum(0.0);
                    for (int j = 0; j < K; ++j) sum += exp(F[i * K + j] - T(mx));
                    for (int j = 0; j < K; ++j) {
                        T p = exp(F[i * K + j] - T(mx)) / sum;
                        if (j == n.labels[i]) p -= T(1.0);
                        dF[i * K + j] += p * g;
                    }
                }
                break;
            }
            case OpKind::HalfSquaredError: {
                const auto& A = values[n.in[0]];
                const auto& B = values[n.in[1]];
                auto& dA = adjoints[n.in[0]];
                auto& dB = adjoints[n.in[1]];
                T g = adj[0];
                for (std::size_t i = 0; i < A.size(); ++i) {
                    T d = (A[i] - B[i]) * g;
                    dA[i] += d;
                    dB[i] -= d;
                }
                break;
            }
            case OpKind::LogitNormalize: {
                const auto& F = values[n.in[0]];
                auto& dF = adjoints[n.in[0]];
                const int m = n.shape[0], K = n.shape[1];
                for (int i = 0; i < m; ++i) {
                    T mu(0.0);
                    for (int j = 0; j < K; ++j) mu += F[i * K + j];
                    mu = mu / T(static_cast<double>(K));
                    T var(0.0);
                    for (int j = 0; j < K; ++j) {
                        T d = F[i * K + j] - mu;
                        var += d * d;
                    }
                    var = var / T(static_cast<double>(K));
                    T sigma = sqrt(var);
                    T inner(0.0);  // sum_i adj_i * f_i
                    for (int j = 0; j < K; ++j) inner += adj[i * K + j] * F[i * K + j];
                    T coef = inner / (T(static_cast<double>(K)) * sigma * sigma * sigma);
                    for (int j = 0; j < K; ++j)
                        dF[i * K + j] += adj[i * K + j] / sigma - coef * (F[i * K + j] - mu);
                }
                break;
            }
        }
    }
}

Array Graph::forward(std::span<const Array> inputs) const {
    std::vector<std::vector<double>> in_values(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].shape != nodes_[inputs_[i]].shape)
            throw ShapeError("forward: input " + std::to_string(i) + " has shape " +
                             shape_str(inputs[i].shape) + ", graph declares " +
                             shape_str(nodes_[inputs_[i]].shape));
        in_values[i] = inputs[i].data;
    }
    std::vector<std::vector<double>> values;
    eval_forward<double>(in_values, values);
    return Array(nodes_[output_].shape, values[output_]);
}

void Graph::split_flat(std::span<const double> flat,
                       std::vector<std::vector<double>>& out) const {
    if (static_cast<int>(flat.size()) != flat_input_dim())
        throw ShapeError("flat input has length " + std::to_string(flat.size()) +
                         ", graph expects " + std::to_string(flat_input_dim()));
    out.resize(inputs_.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
        std::size_t n = shape_numel(nodes_[inputs_[i]].shape);
        out[i].assign(flat.begin() + off, flat.begin() + off + n);
        off += n;
    }
}

double Graph::value(std::span<const double> flat) const {
    if (!scalar_output()) throw ShapeError("value: graph output is not scalar");
    std::vector<std::vector<double>> in_values;
    split_flat(flat, in_values);
    std::vector<std::vector<double>> values;
    eval_forward<double>(in_values, values);
    return values[output_][0];
}

std::vector<Array> Graph::gradient(std::span<const Array> inputs) const {
    if (!scalar_output()) throw ShapeError("gradient: loss output is not scalar");
    std::vector<std::vector<double>> in_values(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) in_values[i] = inputs[i].data;
    std::vector<std::vector<double>> values, adjoints;
    eval_forward<double>(in_values, values);
    eval_backward<double>(values, adjoints);
    std::vector<Array> grads;
    grads.reserve(inputs_.size());
    for (NodeId id : inputs_) grads.emplace_back(nodes_[id].shape, adjoints[id]);
    return grads;
}

double Graph::value_grad(std::span<const double> flat, std::span<double> grad_out) const {
    if (!scalar_output()) throw ShapeError("value_grad: loss output is not scalar");
    std::vector<std::vector<double>> in_values;
    split_flat(flat, in_values);
    std::vector<std::vector<double>> values, adjoints;
    eval_forward<double>(in_values, values);
    eval_backward<double>(values, adjoints);
    std::size_t off = 0;
    for (NodeId id : inputs_) {
        const auto& a = adjoints[id];
        std::copy(a.begin(), a.end(), grad_out.begin() + off);
        off += a.size();
    }
    return values[output_][0];
}

void Graph::hvp_nested(std::span<const double> flat, std::span<const double> v,
                       std::span<double> out) const {
    if (!scalar_output()) throw ShapeError("hvp: loss output is not scalar");
    if (v.size() != flat.size()) throw ShapeError("hvp: |v| != |w|");
    std::vector<std::vector<Dual>> in_values(inputs_.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
        std::size_t n = shape_numel(nodes_[inputs_[i]].shape);
        in_values[i].resize(n);
        for (std::size_t j = 0; j < n; ++j) in_values[i][j] = Dual(flat[off + j], v[off + j]);
        off += n;
    }
    std::vector<std::vector<Dual>> values, adjoints;
    eval_forward<Dual>(in_values, values);
    eval_backward<Dual>(values, adjoints);
    off = 0;
    for (NodeId id : inputs_) {
        const auto& a = adjoints[id];
        for (std::size_t j = 0; j < a.size(); ++j) out[off + j] = a[j].t;
        off += a.size();
    }
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

void Objective::hvp(std::span<const double> w, std::span<const double> v,
                    std::span<double> out, const HvpOptions& opt) const {
    // Base objectives have no nested path; finite differences regardless of
    // the requested method.
    hvp_finite_diff(w, v, out, opt.fd_step);
}

void Objective::hvp_finite_diff(std::span<const double> w, std::span<const double> v,
                                std::span<double> out, double h) const {
    const std::size_t n = w.size();
    if (v.size() != n || out.size() != n) throw ShapeError("hvp: |v| != |w|");
    double vmax = norm_inf(v);
    if (vmax == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    double wmax = norm_inf(w);
    double t = h * (wmax > 0.0 ? wmax : 1.0) / vmax;
    std::vector<double> wp(w.begin(), w.end()), wm(w.begin(), w.end());
    for (std::size_t i = 0; i < n; ++i) {
        wp[i] += t * v[i];
        wm[i] -= t * v[i];
    }
    std::vector<double> gp(n), gm(n);
    value_grad(wp, gp);
    value_grad(wm, gm);
    for (std::size_t i = 0; i < n; ++i) out[i] = (gp[i] - gm[i]) / (2.0 * t);
}

GraphLoss::GraphLoss(Graph g) : graph_(std::move(g)), dim_(graph_.flat_input_dim()) {
    if (!graph_.scalar_output()) throw ShapeError("GraphLoss: graph output is not scalar");
}

double GraphLoss::value(std::span<const double> w) const { return graph_.value(w); }

double GraphLoss::value_grad(std::span<const double> w, std::span<double> grad) const {
    return graph_.value_grad(w, grad);
}

void GraphLoss::hvp(std::span<const double> w, std::span<const double> v,
                    std::span<double> out, const HvpOptions& opt) const {
    if (opt.method == HvpMethod::nested)
        graph_.hvp_nested(w, v, out);
    else
        hvp_finite_diff(w, v, out, opt.fd_step);
}

}  // namespace sharplab
