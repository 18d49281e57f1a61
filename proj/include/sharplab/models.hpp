#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/rng.hpp"

namespace sharplab {

enum class ModelKind { linear, mlp, diaglin };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// widths: linear {d, K}; mlp {d, h1, ..., K}; diaglin {d}.
// MLP hidden activations are ReLU; the output layer is affine.
struct ModelSpec {
    ModelKind kind = ModelKind::linear;
    std::vector<int> widths;

    void validate() const;
    int input_dim() const { return widths.front(); }
    int output_dim() const { return kind == ModelKind::diaglin ? 1 : widths.back(); }
    // Number of weight layers (affine maps); diaglin counts its (u, v) pair as 1.
    int num_layers() const;
    bool is_classification() const { return kind != ModelKind::diaglin; }

    bool operator==(const ModelSpec&) const = default;
};

struct ParamSegment {
    std::string name;
    Shape shape;
    int offset = 0;

    int size() const { return static_cast<int>(shape_numel(shape)); }
};

// Flat weight vector plus the per-layer segment map that partitions it.
struct ParamVector {
    std::vector<double> values;
    std::vector<ParamSegment> segments;

    int dim() const { return static_cast<int>(values.size()); }
    std::span<double> segment(int i) {
        return {values.data() + segments[i].offset, static_cast<std::size_t>(segments[i].size())};
    }
    std::span<const double> segment(int i) const {
        return {values.data() + segments[i].offset, static_cast<std::size_t>(segments[i].size())};
    }
};

// Zero-initialized parameters with the layout implied by spec.
ParamVector make_params(const ModelSpec& spec);

// Gaussian init: He-style fan-in scaling for linear/mlp weight matrices
// (biases zero), N(0, gain^2) entries for diaglin.
ParamVector init_params(const ModelSpec& spec, Rng& rng, double gain = 1.0);

struct Batch {
    Array X;                       // n x d
    std::vector<int> labels;       // classification targets, size n
    std::vector<double> targets;   // regression targets, size n

    int size() const { return X.shape.empty() ? 0 : X.rows(); }
    bool is_classification() const { return !labels.empty(); }
    void validate(const ModelSpec& spec) const;
    Batch slice(int begin, int count) const;
};

// Raw logits (n x K), no normalization. diaglin returns the n x 1 predictions.
Array predict_logits(const ModelSpec& spec, const ParamVector& params, const Array& X);

// Eq.-5 normalization of a single logit row: f_i / sqrt((1/K) sum_j (f_j - mean)^2).
// Throws DegenerateLogits when the variance term is below 1e-24.
std::vector<double> normalize_logits(std::span<const double> f);

// Mean cross-entropy over the batch (classification, optionally on normalized
// logits), or 0.5 * ||X(u*v) - y||^2 for diaglin regression.
double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
            bool normalize = false);

// Multiplies layer l's weights and bias by alpha and divides layer l+1's
// weights by alpha (bias of l+1 unchanged); logits are preserved for ReLU
// networks. diaglin: (alpha*u, v/alpha) with l = 0.
ParamVector reparametrize_scale(const ModelSpec& spec, const ParamVector& params, int layer,
                                double alpha);

// Loss as a differentiable Objective over the flat parameter vector, bound to
// one batch. The graph is built once at construction; evaluations are pure.
class ModelLoss final : public Objective {
public:
    ModelLoss(const ModelSpec& spec, const Batch& batch, bool normalize = false);
    int dim() const override { return inner_->dim(); }
    double value(std::span<const double> w) const override { return inner_->value(w); }
    double value_grad(std::span<const double> w, std::span<double> grad) const override {
        return inner_->value_grad(w, grad);
    }
    void hvp(std::span<const double> w, std::span<const double> v, std::span<double> out,
             const HvpOptions& opt = {}) const override {
        inner_->hvp(w, v, out, opt);
    }

private:
    std::unique_ptr<GraphLoss> inner_;
};

// Checkpoint files: JSON {"spec": {...}, "weights": [...], "metadata": {...}}
// with deterministic field ordering.
void save_checkpoint(const std::string& path, const ModelSpec& spec, const ParamVector& params,
                     const std::map<std::string, double>& metadata = {});

struct Checkpoint {
    ModelSpec spec;
    ParamVector params;
    std::map<std::string, double> metadata;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace sharplab
