#include "sharplab/models.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace sharplab {

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::linear: return "linear";
        case ModelKind::mlp: return "mlp";
        case ModelKind::diaglin: return "diaglin";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ModelKind::linear;
    if (s == "mlp") return ModelKind::mlp;
    if (s == "diaglin") return ModelKind::diaglin;
    throw ConfigError("unknown model kind: " + s);
}

void ModelSpec::validate() const {
    for (int w : widths)
        if (w <= 0) throw ConfigError("model widths must be positive");
    switch (kind) {
        case ModelKind::linear:
            if (widths.size() != 2) throw ConfigError("linear spec needs widths {d, K}");
            break;
        case ModelKind::mlp:
            if (widths.size() < 3) throw ConfigError("mlp spec needs widths {d, h..., K}");
            break;
        case ModelKind::diaglin:
            if (widths.size() != 1) throw ConfigError("diaglin spec needs widths {d}");
            break;
    }
    if (is_classification() && widths.back() < 2)
        throw ConfigError("classification model needs K >= 2");
}

int ModelSpec::num_layers() const {
    return kind == ModelKind::diaglin ? 1 : static_cast<int>(widths.size()) - 1;
}

ParamVector make_params(const ModelSpec& spec) {
    spec.validate();
    ParamVector p;
    auto add = [&p](const std::string& name, Shape shape) {
        ParamSegment seg{name, std::move(shape), static_cast<int>(p.values.size())};
        p.values.resize(p.values.size() + shape_numel(seg.shape), 0.0);
        p.segments.push_back(std::move(seg));
    };
    if (spec.kind == ModelKind::diaglin) {
        add("u", {spec.widths[0]});
        add("v", {spec.widths[0]});
    } else {
        for (int l = 0; l + 1 < static_cast<int>(spec.widths.size()); ++l) {
            add("W" + std::to_string(l), {spec.widths[l], spec.widths[l + 1]});
            add("b" + std::to_string(l), {spec.widths[l + 1]});
        }
    }
    return p;
}

ParamVector init_params(const ModelSpec& spec, Rng& rng, double gain) {
    ParamVector p = make_params(spec);
    if (spec.kind == ModelKind::diaglin) {
        for (double& x : p.values) x = gain * rng.normal();
        return p;
    }
    for (std::size_t s = 0; s < p.segments.size(); ++s) {
        const ParamSegment& seg = p.segments[s];
        if (seg.shape.size() != 2) continue;  // biases stay zero
        bool hidden = seg.name != "W" + std::to_string(spec.num_layers() - 1);
        double std = gain * std::sqrt((hidden ? 2.0 : 1.0) / seg.shape[0]);
        for (double& x : p.segment(static_cast<int>(s))) x = std * rng.normal();
    }
    return p;
}

void Batch::validate(const ModelSpec& spec) const {
    if (size() < 1) throw ShapeError("batch must contain at least one example");
    if (X.rank() != 2 || X.cols() != spec.input_dim())
        throw ShapeError("batch X has shape " + shape_str(X.shape) + ", model expects n x " +
                         std::to_string(spec.input_dim()));
    if (spec.is_classification()) {
        if (static_cast<int>(labels.size()) != size())
            throw ShapeError("label count does not match batch rows");
        for (int y : labels)
            if (y < 0 || y >= spec.output_dim()) throw ShapeError("label out of range");
    } else {
        if (static_cast<int>(targets.size()) != size())
            throw ShapeError("target count does not match batch rows");
    }
}

Batch Batch::slice(int begin, int count) const {
    Batch out;
    const int d = X.cols();
    out.X = Array({count, d});
    std::copy(X.data.begin() + static_cast<std::size_t>(begin) * d,
              X.data.begin() + static_cast<std::size_t>(begin + count) * d, out.X.data.begin());
    if (!labels.empty()) out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
    if (!targets.empty())
        out.targets.assign(targets.begin() + begin, targets.begin() + begin + count);
    return out;
}

Array predict_logits(const ModelSpec& spec, const ParamVector& params, const Array& X) {
    spec.validate();
    if (X.rank() != 2 || X.cols() != spec.input_dim())
        throw ShapeError("predict: X has shape " + shape_str(X.shape));
    const int n = X.rows();
    if (spec.kind == ModelKind::diaglin) {
        const int d = spec.widths[0];
        auto u = params.segment(0);
        auto v = params.segment(1);
        Array out({n, 1});
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += X.at(i, j) * u[j] * v[j];
            out.at(i, 0) = acc;
        }
        return out;
    }
    Array h = X;
    const int L = spec.num_layers();
    for (int l = 0; l < L; ++l) {
        auto W = params.segment(2 * l);
        auto b = params.segment(2 * l + 1);
        const int in_w = spec.widths[l];
        const int out_w = spec.widths[l + 1];
        Array z({n, out_w});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out_w; ++j) {
                double acc = b[j];
                for (int p = 0; p < in_w; ++p) acc += h.at(i, p) * W[p * out_w + j];
                z.at(i, j) = acc;
            }
        if (l + 1 < L)
            for (double& x : z.data) x = x > 0.0 ? x : 0.0;
        h = std::move(z);
    }
    return h;
}

std::vector<double> normalize_logits(std::span<const double> f) {
    const int K = static_cast<int>(f.size());
    if (K < 2) throw ShapeError("normalize_logits: needs K >= 2");
    double mu = 0.0;
    for (double x : f) mu += x;
    mu /= K;
    double var = 0.0;
    for (double x : f) var += (x - mu) * (x - mu);
    var /= K;
    if (var < 1e-24) throw DegenerateLogits("logit variance below 1e-24");
    double sigma = std::sqrt(var);
    std::vector<double> out(f.begin(), f.end());
    for (double& x : out) x /= sigma;
    return out;
}

namespace {

Graph build_loss_graph(const ModelSpec& spec, const Batch& batch, bool normalize) {
    spec.validate();
    batch.validate(spec);
    GraphBuilder gb;
    std::vector<NodeId> param_nodes;
    if (spec.kind == ModelKind::diaglin) {
        if (normalize) throw ConfigError("logit normalization requires a classification model");
        const int d = spec.widths[0];
        NodeId u = gb.input({d});
        NodeId v = gb.input({d});
        NodeId X = gb.constant(batch.X);
        NodeId beta = gb.mul(u, v);
        NodeId pred = gb.matmul(X, beta);
        NodeId y = gb.constant(Array::vector(batch.targets));
        NodeId out = gb.half_squared_error(pred, y);
        return std::move(gb).build(out);
    }
    const int L = spec.num_layers();
    std::vector<std::pair<NodeId, NodeId>> layers;
    for (int l = 0; l < L; ++l) {
        NodeId W = gb.input({spec.widths[l], spec.widths[l + 1]});
        NodeId b = gb.input({spec.widths[l + 1]});
        layers.emplace_back(W, b);
    }
    NodeId h = gb.constant(batch.X);
    for (int l = 0; l < L; ++l) {
        h = gb.add(gb.matmul(h, layers[l].first), layers[l].second);
        if (l + 1 < L) h = gb.relu(h);
    }
    if (normalize) h = gb.logit_normalize(h);
    NodeId out = gb.softmax_xent(h, batch.labels);
    return std::move(gb).build(out);
}

}  // namespace

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
            bool normalize) {
    ModelLoss l(spec, batch, normalize);
    return l.value(params.values);
}

ParamVector reparametrize_scale(const ModelSpec& spec, const ParamVector& params, int layer,
                                double alpha) {
    spec.validate();
    if (!(alpha > 0.0)) throw ConfigError("reparametrize_scale: alpha must be positive");
    ParamVector out = params;
    if (spec.kind == ModelKind::diaglin) {
        if (layer != 0) throw ConfigError("diaglin has a single (u, v) pair; layer must be 0");
        for (double& x : out.segment(0)) x *= alpha;
        for (double& x : out.segment(1)) x /= alpha;
        return out;
    }
    if (layer < 0 || layer + 1 >= spec.num_layers())
        throw ConfigError("reparametrize_scale: layer " + std::to_string(layer) +
                          " has no consecutive layer " + std::to_string(layer + 1));
    for (double& x : out.segment(2 * layer)) x *= alpha;      // W_l
    for (double& x : out.segment(2 * layer + 1)) x *= alpha;  // b_l
    for (double& x : out.segment(2 * (layer + 1))) x /= alpha;  // W_{l+1}; its bias is untouched
    return out;
}

ModelLoss::ModelLoss(const ModelSpec& spec, const Batch& batch, bool normalize)
    : inner_(std::make_unique<GraphLoss>(build_loss_graph(spec, batch, normalize))) {}

void save_checkpoint(const std::string& path, const ModelSpec& spec, const ParamVector& params,
                     const std::map<std::string, double>& metadata) {
    nlohmann::ordered_json j;
    j["spec"] = {{"kind", to_string(spec.kind)}, {"widths", spec.widths}};
    j["weights"] = params.values;
    j["metadata"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metadata) j["metadata"][k] = v;
    std::ofstream out(path);
    if (!out) throw Error("cannot open checkpoint file for writing: " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed checkpoint " + path + ": " + e.what());
    }
    Checkpoint ck;
    try {
        ck.spec.kind = model_kind_from_string(j.at("spec").at("kind").get<std::string>());
        ck.spec.widths = j.at("spec").at("widths").get<std::vector<int>>();
        ck.spec.validate();
        ck.params = make_params(ck.spec);
        auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != ck.params.values.size())
            throw ConfigError("checkpoint weight count does not match spec");
        ck.params.values = std::move(w);
        if (j.contains("metadata"))
            for (const auto& [k, v] : j.at("metadata").items())
                ck.metadata[k] = v.get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed checkpoint " + path + ": " + e.what());
    }
    return ck;
}

}  // namespace sharplab
