#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "sharplab/models.hpp"

using namespace sharplab;

namespace {

Batch random_classification_batch(const ModelSpec& spec, int n, Rng& rng) {
    Batch b;
    b.X = Array({n, spec.input_dim()});
    for (double& x : b.X.data) x = rng.normal();
    b.labels.resize(n);
    for (int i = 0; i < n; ++i) b.labels[i] = static_cast<int>(rng.index(spec.output_dim()));
    return b;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("predict: linear logits are x W + b") {
    ModelSpec spec{ModelKind::linear, {3, 2}};
    ParamVector p = make_params(spec);
    // W row 0 is (1, 4); zero bias. x = e_1 picks that row as the logits.
    std::vector<double> w{1, 4, 2, 5, 3, 6};
    std::copy(w.begin(), w.end(), p.values.begin());
    Array x({1, 3}, {1.0, 0.0, 0.0});
    Array out = predict_logits(spec, p, x);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 4.0);
}

TEST_CASE("predict: diaglin is <x, u*v>") {
    ModelSpec spec{ModelKind::diaglin, {2}};
    ParamVector p = make_params(spec);
    p.values = {1.0, 2.0, 3.0, -1.0};  // u = (1,2), v = (3,-1) => beta = (3,-2)
    Array x({1, 2}, {1.0, 1.0});
    Array out = predict_logits(spec, p, x);
    CHECK(out.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("predict: mlp with all-zero final layer gives zero logits") {
    ModelSpec spec{ModelKind::mlp, {3, 4, 2}};
    Rng rng(1);
    ParamVector p = init_params(spec, rng);
    for (double& x : p.segment(2)) x = 0.0;
    for (double& x : p.segment(3)) x = 0.0;
    Array x({5, 3});
    for (double& v : x.data) v = rng.normal();
    Array out = predict_logits(spec, p, x);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("normalize_logits: Eq.-5 fixed point and scale invariance") {
    auto r = normalize_logits(std::vector<double>{1.0, -1.0});
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(-1.0).epsilon(1e-12));
    for (double alpha : {0.5, 3.0, 1e6}) {
        auto s = normalize_logits(std::vector<double>{alpha, -alpha});
        CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s[1] == doctest::Approx(-1.0).epsilon(1e-12));
    }
}

TEST_CASE("normalize_logits: zero variance raises DegenerateLogits") {
    CHECK_THROWS_AS(normalize_logits(std::vector<double>{2.0, 2.0, 2.0}), DegenerateLogits);
}

TEST_CASE("normalize_logits is idempotent") {
    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> f(5);
        for (double& x : f) x = rng.normal();
        auto once = normalize_logits(f);
        auto twice = normalize_logits(once);
        for (std::size_t i = 0; i < f.size(); ++i)
            CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-12));
    }
}

TEST_CASE("loss: uniform logits give ln 2") {
    ModelSpec spec{ModelKind::linear, {3, 2}};
    ParamVector p = make_params(spec);  // zero weights: logits (0, 0) on every row
    Rng rng(2);
    Batch b = random_classification_batch(spec, 6, rng);
    CHECK(loss(spec, p, b) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss: cross-entropy saturates to zero as correct logits grow") {
    ModelSpec spec{ModelKind::linear, {2, 2}};
    Batch b;
    b.X = Array({2, 2}, {1, 0, 0, 1});
    b.labels = {0, 1};
    double prev = std::log(2.0);
    for (double scale : {1.0, 2.0, 4.0, 8.0, 32.0}) {
        ParamVector p = make_params(spec);
        p.values[0] = scale;  // W = scale * I
        p.values[3] = scale;
        const double l = loss(spec, p, b, false);
        CHECK(l < prev);
        prev = l;
    }
    CHECK(prev < 1e-13);
}

TEST_CASE("loss: normalized loss is invariant under positive output scalings") {
    ModelSpec spec{ModelKind::linear, {2, 2}};
    Batch b;
    b.X = Array({4, 2}, {1, 0, 0, 1, 1, 1, -1, 2});
    b.labels = {0, 1, 0, 1};
    ParamVector p = make_params(spec);
    p.values = {1.0, -0.5, 0.2, 0.9, 0.1, -0.3};
    const double base = loss(spec, p, b, true);
    for (double scale : {0.01, 0.5, 7.0, 1e4}) {
        ParamVector q = p;
        for (double& x : q.values) x *= scale;
        const double l = loss(spec, q, b, true);
        CHECK(oracles::rel_diff(l, base) <= 1e-9);
    }
}

TEST_CASE("loss: degenerate logits propagate with the normalize flag") {
    ModelSpec spec{ModelKind::linear, {2, 2}};
    ParamVector p = make_params(spec);  // all-zero weights -> identical logits
    Batch b;
    b.X = Array({1, 2}, {1.0, 2.0});
    b.labels = {0};
    CHECK_THROWS_AS(loss(spec, p, b, true), DegenerateLogits);
}

TEST_CASE("reparametrize_scale: alpha = 1 is the identity") {
    ModelSpec spec{ModelKind::mlp, {3, 4, 2}};
    Rng rng(5);
    ParamVector p = init_params(spec, rng);
    ParamVector q = reparametrize_scale(spec, p, 0, 1.0);
    CHECK(q.values == p.values);
}

TEST_CASE("reparametrize_scale: preserves ReLU MLP logits on random inputs") {
    ModelSpec spec{ModelKind::mlp, {4, 8, 6, 3}};
    Rng rng(6);
    ParamVector p = init_params(spec, rng);
    Array x({100, 4});
    for (double& v : x.data) v = rng.normal();
    Array base = predict_logits(spec, p, x);
    for (int layer : {0, 1}) {
        for (double alpha : {0.1, 2.0, 10.0}) {
            ParamVector q = reparametrize_scale(spec, p, layer, alpha);
            Array out = predict_logits(spec, q, x);
            for (std::size_t i = 0; i < out.data.size(); ++i)
                CHECK(oracles::rel_diff(out.data[i], base.data[i]) <= 1e-9);
        }
    }
}

TEST_CASE("reparametrize_scale: diaglin (alpha u, v/alpha) preserves predictions") {
    ModelSpec spec{ModelKind::diaglin, {5}};
    Rng rng(7);
    ParamVector p = init_params(spec, rng);
    Array x({20, 5});
    for (double& v : x.data) v = rng.normal();
    Array base = predict_logits(spec, p, x);
    ParamVector q = reparametrize_scale(spec, p, 0, 3.0);
    Array out = predict_logits(spec, q, x);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(base.data[i]).epsilon(1e-12));
}

TEST_CASE("reparametrize_scale: errors on bad layer or alpha") {
    ModelSpec mlp{ModelKind::mlp, {3, 4, 2}};
    Rng rng(8);
    ParamVector p = init_params(mlp, rng);
    CHECK_THROWS_AS(reparametrize_scale(mlp, p, 1, 2.0), ConfigError);  // no layer 2
    CHECK_THROWS_AS(reparametrize_scale(mlp, p, -1, 2.0), ConfigError);
    CHECK_THROWS_AS(reparametrize_scale(mlp, p, 0, 0.0), ConfigError);
    CHECK_THROWS_AS(reparametrize_scale(mlp, p, 0, -2.0), ConfigError);
    ModelSpec lin{ModelKind::linear, {3, 2}};
    ParamVector pl = init_params(lin, rng);
    CHECK_THROWS_AS(reparametrize_scale(lin, pl, 0, 2.0), ConfigError);  // single layer
}

TEST_CASE("ModelLoss gradient matches finite differences") {
    Rng rng(9);
    SUBCASE("mlp cross-entropy") {
        ModelSpec spec{ModelKind::mlp, {3, 5, 3}};
        Batch b = random_classification_batch(spec, 8, rng);
        ParamVector p = init_params(spec, rng);
        ModelLoss loss(spec, b, false);
        std::vector<double> g(p.dim());
        loss.value_grad(p.values, g);
        CHECK(oracles::rel_error(g, oracles::fd_gradient(loss, p.values)) <= 1e-5);
    }
    SUBCASE("mlp normalized cross-entropy") {
        ModelSpec spec{ModelKind::mlp, {3, 5, 3}};
        Batch b = random_classification_batch(spec, 8, rng);
        ParamVector p = init_params(spec, rng);
        // nonzero biases keep rows with dead ReLUs away from degenerate logits
        for (double& x : p.values) x += 0.05 + 0.01 * rng.normal();
        ModelLoss loss(spec, b, true);
        std::vector<double> g(p.dim());
        loss.value_grad(p.values, g);
        CHECK(oracles::rel_error(g, oracles::fd_gradient(loss, p.values)) <= 1e-5);
    }
    SUBCASE("diaglin regression") {
        ModelSpec spec{ModelKind::diaglin, {6}};
        Batch b;
        b.X = Array({4, 6});
        for (double& x : b.X.data) x = rng.normal();
        b.targets = {0.5, -1.0, 0.2, 2.0};
        ParamVector p = init_params(spec, rng, 0.7);
        ModelLoss loss(spec, b, false);
        std::vector<double> g(p.dim());
        loss.value_grad(p.values, g);
        CHECK(oracles::rel_error(g, oracles::fd_gradient(loss, p.values)) <= 1e-5);
    }
}

TEST_CASE("ModelLoss value equals the hand-rolled forward path") {
    // Dual-route check: graph evaluation vs predict_logits + per-row math.
    Rng rng(10);
    ModelSpec spec{ModelKind::mlp, {4, 6, 3}};
    Batch b = random_classification_batch(spec, 10, rng);
    ParamVector p = init_params(spec, rng);
    for (bool normalize : {false, true}) {
        ModelLoss ml(spec, b, normalize);
        Array logits = predict_logits(spec, p, b.X);
        double acc = 0.0;
        for (int i = 0; i < b.size(); ++i) {
            std::vector<double> row(logits.data.begin() + i * 3, logits.data.begin() + (i + 1) * 3);
            if (normalize) row = normalize_logits(row);
            double mx = std::max({row[0], row[1], row[2]});
            double lse = 0.0;
            for (double v : row) lse += std::exp(v - mx);
            acc += std::log(lse) + mx - row[b.labels[i]];
        }
        acc /= b.size();
        CHECK(ml.value(p.values) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint: round-trips and serializes deterministically") {
    ModelSpec spec{ModelKind::mlp, {3, 4, 2}};
    Rng rng(11);
    ParamVector p = init_params(spec, rng);
    std::map<std::string, double> meta{{"lr", 0.25}, {"seed", 7.0}};
    const std::string path1 = "ck_test_1.json";
    const std::string path2 = "ck_test_2.json";
    save_checkpoint(path1, spec, p, meta);
    save_checkpoint(path2, spec, p, meta);
    CHECK(slurp(path1) == slurp(path2));

    Checkpoint ck = load_checkpoint(path1);
    CHECK(ck.spec == spec);
    CHECK(ck.params.values == p.values);
    CHECK(ck.metadata == meta);
    std::remove(path1.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint: malformed files raise ConfigError") {
    const std::string path = "ck_bad.json";
    {
        std::ofstream out(path);
        out << "{\"spec\": {\"kind\": \"mlp\"}}";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("spec validation rejects malformed models") {
    auto check_invalid = [](ModelKind kind, std::vector<int> widths) {
        ModelSpec spec{kind, std::move(widths)};
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    };
    check_invalid(ModelKind::linear, {3});
    check_invalid(ModelKind::mlp, {3, 2});
    check_invalid(ModelKind::diaglin, {3, 2});
    check_invalid(ModelKind::linear, {0, 2});
    check_invalid(ModelKind::linear, {3, 1});
}
