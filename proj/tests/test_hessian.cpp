#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sharplab/hessian.hpp"
#include "sharplab/models.hpp"

using namespace sharplab;

namespace {

// diaglin at a whitened global minimum: orthonormal square X, y = X beta.
Batch whitened_min_batch(const std::vector<double>& u, const std::vector<double>& v) {
    const int d = static_cast<int>(u.size());
    Batch b;
    b.X = Array({d, d});
    for (int i = 0; i < d; ++i) b.X.at(i, i) = 1.0;  // identity is orthonormal
    b.targets.resize(d);
    for (int i = 0; i < d; ++i) b.targets[i] = u[i] * v[i];
    return b;
}

}  // namespace

TEST_CASE("dense_hessian: quadratic recovers A exactly") {
    oracles::QuadraticLoss quad({{2.0, 0.5, 0.0}, {0.5, 1.0, -0.3}, {0.0, -0.3, 4.0}},
                                {0.0, 0.0, 0.0});
    std::vector<double> w{0.3, -0.2, 1.0};
    DenseHessian h = dense_hessian(quad, w);
    CHECK(h.matrix.at(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(h.matrix.at(0, 1) == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(h.matrix.at(1, 2) == doctest::Approx(-0.3).epsilon(1e-8));
    CHECK(h.matrix.at(2, 2) == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(h.asymmetry <= 1e-10);
}

TEST_CASE("dense_hessian: diaglin at whitened minimum matches the block closed form") {
    std::vector<double> u{1.0, 2.0}, v{3.0, -1.0};
    ModelSpec spec{ModelKind::diaglin, {2}};
    ParamVector p = make_params(spec);
    p.values = {1.0, 2.0, 3.0, -1.0};
    ModelLoss loss(spec, whitened_min_batch(u, v), false);
    DenseHessian h = dense_hessian(loss, p.values);
    const int d = 2;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const double uu = i == j ? v[i] * v[i] : 0.0;  // d2/du2 block: diag(v*v)
            const double vv = i == j ? u[i] * u[i] : 0.0;
            const double uv = i == j ? u[i] * v[i] : 0.0;
            CHECK(h.matrix.at(i, j) == doctest::Approx(uu).epsilon(1e-6));
            CHECK(h.matrix.at(d + i, d + j) == doctest::Approx(vv).epsilon(1e-6));
            CHECK(h.matrix.at(i, d + j) == doctest::Approx(uv).epsilon(1e-6));
        }
}

TEST_CASE("dense_hessian: asymmetry before symmetrization is tiny for a smooth MLP") {
    Rng rng(13);
    GraphLoss loss = oracles::mlp_regression_loss(6, 3, 4, rng);
    std::vector<double> w(loss.dim());
    for (double& x : w) x = 0.4 * rng.normal() + 0.1;
    DenseHessian h = dense_hessian(loss, w);
    CHECK(h.asymmetry <= 1e-5);
}

TEST_CASE("dense_hessian: rejects more than 2000 parameters") {
    // A 2001-dim quadratic exceeds the guard
    std::vector<double> diag(2001, 1.0);
    oracles::QuadraticLoss quad = oracles::QuadraticLoss::diagonal(diag);
    std::vector<double> w(2001, 0.0);
    CHECK_THROWS_AS(dense_hessian(quad, w), Error);
}

TEST_CASE("rescaled operator: applies c * H (c * v) and is symmetric") {
    Rng rng(17);
    GraphLoss loss = oracles::mlp_regression_loss(5, 3, 3, rng);
    std::vector<double> w(loss.dim()), c(loss.dim());
    for (double& x : w) x = rng.normal();
    for (double& x : c) x = std::abs(rng.normal());
    RescaledOperator op(loss, w, c);
    DenseHessian h = dense_hessian(loss, w);
    Array rescaled = rescale_dense(h.matrix, c);
    DenseOperator dop(rescaled);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> x(loss.dim());
        for (double& e : x) e = rng.normal();
        std::vector<double> a = op.apply_vec(x);
        std::vector<double> b = dop.apply_vec(x);
        CHECK(oracles::rel_error(a, b) <= 1e-8);
    }
    // symmetry: u^T op(v) == v^T op(u)
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> x(loss.dim()), y(loss.dim());
        for (double& e : x) e = rng.normal();
        for (double& e : y) e = rng.normal();
        const double xy = dot(x, op.apply_vec(y));
        const double yx = dot(y, op.apply_vec(x));
        CHECK(std::abs(xy - yx) <= 1e-8 * std::max(1.0, std::abs(xy)));
    }
}

TEST_CASE("rescaled trace identity: tr(H * cc^T) = sum c_i^2 H_ii") {
    Rng rng(19);
    GraphLoss loss = oracles::mlp_regression_loss(4, 2, 3, rng);
    std::vector<double> w(loss.dim()), c(loss.dim());
    for (double& x : w) x = rng.normal();
    for (double& x : c) x = std::abs(rng.normal());
    DenseHessian h = dense_hessian(loss, w);
    const double direct = rescaled_trace(h.matrix, c);
    const double via_matrix = trace(rescale_dense(h.matrix, c));
    CHECK(direct == doctest::Approx(via_matrix).epsilon(1e-12));
}

TEST_CASE("lambda_max: diagonal fixtures") {
    {
        DenseOperator op(Array({3, 3}, {1, 0, 0, 0, 2, 0, 0, 0, 3}));
        PowerIterResult r = lambda_max(op);
        CHECK(r.converged);
        CHECK(r.value == doctest::Approx(3.0).epsilon(1e-7));
    }
    {
        // algebraic max is 2, not the dominant-magnitude -5
        DenseOperator op(Array({2, 2}, {-5, 0, 0, 2}));
        PowerIterResult r = lambda_max(op);
        CHECK(r.converged);
        CHECK(r.value == doctest::Approx(2.0).epsilon(1e-7));
    }
    {
        // negative definite: algebraic max is -1
        DenseOperator op(Array({2, 2}, {-3, 0, 0, -1}));
        PowerIterResult r = lambda_max(op);
        CHECK(r.converged);
        CHECK(r.value == doctest::Approx(-1.0).epsilon(1e-6));
    }
}

TEST_CASE("lambda_max: diaglin block eigenvalues u_i^2 + v_i^2") {
    std::vector<double> u{1.0, 2.0}, v{3.0, -1.0};
    ModelSpec spec{ModelKind::diaglin, {2}};
    ParamVector p = make_params(spec);
    p.values = {1.0, 2.0, 3.0, -1.0};
    ModelLoss loss(spec, whitened_min_batch(u, v), false);
    std::vector<double> ones(4, 1.0);
    RescaledOperator op(loss, p.values, ones);
    PowerIterResult r = lambda_max(op);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(10.0).epsilon(1e-6));  // max(1+9, 4+1)
}

TEST_CASE("lambda_max dominates the Rayleigh quotient of any probe") {
    Rng rng(23);
    GraphLoss loss = oracles::mlp_regression_loss(5, 3, 3, rng);
    std::vector<double> w(loss.dim()), c(loss.dim(), 1.0);
    for (double& x : w) x = rng.normal();
    RescaledOperator op(loss, w, c);
    const double lam = lambda_max(op).value;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x(loss.dim());
        for (double& e : x) e = rng.normal();
        const double q = dot(x, op.apply_vec(x)) / dot(x, x);
        CHECK(q <= lam + 1e-6 * std::max(1.0, std::abs(lam)));
    }
}

TEST_CASE("hutchinson: identity operator is exact with Rademacher probes") {
    Array eye({100, 100});
    for (int i = 0; i < 100; ++i) eye.at(i, i) = 1.0;
    DenseOperator op(eye);
    Rng rng(29);
    TraceEstimate est = hutchinson_trace(op, 16, rng);
    CHECK(est.estimate == doctest::Approx(100.0).epsilon(1e-14));
    CHECK(est.stderr_ == doctest::Approx(0.0));
}

TEST_CASE("hutchinson: diag(1..10) estimate within 3 standard errors of 55") {
    Array m({10, 10});
    for (int i = 0; i < 10; ++i) m.at(i, i) = i + 1.0;
    DenseOperator op(m);
    Rng rng(31);
    TraceEstimate est = hutchinson_trace(op, 500, rng);
    CHECK(std::abs(est.estimate - 55.0) <= 3.0 * est.stderr_);
}

TEST_CASE("hutchinson agrees with the dense trace on a 50-param MLP") {
    Rng rng(37);
    GraphLoss loss = oracles::mlp_regression_loss(8, 4, 6, rng);  // 4*6+6+6+1 = 37 params
    std::vector<double> w(loss.dim()), c(loss.dim());
    for (double& x : w) x = rng.normal();
    for (double& x : c) x = std::abs(rng.normal()) + 0.1;
    DenseHessian h = dense_hessian(loss, w);
    const double exact = rescaled_trace(h.matrix, c);
    RescaledOperator op(loss, w, c);
    Rng prng(38);
    TraceEstimate est = hutchinson_trace(op, 600, prng);
    CHECK(std::abs(est.estimate - exact) <= 3.0 * est.stderr_ + 1e-9);
}

TEST_CASE("hutchinson: fewer than two probes is an error") {
    DenseOperator op(Array({2, 2}, {1, 0, 0, 1}));
    Rng rng(1);
    CHECK_THROWS_AS(hutchinson_trace(op, 1, rng), ConfigError);
}
