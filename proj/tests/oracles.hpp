#pragma once

// Test-only oracles: independent reference implementations (finite
// differences, brute-force enumeration, closed forms) that the library code
// under test is checked against. Nothing here may call back into the
// implementation path it verifies.

#include <cmath>
#include <span>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/rng.hpp"

namespace oracles {

using sharplab::Objective;

// Central finite-difference gradient, coordinate by coordinate.
inline std::vector<double> fd_gradient(const Objective& f, std::span<const double> w,
                                       double h = 1e-5) {
    std::vector<double> g(w.size());
    std::vector<double> x(w.begin(), w.end());
    for (std::size_t i = 0; i < w.size(); ++i) {
        x[i] = w[i] + h;
        const double fp = f.value(x);
        x[i] = w[i] - h;
        const double fm = f.value(x);
        x[i] = w[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    if (scale == 0.0) return std::sqrt(diff);
    return std::sqrt(diff) / (scale * std::sqrt(static_cast<double>(a.size())));
}

inline double rel_diff(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

// O(M^2) Kendall tau-a, literally the printed pairwise-sign formula.
inline double brute_force_kendall(std::span<const double> t, std::span<const double> s) {
    const std::size_t m = t.size();
    long long acc = 0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const double dt = t[i] - t[j], ds = s[i] - s[j];
            const int st = dt > 0 ? 1 : (dt < 0 ? -1 : 0);
            const int ss = ds > 0 ? 1 : (ds < 0 ? -1 : 0);
            acc += st * ss;
        }
    return static_cast<double>(acc) / (0.5 * static_cast<double>(m) * static_cast<double>(m - 1));
}

// Hand-coded quadratic 0.5 w^T A w + b^T w (A dense symmetric): an exact
// analytic objective for checking graph-based paths and the APGD fixtures.
class QuadraticLoss final : public Objective {
public:
    QuadraticLoss(std::vector<std::vector<double>> a, std::vector<double> b)
        : a_(std::move(a)), b_(std::move(b)), n_(static_cast<int>(b_.size())) {}

    static QuadraticLoss diagonal(std::vector<double> diag) {
        const int n = static_cast<int>(diag.size());
        std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i) a[i][i] = diag[i];
        return QuadraticLoss(std::move(a), std::vector<double>(n, 0.0));
    }

    int dim() const override { return n_; }

    double value(std::span<const double> w) const override {
        double acc = 0.0;
        for (int i = 0; i < n_; ++i) {
            double row = 0.0;
            for (int j = 0; j < n_; ++j) row += a_[i][j] * w[j];
            acc += 0.5 * w[i] * row + b_[i] * w[i];
        }
        return acc;
    }

    double value_grad(std::span<const double> w, std::span<double> grad) const override {
        for (int i = 0; i < n_; ++i) {
            double row = 0.0;
            for (int j = 0; j < n_; ++j) row += a_[i][j] * w[j];
            grad[i] = row + b_[i];
        }
        return value(w);
    }

    void hvp(std::span<const double>, std::span<const double> v, std::span<double> out,
             const sharplab::HvpOptions& = {}) const override {
        for (int i = 0; i < n_; ++i) {
            double row = 0.0;
            for (int j = 0; j < n_; ++j) row += a_[i][j] * v[j];
            out[i] = row;
        }
    }

private:
    std::vector<std::vector<double>> a_;
    std::vector<double> b_;
    int n_;
};

// Random small ReLU MLP regression graph: inputs (W1, b1, W2, b2) against a
// fixed random batch; realizable targets make the global minimum zero-loss.
inline sharplab::GraphLoss mlp_regression_loss(int n, int d, int hidden, sharplab::Rng& rng) {
    using namespace sharplab;
    GraphBuilder gb;
    NodeId w1 = gb.input({d, hidden});
    NodeId b1 = gb.input({hidden});
    NodeId w2 = gb.input({hidden, 1});
    NodeId b2 = gb.input({1});
    Array x({n, d});
    for (double& v : x.data) v = rng.normal();
    Array t({n, 1});
    for (double& v : t.data) v = rng.normal();
    NodeId xs = gb.constant(x);
    NodeId h = gb.relu(gb.add(gb.matmul(xs, w1), b1));
    NodeId pred = gb.add(gb.matmul(h, w2), b2);
    NodeId out = gb.half_squared_error(pred, gb.constant(t));
    return GraphLoss(std::move(gb).build(out));
}

}  // namespace oracles
