#include "sharplab/hessian.hpp"

#include <cmath>

namespace sharplab {

RescaledOperator::RescaledOperator(const Objective& obj, std::span<const double> w,
                                   std::span<const double> c, HvpOptions opt)
    : obj_(obj), w_(w.begin(), w.end()), c_(c.begin(), c.end()), opt_(opt) {
    if (w_.size() != c_.size()) throw ShapeError("RescaledOperator: |c| != |w|");
    if (static_cast<int>(w_.size()) != obj.dim())
        throw ShapeError("RescaledOperator: |w| != objective dim");
}

void RescaledOperator::apply(std::span<const double> x, std::span<double> out) const {
    if (x.size() != w_.size()) throw ShapeError("RescaledOperator: input length mismatch");
    std::vector<double> cx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) cx[i] = c_[i] * x[i];
    obj_.hvp(w_, cx, out, opt_);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] *= c_[i];
}

DenseOperator::DenseOperator(Array matrix) : m_(std::move(matrix)) {
    if (m_.rank() != 2 || m_.rows() != m_.cols())
        throw ShapeError("DenseOperator: matrix must be square");
    n_ = m_.rows();
}

void DenseOperator::apply(std::span<const double> x, std::span<double> out) const {
    if (static_cast<int>(x.size()) != n_) throw ShapeError("DenseOperator: input length mismatch");
    for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        const double* row = m_.data.data() + static_cast<std::size_t>(i) * n_;
        for (int j = 0; j < n_; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
}

DenseHessian dense_hessian(const Objective& obj, std::span<const double> w, HvpOptions opt) {
    const int n = obj.dim();
    if (n > 2000) throw Error("dense_hessian: parameter count exceeds 2000");
    if (static_cast<int>(w.size()) != n) throw ShapeError("dense_hessian: |w| != objective dim");
    Array h({n, n});
    std::vector<double> e(n, 0.0), col(n);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        obj.hvp(w, e, col, opt);
        e[j] = 0.0;
        for (int i = 0; i < n; ++i) h.at(i, j) = col[i];
    }
    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            asym = std::max(asym, std::abs(h.at(i, j) - h.at(j, i)));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0.5 * (h.at(i, j) + h.at(j, i));
            h.at(i, j) = s;
            h.at(j, i) = s;
        }
    return {std::move(h), asym};
}

Array rescale_dense(const Array& h, std::span<const double> c) {
    if (h.rank() != 2 || h.rows() != h.cols() || static_cast<std::size_t>(h.rows()) != c.size())
        throw ShapeError("rescale_dense: shape mismatch");
    Array out = h;
    const int n = h.rows();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) *= c[i] * c[j];
    return out;
}

double trace(const Array& h) {
    double t = 0.0;
    for (int i = 0; i < h.rows(); ++i) t += h.at(i, i);
    return t;
}

double rescaled_trace(const Array& h, std::span<const double> c) {
    double t = 0.0;
    for (int i = 0; i < h.rows(); ++i) t += c[i] * c[i] * h.at(i, i);
    return t;
}

PowerIterResult lambda_max(const LinearOperator& op, double tol, int max_iters,
                           std::uint64_t seed) {
    const int n = op.dim();
    Rng rng(seed);
    std::vector<double> v(n), av(n);
    for (double& x : v) x = rng.normal();
    double nv = norm2(v);
    if (nv == 0.0) v[0] = 1.0, nv = 1.0;
    for (double& x : v) x /= nv;

    // Phase 1: spectral radius estimate from the norm-growth ratio.
    double radius = 0.0;
    for (int it = 0; it < std::max(32, max_iters / 8); ++it) {
        op.apply(v, av);
        double na = norm2(av);
        if (na == 0.0) return {0.0, it + 1, true};  // operator annihilates v
        for (int i = 0; i < n; ++i) v[i] = av[i] / na;
        if (std::abs(na - radius) <= tol * std::max(1.0, na) && it >= 4) {
            radius = na;
            break;
        }
        radius = na;
    }
    const double sigma = 1.01 * radius + tol;

    // Phase 2: power iteration on (Op + sigma I); dominant eigenvalue is
    // lambda_max + sigma since all shifted eigenvalues are nonnegative.
    for (double& x : v) x = rng.normal();
    nv = norm2(v);
    if (nv == 0.0) v[0] = 1.0, nv = 1.0;
    for (double& x : v) x /= nv;
    double rayleigh = 0.0;
    bool have_prev = false;
    for (int it = 0; it < max_iters; ++it) {
        op.apply(v, av);
        double r = dot(v, av);  // unshifted Rayleigh quotient, ||v|| = 1
        if (have_prev && std::abs(r - rayleigh) <= tol) return {r, it + 1, true};
        rayleigh = r;
        have_prev = true;
        double ns = 0.0;
        for (int i = 0; i < n; ++i) {
            av[i] += sigma * v[i];
            ns += av[i] * av[i];
        }
        ns = std::sqrt(ns);
        if (ns == 0.0) return {rayleigh, it + 1, true};
        for (int i = 0; i < n; ++i) v[i] = av[i] / ns;
    }
    return {rayleigh, max_iters, false};
}

TraceEstimate hutchinson_trace(const LinearOperator& op, int n_probes, Rng& rng) {
    if (n_probes < 2) throw ConfigError("hutchinson_trace: n_probes must be >= 2");
    const int n = op.dim();
    std::vector<double> v(n), av(n);
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        for (double& x : v) x = rng.rademacher();
        op.apply(v, av);
        double q = dot(v, av);
        sum += q;
        sumsq += q * q;
    }
    double mean = sum / n_probes;
    double var = std::max(0.0, (sumsq - n_probes * mean * mean) / (n_probes - 1));
    return {mean, std::sqrt(var / n_probes), n_probes};
}

}  // namespace sharplab
