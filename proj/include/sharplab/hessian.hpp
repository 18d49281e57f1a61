#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/rng.hpp"

namespace sharplab {

class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual int dim() const = 0;
    virtual void apply(std::span<const double> x, std::span<double> out) const = 0;

    std::vector<double> apply_vec(std::span<const double> x) const {
        std::vector<double> out(x.size());
        apply(x, out);
        return out;
    }
};

// HVP of the rescaled Hessian H * cc^T: applying to v returns c * H(c * v).
class RescaledOperator final : public LinearOperator {
public:
    RescaledOperator(const Objective& obj, std::span<const double> w, std::span<const double> c,
                     HvpOptions opt = {});
    int dim() const override { return static_cast<int>(w_.size()); }
    void apply(std::span<const double> x, std::span<double> out) const override;

private:
    const Objective& obj_;
    std::vector<double> w_, c_;
    HvpOptions opt_;
};

// Explicit symmetric matrix as an operator (dense cross-check path).
class DenseOperator final : public LinearOperator {
public:
    explicit DenseOperator(Array matrix);
    int dim() const override { return n_; }
    void apply(std::span<const double> x, std::span<double> out) const override;
    const Array& matrix() const { return m_; }

private:
    Array m_;
    int n_;
};

struct DenseHessian {
    Array matrix;       // symmetrized (H + H^T) / 2
    double asymmetry;   // max |H - H^T| before symmetrization
};

// Hessian via HVPs against basis vectors. Guarded at 2000 parameters.
DenseHessian dense_hessian(const Objective& obj, std::span<const double> w, HvpOptions opt = {});

// H * cc^T for a dense matrix.
Array rescale_dense(const Array& h, std::span<const double> c);

double trace(const Array& h);
// tr(H * cc^T) = sum_i c_i^2 H_ii
double rescaled_trace(const Array& h, std::span<const double> c);

struct PowerIterResult {
    double value = 0.0;       // algebraic maximum eigenvalue estimate
    int iterations = 0;
    bool converged = false;
};

// Shifted power iteration: estimate the spectral radius sigma, then iterate on
// (Op + sigma I) so the dominant eigenvalue is the algebraic maximum.
PowerIterResult lambda_max(const LinearOperator& op, double tol = 1e-8, int max_iters = 1000,
                           std::uint64_t seed = 0x6c6d6178);

struct TraceEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
    int n_probes = 0;
};

// Mean of v^T Op v over Rademacher probes, with standard error.
TraceEstimate hutchinson_trace(const LinearOperator& op, int n_probes, Rng& rng);

}  // namespace sharplab
