#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sharplab/models.hpp"
#include "sharplab/perturb.hpp"

namespace sharplab {

// Overparametrized sparse regression instance: y = X beta* + noise with a
// sparse ground truth. Whitened tasks have exactly orthonormal train columns
// (X^T X = I), which requires n >= d.
struct SparseTask {
    Array X_train;
    std::vector<double> y_train;
    Array X_test;
    std::vector<double> y_test;
    std::vector<double> beta_star;
    double sparsity = 0.0;
    bool whitened = false;

    int dim() const { return X_train.cols(); }
    int n_train() const { return X_train.rows(); }
    Batch train_batch() const { return Batch{X_train, {}, y_train}; }
};

// Gaussian X with entries N(0, 1/n); nonzero beta* entries are +-U(0.5, 1.5)
// at round((1-sparsity)*d) positions. whiten orthonormalizes the train columns.
SparseTask make_task(int n, int d, double sparsity, double noise_std, bool whiten, Rng& rng,
                     int n_test = 1000);

struct DiagNetParams {
    std::vector<double> u, v;

    int dim() const { return static_cast<int>(u.size()); }
    std::vector<double> beta() const;
    std::vector<double> flat() const;  // [u; v], the diaglin ParamVector layout
    static DiagNetParams from_flat(std::span<const double> w);
};

// 0.5 * ||X(u*v) - y||^2 and its gradient, closed form (training hot path).
double diag_loss(const SparseTask& task, const DiagNetParams& p);
double diag_loss_grad(const SparseTask& task, const DiagNetParams& p,
                      std::vector<double>& grad_u, std::vector<double>& grad_v);
// Per-example mean: ||X_test (u*v) - y_test||^2 / (2 n_test)
double diag_test_loss(const SparseTask& task, const DiagNetParams& p);

struct DiagTrainResult {
    DiagNetParams params;
    double achieved_loss = 0.0;
    int steps = 0;
    bool reached_target = false;
};

// Full-batch gradient descent until loss <= target_loss or max_steps.
// Throws DivergenceError (with the step index) when the loss exceeds 1e12.
DiagTrainResult train_diag(const SparseTask& task, const DiagNetParams& init, double lr,
                           int max_steps, double target_loss);

// The elementwise scaling that turns the adaptive local sharpness of a
// diagonal network into ||beta||_1: sqrt(|u_i|/|v_i|) on the u block and
// sqrt(|v_i|/|u_i|) on the v block. The block pairing is the one that
// satisfies tr(H * cc^T) = 2 ||beta||_1 at a whitened global minimum
// (checked against the dense-Hessian path in the tests). Coordinates with
// u_i * v_i = 0 get c = 0 on both blocks.
ScalingVector custom_scaling(const DiagNetParams& p);

struct ClosedFormQuantities {
    double beta_l1 = 0.0;
    double beta_l2_sq = 0.0;
    double beta_linf = 0.0;
    double trace_h = 0.0;               // sum_i u_i^2 + v_i^2
    double lambda_max_h = 0.0;          // max_i u_i^2 + v_i^2
    double trace_h_rescaled = 0.0;      // tr(H * cc^T) = 2 ||beta||_1
    double lambda_max_h_rescaled = 0.0; // 2 ||beta||_inf
};

// Closed forms valid at a whitened global minimum.
ClosedFormQuantities closed_form_quantities(const DiagNetParams& p);
// Same, but verifies the premise: task whitened and residual norm <= 1e-4.
ClosedFormQuantities closed_form_quantities_at_min(const DiagNetParams& p,
                                                   const SparseTask& task);

struct Fig6Config {
    int n_models = 200;
    int d = 200;
    int n_train = 100;
    int n_test = 1000;
    double sparsity = 0.9;
    double noise_std = 0.0;
    double lr_min = 0.02;   // implementer-swept stable range for the defaults
    double lr_max = 0.25;
    double init_min = 1e-3;
    double init_max = 1.0;
    double target_loss = 1e-5;
    int max_steps = 100000;
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const;
};

struct Fig6Row {
    int model = 0;
    std::uint64_t seed = 0;
    double lr = 0.0;
    double init_scale = 0.0;
    int steps = 0;
    bool converged = false;
    double achieved_loss = 0.0;
    double test_loss = 0.0;
    // The four panel measures; Hessians from the numerical (dense HVP) path.
    double beta_l1 = 0.0;
    double half_trace_rescaled = 0.0;   // 0.5 tr(H * cc^T), custom scaling
    double half_trace = 0.0;            // 0.5 tr(H)
    double half_lambda_max_rescaled = 0.0;
};

struct Fig6Result {
    std::vector<Fig6Row> rows;
    int n_excluded = 0;
    // Kendall tau of each measure against test loss over converged models;
    // empty when fewer than two models converged.
    std::optional<double> tau_beta_l1;
    std::optional<double> tau_half_trace_rescaled;
    std::optional<double> tau_half_trace;
    std::optional<double> tau_half_lambda_max_rescaled;
    std::optional<double> tau_beta_l1_vs_half_trace_rescaled;
};

// Trains n_models networks on one shared task with per-model (lr, init scale)
// sampled log-uniformly, then computes the four measures per model and the
// tau summary. Models that miss target_loss are excluded and counted.
Fig6Result fig6_experiment(const Fig6Config& cfg);

std::string fig6_csv(const Fig6Result& r);
std::string fig6_tau_json(const Fig6Result& r, const Fig6Config& cfg);

}  // namespace sharplab
