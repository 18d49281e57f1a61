#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/hessian.hpp"
#include "sharplab/models.hpp"
#include "sharplab/perturb.hpp"

namespace sharplab {

enum class SharpnessMode { avg, worst };

std::string to_string(SharpnessMode m);
SharpnessMode sharpness_mode_from_string(const std::string& s);

struct SharpnessConfig {
    SharpnessMode mode = SharpnessMode::avg;
    NormP p = NormP::linf;
    double rho = 0.0;
    ScalingMode scaling = ScalingMode::adaptive;
    std::vector<double> custom_c;  // used when scaling == custom
    double scaling_eps = 0.0;
    int m = 128;           // examples per evaluation batch
    int n_batches = 8;
    int n_samples = 100;   // avg mode: noise draws per batch
    int n_iters = 20;      // worst mode: APGD iterations
    NoiseFamily noise = NoiseFamily::gaussian;
    bool normalize = false;
    std::uint64_t seed = 0;

    void validate() const;
    // Canonical measure name, e.g. "worst_linf_adaptive_norm" or
    // "avg_l2_standard_raw_gaussian" (average-case names its noise family).
    std::string measure_name() const;
};

struct SharpnessReport {
    std::vector<double> per_batch;
    double mean = 0.0;
    double stddev = 0.0;
    SharpnessConfig config;
    double wall_time_s = 0.0;
};

std::string report_to_json(const SharpnessReport& r);
// model_id,measure_name,rho,value
std::string report_csv_row(const SharpnessReport& r, const std::string& model_id);

// ---------------------------------------------------------------------------
// Auto-PGD (worst-case maximizer)
// ---------------------------------------------------------------------------

// Objective of the maximization over the perturbation delta.
class DeltaObjective {
public:
    virtual ~DeltaObjective() = default;
    virtual int dim() const = 0;
    virtual double value(std::span<const double> delta) const = 0;
    virtual double value_grad(std::span<const double> delta, std::span<double> grad) const = 0;
};

// delta -> L(w + delta) - L(w)
class PerturbedLoss final : public DeltaObjective {
public:
    PerturbedLoss(const Objective& loss, std::span<const double> w);
    int dim() const override { return static_cast<int>(w_.size()); }
    double value(std::span<const double> delta) const override;
    double value_grad(std::span<const double> delta, std::span<double> grad) const override;
    double base_loss() const { return base_; }

private:
    const Objective& loss_;
    std::vector<double> w_;
    double base_;
};

struct ApgdResult {
    std::vector<double> delta_max;
    double f_max = 0.0;
    std::vector<double> f_max_trace;  // best-so-far after each evaluated iterate
    int n_evals = 0;
};

// Step-size-adaptive projected gradient ascent with momentum, best-so-far
// tracking and halving-on-stagnation checkpoints. Runs in the normalized
// coordinates gamma = delta * c^-1, where the feasible set is the standard
// radius-rho lp ball: gradient steps are sign(g) for p=inf and g/||g||_2 for
// p=2, mapped back through c. Initialization is uniform in the ball for
// p=inf and projected Gaussian for p=2.
ApgdResult apgd_maximize(const DeltaObjective& objective, const BallSpec& ball, int n_iters,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Estimators over a generic differentiable loss (one evaluation batch)
// ---------------------------------------------------------------------------

// Mean of L(w + delta) - L(w) over n_samples noise draws; draw s uses
// rng_base.substream({s}).
double avg_sharpness_one(const Objective& loss, std::span<const double> w, const BallSpec& ball,
                         NoiseFamily family, int n_samples, const Rng& rng_base);

// max(APGD value, 0); the zero perturbation is always a feasible candidate.
double worst_sharpness_one(const Objective& loss, std::span<const double> w,
                           const BallSpec& ball, int n_iters, const Rng& rng_base);

// ---------------------------------------------------------------------------
// Model-level estimators (m-sharpness protocol)
// ---------------------------------------------------------------------------

// data must provide n_batches disjoint batches of size m (taken as
// consecutive slices). Batch b uses noise substreams (seed, stream_id, b, s).
SharpnessReport avg_sharpness(const ModelSpec& spec, const ParamVector& params, const Batch& data,
                              const SharpnessConfig& cfg, std::uint64_t stream_id = 0,
                              int jobs = 1);
SharpnessReport worst_sharpness(const ModelSpec& spec, const ParamVector& params,
                                const Batch& data, const SharpnessConfig& cfg,
                                std::uint64_t stream_id = 0, int jobs = 1);
SharpnessReport measure_sharpness(const ModelSpec& spec, const ParamVector& params,
                                  const Batch& data, const SharpnessConfig& cfg,
                                  std::uint64_t stream_id = 0, int jobs = 1);

// ---------------------------------------------------------------------------
// Local (rho -> 0) sharpness via Hessian quantities
// ---------------------------------------------------------------------------

struct LocalTraceOptions {
    HvpOptions hvp;
    int hutchinson_probes = 256;   // used above the dense threshold
    std::uint64_t seed = 1;
};

// 0.5 * tr(H * cc^T): exact dense diagonal for dim <= 2000, Hutchinson above.
double local_avg_sharpness(const Objective& loss, std::span<const double> w,
                           std::span<const double> c, const LocalTraceOptions& opt = {});
double local_avg_sharpness(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                           std::span<const double> c, const LocalTraceOptions& opt = {});

enum class LocalRegime { gradient_dominant, curvature, negative_definite };
std::string to_string(LocalRegime r);

struct LocalWorst {
    LocalRegime regime;
    double value;  // rho coefficient ||grad*c||_q, or 0.5*lambda_max, or 0
};

// Classifies the small-rho worst-case regime. The curvature branch is only
// evaluated for p=2; requesting p=inf at a critical point raises
// UnsupportedRegime.
LocalWorst local_worst_sharpness(const Objective& loss, std::span<const double> w,
                                 std::span<const double> c, NormP p,
                                 const LocalTraceOptions& opt = {});
LocalWorst local_worst_sharpness(const ModelSpec& spec, const ParamVector& params,
                                 const Batch& batch, std::span<const double> c, NormP p,
                                 const LocalTraceOptions& opt = {});

}  // namespace sharplab
