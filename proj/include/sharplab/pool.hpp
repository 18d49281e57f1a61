#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/sharpness.hpp"

namespace sharplab {

// ---------------------------------------------------------------------------
// Kendall rank correlation (tau-a: ties contribute zero)
// ---------------------------------------------------------------------------

// tau = 2/(M(M-1)) * sum_{i<j} sign(t_i - t_j) * sign(s_i - s_j),
// computed in O(M log M) via merge-sort inversion counting.
double kendall_tau(std::span<const double> t, std::span<const double> s);

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

struct MixtureConfig {
    int classes = 3;
    int dim = 10;
    int n_train = 2048;
    int n_test = 2000;
    double separation = 3.0;  // class-mean radius
    double spread = 1.0;      // within-class standard deviation
    std::uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    Batch train;
    Batch test;
    int classes = 0;
};

// K Gaussian blobs with means on the radius-`separation` sphere.
Dataset make_gaussian_mixture(const MixtureConfig& cfg);

// Test inputs with additive N(0, sigma^2) corruption; the desk-scale stand-in
// for an OOD split.
Batch corrupt_inputs(const Batch& b, double sigma, Rng& rng);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    ModelSpec spec;
    double lr = 0.1;
    double momentum = 0.9;
    double warmup_frac = 0.4;  // linear warmup fraction of total iterations
    int epochs = 30;
    int batch_size = 32;
    double sam_rho = 0.0;
    std::uint64_t seed = 0;
    double filter_train_err = 0.01;
    double init_gain = 1.0;

    void validate() const;
};

// Piecewise-linear schedule: 0 -> lr over the warmup fraction, then lr -> 0.
double lr_at(const TrainConfig& cfg, int iteration, int total_iterations);

struct SharpnessValue {
    std::string measure;
    double rho = 0.0;
    double value = 0.0;
};

struct PoolRecord {
    std::string model_id;
    std::string checkpoint_path;
    std::map<std::string, double> hyperparameters;
    double train_error = 0.0;
    double test_error = 0.0;
    std::optional<double> ood_error;
    double gen_gap = 0.0;  // test_error - train_error
    bool excluded = false;
    std::string failure;
    std::vector<SharpnessValue> sharpness;

    std::optional<double> find_sharpness(const std::string& measure, double rho) const;
    std::optional<double> target_value(const std::string& target) const;
};

// SGD with momentum, the warmup/decay schedule and the optional SAM step
// (gradient taken at w + sam_rho * g/||g||_2, update applied at w).
// Marks the record excluded when the final train error exceeds the filter.
// ood_test, when given, must be the same corrupted batch for every model in
// the pool.
PoolRecord train_model(const TrainConfig& cfg, const Dataset& data, const Batch* ood_test,
                       const std::string& model_id, const std::string& checkpoint_path);

// Misclassification rate of the argmax prediction.
double error_rate(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// ---------------------------------------------------------------------------
// Pool measurement and correlation
// ---------------------------------------------------------------------------

// Attaches one sharpness value per (record, config) pair. Evaluation batches
// are fixed slices of data.train shared by every model; noise streams are
// keyed by a hash of the model id, so values do not depend on record order.
// Per-record failures are recorded in `failure` and skipped.
void measure_pool(std::vector<PoolRecord>& records, const Dataset& data,
                  const std::vector<SharpnessConfig>& configs, int jobs = 1);

struct ScatterRow {
    std::string model_id;
    double measure = 0.0;
    double target = 0.0;
    std::string subgroup;
};

struct CorrelationReport {
    std::string measure;
    double rho = 0.0;
    std::string target;
    std::optional<double> global_tau;
    std::vector<std::pair<std::string, std::optional<double>>> subgroup_taus;
    std::vector<ScatterRow> scatter;
};

// Global tau plus per-subgroup tau, records grouped by the value of
// `subgroup_key` in their hyperparameter map. Excluded records are dropped.
// Records missing the measure or target are an error listing each of them.
CorrelationReport correlate_pool(const std::vector<PoolRecord>& records,
                                 const std::string& measure, double rho,
                                 const std::string& target,
                                 const std::string& subgroup_key = "");

// Pool manifest: JSON array of records.
std::string pool_manifest_json(const std::vector<PoolRecord>& records);
std::vector<PoolRecord> pool_manifest_from_json(const std::string& text);

}  // namespace sharplab
