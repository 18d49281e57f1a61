#include "sharplab/sharpness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "sharplab/parallel.hpp"

namespace sharplab {

std::string to_string(SharpnessMode m) { return m == SharpnessMode::avg ? "avg" : "worst"; }

SharpnessMode sharpness_mode_from_string(const std::string& s) {
    if (s == "avg") return SharpnessMode::avg;
    if (s == "worst") return SharpnessMode::worst;
    throw ConfigError("unknown sharpness mode: " + s);
}

void SharpnessConfig::validate() const {
    if (rho < 0.0) throw ConfigError("sharpness rho must be nonnegative");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (n_batches < 1) throw ConfigError("n_batches must be >= 1");
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (n_iters < 1) throw ConfigError("n_iters must be >= 1");
    if (scaling_eps < 0.0) throw ConfigError("scaling_eps must be nonnegative");
}

std::string SharpnessConfig::measure_name() const {
    std::string name = to_string(mode) + "_" + to_string(p) + "_" + to_string(scaling) + "_" +
                       (normalize ? "norm" : "raw");
    if (mode == SharpnessMode::avg) name += "_" + to_string(noise);
    return name;
}

std::string report_to_json(const SharpnessReport& r) {
    nlohmann::ordered_json j;
    j["config"] = {{"mode", to_string(r.config.mode)},
                   {"p", to_string(r.config.p)},
                   {"rho", r.config.rho},
                   {"scaling", to_string(r.config.scaling)},
                   {"scaling_eps", r.config.scaling_eps},
                   {"m", r.config.m},
                   {"n_batches", r.config.n_batches},
                   {"n_samples", r.config.n_samples},
                   {"n_iters", r.config.n_iters},
                   {"noise", to_string(r.config.noise)},
                   {"normalize", r.config.normalize},
                   {"seed", r.config.seed},
                   {"measure", r.config.measure_name()}};
    j["per_batch"] = r.per_batch;
    j["mean"] = r.mean;
    j["std"] = r.stddev;
    j["wall_time_s"] = r.wall_time_s;
    return j.dump(2);
}

std::string report_csv_row(const SharpnessReport& r, const std::string& model_id) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", r.config.rho, r.mean);
    return model_id + "," + r.config.measure_name() + buf;
}

// ---------------------------------------------------------------------------
// PerturbedLoss
// ---------------------------------------------------------------------------

PerturbedLoss::PerturbedLoss(const Objective& loss, std::span<const double> w)
    : loss_(loss), w_(w.begin(), w.end()), base_(loss.value(w)) {
    if (static_cast<int>(w_.size()) != loss.dim())
        throw ShapeError("PerturbedLoss: |w| != objective dim");
}

double PerturbedLoss::value(std::span<const double> delta) const {
    if (delta.size() != w_.size()) throw ShapeError("PerturbedLoss: |delta| != |w|");
    std::vector<double> x(w_.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = w_[i] + delta[i];
    return loss_.value(x) - base_;
}

double PerturbedLoss::value_grad(std::span<const double> delta, std::span<double> grad) const {
    if (delta.size() != w_.size()) throw ShapeError("PerturbedLoss: |delta| != |w|");
    std::vector<double> x(w_.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = w_[i] + delta[i];
    return loss_.value_grad(x, grad) - base_;
}

// ---------------------------------------------------------------------------
// Auto-PGD
// ---------------------------------------------------------------------------

namespace {

constexpr double kMomentumAlpha = 0.75;

// Checkpoint iterations ceil(p_j * n_iters) for the schedule
// p_0 = 0, p_1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06).
std::vector<int> checkpoint_schedule(int n_iters) {
    std::vector<int> out;
    double p_prev = 0.0, p_cur = 0.22;
    while (true) {
        int k = static_cast<int>(std::ceil(p_cur * n_iters));
        if (k > n_iters - 1) break;
        if (k >= 1 && (out.empty() || k > out.back())) out.push_back(k);
        double p_next = p_cur + std::max(p_cur - p_prev - 0.03, 0.06);
        p_prev = p_cur;
        p_cur = p_next;
    }
    return out;
}

void project_gamma(std::vector<double>& g, NormP p, double rho,
                   const std::vector<double>& c) {
    if (p == NormP::linf) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (c[i] == 0.0) { g[i] = 0.0; continue; }
            if (g[i] > rho) g[i] = rho;
            else if (g[i] < -rho) g[i] = -rho;
        }
        return;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (c[i] == 0.0) g[i] = 0.0;
        sq += g[i] * g[i];
    }
    double nrm = std::sqrt(sq);
    if (nrm > rho) {
        double f = rho / nrm;
        for (double& x : g) x *= f;
    }
}

// Normalized-coordinate ascent direction: sign(g) for linf, g/||g||_2 for l2.
void step_direction(const std::vector<double>& g, NormP p, std::vector<double>& dir) {
    dir.resize(g.size());
    if (p == NormP::linf) {
        for (std::size_t i = 0; i < g.size(); ++i)
            dir[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        return;
    }
    double nrm = norm2(g);
    if (nrm == 0.0) {
        std::fill(dir.begin(), dir.end(), 0.0);
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) dir[i] = g[i] / nrm;
}

}  // namespace

ApgdResult apgd_maximize(const DeltaObjective& objective, const BallSpec& ball, int n_iters,
                         Rng& rng) {
    ball.validate();
    if (n_iters < 1) throw ConfigError("apgd_maximize: n_iters must be >= 1");
    const int n = objective.dim();
    const auto& c = ball.c.c;
    if (static_cast<int>(c.size()) != n) throw ShapeError("apgd_maximize: |c| != objective dim");
    const double rho = ball.rho;

    ApgdResult res;
    std::vector<double> delta(n);
    auto eval = [&](const std::vector<double>& gamma, std::vector<double>* grad_gamma) {
        for (int i = 0; i < n; ++i) delta[i] = gamma[i] * c[i];
        double v;
        if (grad_gamma) {
            grad_gamma->resize(n);
            v = objective.value_grad(delta, *grad_gamma);
            for (int i = 0; i < n; ++i) (*grad_gamma)[i] *= c[i];
        } else {
            v = objective.value(delta);
        }
        ++res.n_evals;
        if (!std::isfinite(v))
            throw NonFiniteError("apgd_maximize: objective is not finite at iterate " +
                                 std::to_string(res.n_evals));
        return v;
    };

    // Initialization: uniform in the ball for linf, projected Gaussian for l2.
    // One draw per coordinate regardless of c so matched-seed runs stay aligned.
    std::vector<double> cur(n);
    for (int i = 0; i < n; ++i)
        cur[i] = rho * (ball.p == NormP::linf ? rng.uniform(-1.0, 1.0) : rng.normal());
    project_gamma(cur, ball.p, rho, c);

    std::vector<double> grad(n), dir(n);
    double f_cur = eval(cur, &grad);
    double f_max = f_cur;
    std::vector<double> best = cur;
    res.f_max_trace.push_back(f_max);

    if (rho == 0.0) {
        res.delta_max.assign(n, 0.0);
        res.f_max = f_max;
        return res;
    }

    double eta = 2.0 * rho;
    std::vector<double> prev = cur;

    // First plain gradient step (the momentum line needs two iterates).
    step_direction(grad, ball.p, dir);
    std::vector<double> next(n);
    for (int i = 0; i < n; ++i) next[i] = cur[i] + eta * dir[i];
    project_gamma(next, ball.p, rho, c);
    prev = cur;
    cur = next;
    f_cur = eval(cur, &grad);
    if (f_cur > f_max) { f_max = f_cur; best = cur; }
    res.f_max_trace.push_back(f_max);

    const std::vector<int> checkpoints = checkpoint_schedule(n_iters);
    std::size_t ckpt_idx = 0;
    int last_ckpt = 0;
    int improved = 0;
    double eta_at_ckpt = eta;
    double fmax_at_ckpt = f_max;

    std::vector<double> z(n);
    for (int k = 1; k <= n_iters - 1; ++k) {
        step_direction(grad, ball.p, dir);
        for (int i = 0; i < n; ++i) z[i] = cur[i] + eta * dir[i];
        project_gamma(z, ball.p, rho, c);
        for (int i = 0; i < n; ++i)
            next[i] = cur[i] + kMomentumAlpha * (z[i] - cur[i]) +
                      (1.0 - kMomentumAlpha) * (cur[i] - prev[i]);
        project_gamma(next, ball.p, rho, c);
        double f_next = eval(next, &grad);
        if (f_next > f_cur) ++improved;
        if (f_next > f_max) { f_max = f_next; best = next; }

        if (ckpt_idx < checkpoints.size() && k == checkpoints[ckpt_idx]) {
            const int period = k - last_ckpt;
            const bool cond1 = improved < 0.75 * period;
            const bool cond2 = eta == eta_at_ckpt && f_max == fmax_at_ckpt;
            if (cond1 || cond2) {
                eta *= 0.5;
                next = best;  // restart from the best iterate seen so far
                f_next = f_max;
                eval(next, &grad);  // refresh the gradient at the restart point
            }
            last_ckpt = k;
            improved = 0;
            eta_at_ckpt = eta;
            fmax_at_ckpt = f_max;
            ++ckpt_idx;
        }
        prev = cur;
        cur = next;
        f_cur = f_next;
        res.f_max_trace.push_back(f_max);
    }

    res.delta_max.resize(n);
    for (int i = 0; i < n; ++i) res.delta_max[i] = best[i] * c[i];
    res.f_max = f_max;
    return res;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

double avg_sharpness_one(const Objective& loss, std::span<const double> w, const BallSpec& ball,
                         NoiseFamily family, int n_samples, const Rng& rng_base) {
    ball.validate();
    const double base = loss.value(w);
    std::vector<double> x(w.size());
    double acc = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        Rng rng = rng_base.substream({static_cast<std::uint64_t>(s)});
        std::vector<double> delta = sample_noise(ball, family, rng);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = w[i] + delta[i];
        acc += loss.value(x) - base;
    }
    return acc / n_samples;
}

double worst_sharpness_one(const Objective& loss, std::span<const double> w,
                           const BallSpec& ball, int n_iters, const Rng& rng_base) {
    PerturbedLoss obj(loss, w);
    Rng rng = rng_base.substream({0});
    ApgdResult res = apgd_maximize(obj, ball, n_iters, rng);
    // The zero perturbation is feasible; evaluating it floors the result at 0.
    const double at_zero = obj.value(std::vector<double>(w.size(), 0.0));
    return std::max(res.f_max, at_zero);
}

namespace {

std::vector<Batch> split_batches(const Batch& data, int m, int n_batches) {
    if (data.size() < m * n_batches)
        throw ConfigError("data provides " + std::to_string(data.size()) + " examples, need " +
                          std::to_string(m * n_batches) + " for " + std::to_string(n_batches) +
                          " disjoint batches of size " + std::to_string(m));
    std::vector<Batch> out;
    out.reserve(n_batches);
    for (int b = 0; b < n_batches; ++b) out.push_back(data.slice(b * m, m));
    return out;
}

SharpnessReport run_batched(const ModelSpec& spec, const ParamVector& params, const Batch& data,
                            const SharpnessConfig& cfg, std::uint64_t stream_id, int jobs) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    BallSpec ball{cfg.p, cfg.rho,
                  make_scaling(params.values, cfg.scaling, cfg.custom_c, cfg.scaling_eps)};
    std::vector<Batch> batches = split_batches(data, cfg.m, cfg.n_batches);

    SharpnessReport report;
    report.config = cfg;
    report.per_batch.assign(cfg.n_batches, 0.0);
    parallel_for(cfg.n_batches, jobs, [&](int b) {
        ModelLoss loss(spec, batches[b], cfg.normalize);
        Rng base = Rng(cfg.seed).substream({stream_id, static_cast<std::uint64_t>(b)});
        report.per_batch[b] =
            cfg.mode == SharpnessMode::avg
                ? avg_sharpness_one(loss, params.values, ball, cfg.noise, cfg.n_samples, base)
                : worst_sharpness_one(loss, params.values, ball, cfg.n_iters, base);
    });

    double sum = 0.0;
    for (double v : report.per_batch) sum += v;
    report.mean = sum / cfg.n_batches;
    double sq = 0.0;
    for (double v : report.per_batch) sq += (v - report.mean) * (v - report.mean);
    report.stddev = cfg.n_batches > 1 ? std::sqrt(sq / (cfg.n_batches - 1)) : 0.0;
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace

SharpnessReport avg_sharpness(const ModelSpec& spec, const ParamVector& params, const Batch& data,
                              const SharpnessConfig& cfg, std::uint64_t stream_id, int jobs) {
    if (cfg.mode != SharpnessMode::avg) throw ConfigError("avg_sharpness: cfg.mode must be avg");
    return run_batched(spec, params, data, cfg, stream_id, jobs);
}

SharpnessReport worst_sharpness(const ModelSpec& spec, const ParamVector& params,
                                const Batch& data, const SharpnessConfig& cfg,
                                std::uint64_t stream_id, int jobs) {
    if (cfg.mode != SharpnessMode::worst)
        throw ConfigError("worst_sharpness: cfg.mode must be worst");
    return run_batched(spec, params, data, cfg, stream_id, jobs);
}

SharpnessReport measure_sharpness(const ModelSpec& spec, const ParamVector& params,
                                  const Batch& data, const SharpnessConfig& cfg,
                                  std::uint64_t stream_id, int jobs) {
    return run_batched(spec, params, data, cfg, stream_id, jobs);
}

// ---------------------------------------------------------------------------
// Local (rho -> 0) quantities
// ---------------------------------------------------------------------------

double local_avg_sharpness(const Objective& loss, std::span<const double> w,
                           std::span<const double> c, const LocalTraceOptions& opt) {
    if (w.size() != c.size()) throw ShapeError("local_avg_sharpness: |c| != |w|");
    if (loss.dim() <= 2000) {
        DenseHessian h = dense_hessian(loss, w, opt.hvp);
        return 0.5 * rescaled_trace(h.matrix, c);
    }
    RescaledOperator op(loss, w, c, opt.hvp);
    Rng rng(opt.seed);
    return 0.5 * hutchinson_trace(op, opt.hutchinson_probes, rng).estimate;
}

double local_avg_sharpness(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                           std::span<const double> c, const LocalTraceOptions& opt) {
    ModelLoss loss(spec, batch, false);
    return local_avg_sharpness(loss, params.values, c, opt);
}

std::string to_string(LocalRegime r) {
    switch (r) {
        case LocalRegime::gradient_dominant: return "gradient_dominant";
        case LocalRegime::curvature: return "curvature";
        case LocalRegime::negative_definite: return "negative_definite";
    }
    return "?";
}

LocalWorst local_worst_sharpness(const Objective& loss, std::span<const double> w,
                                 std::span<const double> c, NormP p,
                                 const LocalTraceOptions& opt) {
    if (w.size() != c.size()) throw ShapeError("local_worst_sharpness: |c| != |w|");
    std::vector<double> g(w.size());
    const double L = loss.value_grad(w, g);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= c[i];
    const double gnorm = norm2(g);
    if (gnorm > 1e-6 * (1.0 + std::abs(L)))
        return {LocalRegime::gradient_dominant, p == NormP::linf ? norm1(g) : gnorm};
    if (p == NormP::linf)
        throw UnsupportedRegime(
            "local worst-case curvature regime is only evaluated for p=2; "
            "gradient norm " + std::to_string(gnorm) + " is below threshold");
    RescaledOperator op(loss, w, c, opt.hvp);
    PowerIterResult lam = lambda_max(op);
    if (lam.value > 0.0) return {LocalRegime::curvature, 0.5 * lam.value};
    return {LocalRegime::negative_definite, 0.0};
}

LocalWorst local_worst_sharpness(const ModelSpec& spec, const ParamVector& params,
                                 const Batch& batch, std::span<const double> c, NormP p,
                                 const LocalTraceOptions& opt) {
    ModelLoss loss(spec, batch, false);
    return local_worst_sharpness(loss, params.values, c, p, opt);
}

}  // namespace sharplab
