#include "sharplab/diaglin.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "sharplab/hessian.hpp"
#include "sharplab/parallel.hpp"
#include "sharplab/pool.hpp"

namespace sharplab {

namespace {

// Two modified Gram-Schmidt passes; random Gaussian columns with n >= d are
// numerically independent, and the second pass pushes ||X^T X - I||_inf to
// machine precision.
void orthonormalize_columns(Array& x) {
    const int n = x.rows(), d = x.cols();
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < d; ++j) {
            for (int p = 0; p < j; ++p) {
                double proj = 0.0;
                for (int i = 0; i < n; ++i) proj += x.at(i, p) * x.at(i, j);
                for (int i = 0; i < n; ++i) x.at(i, j) -= proj * x.at(i, p);
            }
            double nrm = 0.0;
            for (int i = 0; i < n; ++i) nrm += x.at(i, j) * x.at(i, j);
            nrm = std::sqrt(nrm);
            if (nrm == 0.0) throw Error("orthonormalize: rank-deficient design matrix");
            for (int i = 0; i < n; ++i) x.at(i, j) /= nrm;
        }
    }
}

std::vector<double> matvec(const Array& x, std::span<const double> b) {
    const int n = x.rows(), d = x.cols();
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* row = x.data.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) acc += row[j] * b[j];
        out[i] = acc;
    }
    return out;
}

}  // namespace

SparseTask make_task(int n, int d, double sparsity, double noise_std, bool whiten, Rng& rng,
                     int n_test) {
    if (n < 1 || d < 1) throw ConfigError("make_task: n and d must be positive");
    if (sparsity < 0.0 || sparsity >= 1.0) throw ConfigError("make_task: sparsity must be in [0, 1)");
    if (whiten && n < d) throw ConfigError("make_task: whitening requires n >= d");

    SparseTask task;
    task.sparsity = sparsity;
    task.whitened = whiten;

    const double col_std = 1.0 / std::sqrt(static_cast<double>(n));
    task.X_train = Array({n, d});
    for (double& x : task.X_train.data) x = col_std * rng.normal();
    if (whiten) orthonormalize_columns(task.X_train);

    task.X_test = Array({n_test, d});
    for (double& x : task.X_test.data) x = col_std * rng.normal();

    // Sparse ground truth: choose support by partial Fisher-Yates, then draw
    // magnitudes U(0.5, 1.5) with random signs.
    const int nonzeros = static_cast<int>(std::llround((1.0 - sparsity) * d));
    std::vector<int> idx(d);
    for (int i = 0; i < d; ++i) idx[i] = i;
    for (int i = 0; i < nonzeros; ++i) {
        int j = i + static_cast<int>(rng.index(static_cast<std::uint64_t>(d - i)));
        std::swap(idx[i], idx[j]);
    }
    task.beta_star.assign(d, 0.0);
    for (int i = 0; i < nonzeros; ++i)
        task.beta_star[idx[i]] = rng.rademacher() * rng.uniform(0.5, 1.5);

    task.y_train = matvec(task.X_train, task.beta_star);
    for (double& y : task.y_train) y += noise_std * rng.normal();
    task.y_test = matvec(task.X_test, task.beta_star);
    for (double& y : task.y_test) y += noise_std * rng.normal();
    return task;
}

std::vector<double> DiagNetParams::beta() const {
    std::vector<double> b(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) b[i] = u[i] * v[i];
    return b;
}

std::vector<double> DiagNetParams::flat() const {
    std::vector<double> w(u);
    w.insert(w.end(), v.begin(), v.end());
    return w;
}

DiagNetParams DiagNetParams::from_flat(std::span<const double> w) {
    if (w.size() % 2 != 0) throw ShapeError("diaglin flat vector must have even length");
    const std::size_t d = w.size() / 2;
    DiagNetParams p;
    p.u.assign(w.begin(), w.begin() + d);
    p.v.assign(w.begin() + d, w.end());
    return p;
}

double diag_loss(const SparseTask& task, const DiagNetParams& p) {
    std::vector<double> r = matvec(task.X_train, p.beta());
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        double e = r[i] - task.y_train[i];
        acc += e * e;
    }
    return 0.5 * acc;
}

double diag_loss_grad(const SparseTask& task, const DiagNetParams& p,
                      std::vector<double>& grad_u, std::vector<double>& grad_v) {
    const int n = task.n_train(), d = task.dim();
    std::vector<double> beta = p.beta();
    std::vector<double> r = matvec(task.X_train, beta);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        r[i] -= task.y_train[i];
        acc += r[i] * r[i];
    }
    // X^T r, then split through the product rule: grad_u = v * X^T r, etc.
    std::vector<double> xtr(d, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = task.X_train.data.data() + static_cast<std::size_t>(i) * d;
        const double ri = r[i];
        for (int j = 0; j < d; ++j) xtr[j] += row[j] * ri;
    }
    grad_u.resize(d);
    grad_v.resize(d);
    for (int j = 0; j < d; ++j) {
        grad_u[j] = p.v[j] * xtr[j];
        grad_v[j] = p.u[j] * xtr[j];
    }
    return 0.5 * acc;
}

double diag_test_loss(const SparseTask& task, const DiagNetParams& p) {
    std::vector<double> r = matvec(task.X_test, p.beta());
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        double e = r[i] - task.y_test[i];
        acc += e * e;
    }
    return 0.5 * acc / static_cast<double>(r.size());
}

DiagTrainResult train_diag(const SparseTask& task, const DiagNetParams& init, double lr,
                           int max_steps, double target_loss) {
    if (!(lr > 0.0)) throw ConfigError("train_diag: lr must be positive");
    if (static_cast<int>(init.u.size()) != task.dim() || init.u.size() != init.v.size())
        throw ShapeError("train_diag: init does not match task dimension");
    DiagTrainResult res;
    res.params = init;
    std::vector<double> gu, gv;
    const int d = task.dim();
    for (int step = 0; step <= max_steps; ++step) {
        double loss = diag_loss_grad(task, res.params, gu, gv);
        res.achieved_loss = loss;
        res.steps = step;
        if (loss <= target_loss) {
            res.reached_target = true;
            return res;
        }
        if (loss > 1e12 || !std::isfinite(loss))
            throw DivergenceError("train_diag: diverged at step " + std::to_string(step) +
                                  " (loss " + std::to_string(loss) + ")");
        if (step == max_steps) break;
        for (int j = 0; j < d; ++j) {
            res.params.u[j] -= lr * gu[j];
            res.params.v[j] -= lr * gv[j];
        }
    }
    return res;
}

ScalingVector custom_scaling(const DiagNetParams& p) {
    const int d = p.dim();
    ScalingVector out;
    out.provenance = ScalingMode::custom;
    out.c.assign(2 * d, 0.0);
    for (int i = 0; i < d; ++i) {
        const double au = std::abs(p.u[i]), av = std::abs(p.v[i]);
        if (au == 0.0 || av == 0.0) continue;  // frozen coordinate on both blocks
        out.c[i] = std::sqrt(au / av);
        out.c[d + i] = std::sqrt(av / au);
    }
    return out;
}

ClosedFormQuantities closed_form_quantities(const DiagNetParams& p) {
    ClosedFormQuantities q;
    const int d = p.dim();
    for (int i = 0; i < d; ++i) {
        const double b = p.u[i] * p.v[i];
        const double pair = p.u[i] * p.u[i] + p.v[i] * p.v[i];
        q.beta_l1 += std::abs(b);
        q.beta_l2_sq += b * b;
        q.beta_linf = std::max(q.beta_linf, std::abs(b));
        q.trace_h += pair;
        q.lambda_max_h = std::max(q.lambda_max_h, pair);
    }
    q.trace_h_rescaled = 2.0 * q.beta_l1;
    q.lambda_max_h_rescaled = 2.0 * q.beta_linf;
    return q;
}

ClosedFormQuantities closed_form_quantities_at_min(const DiagNetParams& p,
                                                   const SparseTask& task) {
    if (!task.whitened) throw ConfigError("closed forms require a whitened task");
    std::vector<double> r = matvec(task.X_train, p.beta());
    double nrm = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        double e = r[i] - task.y_train[i];
        nrm += e * e;
    }
    nrm = std::sqrt(nrm);
    if (nrm > 1e-4)
        throw Error("closed_form_quantities: residual norm " + std::to_string(nrm) +
                    " exceeds 1e-4; not at a global minimum");
    return closed_form_quantities(p);
}

// ---------------------------------------------------------------------------
// Fig. 6 experiment
// ---------------------------------------------------------------------------

void Fig6Config::validate() const {
    if (n_models < 1) throw ConfigError("fig6: n_models must be >= 1");
    if (d < 1 || n_train < 1 || n_test < 1) throw ConfigError("fig6: dimensions must be positive");
    if (sparsity < 0.0 || sparsity >= 1.0) throw ConfigError("fig6: sparsity must be in [0, 1)");
    if (!(lr_min > 0.0) || lr_max < lr_min) throw ConfigError("fig6: bad lr range");
    if (!(init_min > 0.0) || init_max < init_min) throw ConfigError("fig6: bad init range");
    if (!(target_loss > 0.0)) throw ConfigError("fig6: target_loss must be positive");
    if (max_steps < 1) throw ConfigError("fig6: max_steps must be >= 1");
}

Fig6Result fig6_experiment(const Fig6Config& cfg) {
    cfg.validate();
    Rng task_rng = Rng(cfg.seed).substream({0xDA7A});
    SparseTask task =
        make_task(cfg.n_train, cfg.d, cfg.sparsity, cfg.noise_std, false, task_rng, cfg.n_test);

    ModelSpec spec{ModelKind::diaglin, {cfg.d}};
    Batch train = task.train_batch();

    Fig6Result res;
    res.rows.assign(cfg.n_models, Fig6Row{});
    parallel_for(cfg.n_models, cfg.jobs, [&](int m) {
        Fig6Row& row = res.rows[m];
        row.model = m;
        row.seed = Rng(cfg.seed).substream({static_cast<std::uint64_t>(m)}).next_u64();
        Rng rng = Rng(cfg.seed).substream({static_cast<std::uint64_t>(m)});
        row.lr = rng.log_uniform(cfg.lr_min, cfg.lr_max);
        row.init_scale = rng.log_uniform(cfg.init_min, cfg.init_max);
        DiagNetParams init;
        init.u.resize(cfg.d);
        init.v.resize(cfg.d);
        for (double& x : init.u) x = row.init_scale * rng.normal();
        for (double& x : init.v) x = row.init_scale * rng.normal();

        DiagTrainResult tr;
        try {
            tr = train_diag(task, init, row.lr, cfg.max_steps, cfg.target_loss);
        } catch (const DivergenceError&) {
            row.converged = false;
            row.achieved_loss = std::numeric_limits<double>::infinity();
            return;
        }
        row.steps = tr.steps;
        row.achieved_loss = tr.achieved_loss;
        row.converged = tr.reached_target;
        if (!row.converged) return;

        row.test_loss = diag_test_loss(task, tr.params);
        std::vector<double> beta = tr.params.beta();
        row.beta_l1 = norm1(beta);

        // Numerical Hessian path: dense HVP Hessian of the training loss.
        ParamVector params = make_params(spec);
        params.values = tr.params.flat();
        ModelLoss loss(spec, train, false);
        DenseHessian h = dense_hessian(loss, params.values);
        ScalingVector c = custom_scaling(tr.params);
        row.half_trace = 0.5 * trace(h.matrix);
        row.half_trace_rescaled = 0.5 * rescaled_trace(h.matrix, c.c);
        DenseOperator rescaled(rescale_dense(h.matrix, c.c));
        row.half_lambda_max_rescaled = 0.5 * lambda_max(rescaled).value;
    });

    std::vector<double> test_loss, b1, htr, ht, hlm;
    for (const Fig6Row& row : res.rows) {
        if (!row.converged) {
            ++res.n_excluded;
            continue;
        }
        test_loss.push_back(row.test_loss);
        b1.push_back(row.beta_l1);
        htr.push_back(row.half_trace_rescaled);
        ht.push_back(row.half_trace);
        hlm.push_back(row.half_lambda_max_rescaled);
    }
    if (test_loss.size() >= 2) {
        res.tau_beta_l1 = kendall_tau(b1, test_loss);
        res.tau_half_trace_rescaled = kendall_tau(htr, test_loss);
        res.tau_half_trace = kendall_tau(ht, test_loss);
        res.tau_half_lambda_max_rescaled = kendall_tau(hlm, test_loss);
        res.tau_beta_l1_vs_half_trace_rescaled = kendall_tau(b1, htr);
    }
    return res;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string fig6_csv(const Fig6Result& r) {
    std::string out =
        "model,seed,lr,init_scale,steps,converged,achieved_loss,test_loss,"
        "beta_l1,half_trace_rescaled,half_trace,half_lambda_max_rescaled\n";
    for (const Fig6Row& row : r.rows) {
        out += std::to_string(row.model) + "," + std::to_string(row.seed) + "," + fmt(row.lr) +
               "," + fmt(row.init_scale) + "," + std::to_string(row.steps) + "," +
               (row.converged ? "1" : "0") + "," + fmt(row.achieved_loss) + "," +
               fmt(row.test_loss) + "," + fmt(row.beta_l1) + "," + fmt(row.half_trace_rescaled) +
               "," + fmt(row.half_trace) + "," + fmt(row.half_lambda_max_rescaled) + "\n";
    }
    return out;
}

std::string fig6_tau_json(const Fig6Result& r, const Fig6Config& cfg) {
    nlohmann::ordered_json j;
    j["n_models"] = cfg.n_models;
    j["n_converged"] = cfg.n_models - r.n_excluded;
    j["n_excluded"] = r.n_excluded;
    auto tau = [](const std::optional<double>& t) {
        return t ? nlohmann::ordered_json(*t) : nlohmann::ordered_json(nullptr);
    };
    j["tau_vs_test_loss"] = {{"beta_l1", tau(r.tau_beta_l1)},
                             {"half_trace_rescaled", tau(r.tau_half_trace_rescaled)},
                             {"half_trace", tau(r.tau_half_trace)},
                             {"half_lambda_max_rescaled", tau(r.tau_half_lambda_max_rescaled)}};
    j["tau_beta_l1_vs_half_trace_rescaled"] = tau(r.tau_beta_l1_vs_half_trace_rescaled);
    j["config"] = {{"d", cfg.d},           {"n_train", cfg.n_train},
                   {"n_test", cfg.n_test}, {"sparsity", cfg.sparsity},
                   {"noise_std", cfg.noise_std}, {"lr_min", cfg.lr_min},
                   {"lr_max", cfg.lr_max}, {"init_min", cfg.init_min},
                   {"init_max", cfg.init_max}, {"target_loss", cfg.target_loss},
                   {"max_steps", cfg.max_steps}, {"seed", cfg.seed}};
    return j.dump(2);
}

}  // namespace sharplab
