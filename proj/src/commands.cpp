#include "sharplab/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>

#include <json.hpp>

#include "sharplab/diaglin.hpp"
#include "sharplab/pool.hpp"
#include "sharplab/sharpness.hpp"

namespace sharplab {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError("config root must be a JSON object: " + path);
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
}

const json& need(const json& j, const std::string& field) {
    auto it = j.find(field);
    if (it == j.end()) throw ConfigError("missing required config field: " + field);
    return *it;
}

template <typename T>
T get_or(const json& j, const std::string& field, T fallback) {
    auto it = j.find(field);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field has wrong type: " + field);
    }
}

void require_file(const std::string& path, const std::string& field) {
    if (!fs::exists(path))
        throw ConfigError("config field " + field + " points to a missing file: " + path);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open output file: " + path.string());
    out << content;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

SharpnessConfig sharpness_config_from_json(const json& j) {
    SharpnessConfig cfg;
    cfg.mode = sharpness_mode_from_string(need(j, "mode").get<std::string>());
    cfg.rho = need(j, "rho").get<double>();
    cfg.p = norm_from_string(get_or<std::string>(j, "p", "linf"));
    cfg.scaling = scaling_mode_from_string(get_or<std::string>(j, "scaling", "adaptive"));
    if (cfg.scaling == ScalingMode::custom)
        cfg.custom_c = need(j, "custom_c").get<std::vector<double>>();
    cfg.scaling_eps = get_or<double>(j, "scaling_eps", 0.0);
    cfg.m = get_or<int>(j, "m", 128);
    cfg.n_batches = get_or<int>(j, "n_batches", 8);
    cfg.n_samples = get_or<int>(j, "n_samples", 100);
    cfg.n_iters = get_or<int>(j, "n_iters", 20);
    cfg.noise = noise_from_string(get_or<std::string>(j, "noise", "gaussian"));
    cfg.normalize = get_or<bool>(j, "normalize", false);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    cfg.validate();
    return cfg;
}

int run_guarded(const CommandOptions& opt, const std::function<int(const json&, const fs::path&)>& body) {
    json cfg;
    fs::path out_dir;
    try {
        cfg = load_config(opt.config_path);
        out_dir = opt.out_dir;
        fs::create_directories(out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    try {
        return body(cfg, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// measure
// ---------------------------------------------------------------------------

int cmd_measure(const CommandOptions& opt) {
    return run_guarded(opt, [&](const json& cfg, const fs::path& out_dir) {
        const std::string ck_path = need(cfg, "checkpoint").get<std::string>();
        require_file(ck_path, "checkpoint");
        const std::string ds_path = need(cfg, "dataset").get<std::string>();
        require_file(ds_path, "dataset");
        SharpnessConfig scfg = sharpness_config_from_json(need(cfg, "sharpness"));
        if (opt.seed_override) scfg.seed = *opt.seed_override;

        Checkpoint ck = load_checkpoint(ck_path);
        Dataset ds = load_dataset(ds_path);
        const std::string model_id = fs::path(ck_path).stem().string();

        SharpnessReport rep =
            measure_sharpness(ck.spec, ck.params, ds.train, scfg, 0, opt.jobs);
        write_file(out_dir / "report.json", report_to_json(rep) + "\n");
        write_file(out_dir / "report.csv",
                   "model_id,measure,rho,value\n" + report_csv_row(rep, model_id) + "\n");
        if (opt.verbose)
            std::cout << scfg.measure_name() << " rho=" << scfg.rho << " mean=" << rep.mean
                      << " std=" << rep.stddev << "\n";
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// diaglin
// ---------------------------------------------------------------------------

int cmd_diaglin(const CommandOptions& opt) {
    return run_guarded(opt, [&](const json& cfg, const fs::path& out_dir) {
        Fig6Config fc;
        fc.n_models = get_or<int>(cfg, "n_models", fc.n_models);
        fc.d = get_or<int>(cfg, "d", fc.d);
        fc.n_train = get_or<int>(cfg, "n_train", fc.n_train);
        fc.n_test = get_or<int>(cfg, "n_test", fc.n_test);
        fc.sparsity = get_or<double>(cfg, "sparsity", fc.sparsity);
        fc.noise_std = get_or<double>(cfg, "noise_std", fc.noise_std);
        fc.lr_min = get_or<double>(cfg, "lr_min", fc.lr_min);
        fc.lr_max = get_or<double>(cfg, "lr_max", fc.lr_max);
        fc.init_min = get_or<double>(cfg, "init_min", fc.init_min);
        fc.init_max = get_or<double>(cfg, "init_max", fc.init_max);
        fc.target_loss = get_or<double>(cfg, "target_loss", fc.target_loss);
        fc.max_steps = get_or<int>(cfg, "max_steps", fc.max_steps);
        fc.seed = get_or<std::uint64_t>(cfg, "seed", fc.seed);
        if (opt.seed_override) fc.seed = *opt.seed_override;
        fc.jobs = opt.jobs;
        fc.validate();

        Fig6Result res = fig6_experiment(fc);
        write_file(out_dir / "fig6.csv", fig6_csv(res));
        write_file(out_dir / "tau_summary.json", fig6_tau_json(res, fc) + "\n");
        if (opt.verbose)
            std::cout << "converged " << (fc.n_models - res.n_excluded) << "/" << fc.n_models
                      << ", tau(l1 vs test) = "
                      << (res.tau_beta_l1 ? std::to_string(*res.tau_beta_l1) : "undefined")
                      << "\n";
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// invariance
// ---------------------------------------------------------------------------

namespace {

struct Assertion {
    std::string name;
    bool passed;
    std::string detail;
};

double rel_diff(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

// Linear model trained to zero error on a separable two-blob task, then
// rescaled so the smallest logit margin is exactly `margin`.
std::pair<ModelSpec, ParamVector> separable_linear_fixture(std::uint64_t seed, Batch& batch,
                                                           double margin) {
    const int dim = 4, n = 128;
    Rng rng(seed);
    std::vector<double> mu(dim);
    for (double& x : mu) x = rng.normal();
    double nrm = norm2(mu);
    for (double& x : mu) x *= 2.0 / nrm;

    batch.X = Array({n, dim});
    batch.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        batch.labels[i] = i % 2;
        const double sign = batch.labels[i] == 0 ? 1.0 : -1.0;
        for (int j = 0; j < dim; ++j) batch.X.at(i, j) = sign * mu[j] + 0.3 * rng.normal();
    }

    ModelSpec spec{ModelKind::linear, {dim, 2}};
    Rng init_rng = rng.substream({1});
    ParamVector params = init_params(spec, init_rng, 0.5);
    ModelLoss loss(spec, batch, false);
    std::vector<double> grad(params.dim());
    for (int step = 0; step < 5000; ++step) {
        loss.value_grad(params.values, grad);
        for (int i = 0; i < params.dim(); ++i) params.values[i] -= 0.5 * grad[i];
        if (step % 50 == 0 && error_rate(spec, params, batch) == 0.0) break;
    }
    if (error_rate(spec, params, batch) != 0.0)
        throw Error("invariance fixture did not reach zero training error");

    Array logits = predict_logits(spec, params, batch.X);
    double min_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const int y = batch.labels[i];
        min_margin = std::min(min_margin, logits.at(i, y) - logits.at(i, 1 - y));
    }
    const double scale = margin / min_margin;
    for (double& x : params.values) x *= scale;
    return {spec, params};
}

}  // namespace

int cmd_invariance(const CommandOptions& opt) {
    return run_guarded(opt, [&](const json& cfg, const fs::path& out_dir) {
        std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);
        if (opt.seed_override) seed = *opt.seed_override;
        const double rho = get_or<double>(cfg, "rho", 0.05);
        std::vector<double> alphas = get_or<std::vector<double>>(cfg, "alphas", {0.1, 10.0});
        const json grid_cfg = get_or<json>(cfg, "scale_grid", json::object());
        const double grid_min = get_or<double>(grid_cfg, "min", 1.0);
        const double grid_max = get_or<double>(grid_cfg, "max", 128.0);
        const int grid_points = get_or<int>(grid_cfg, "points", 8);
        std::vector<int> mlp_widths = get_or<std::vector<int>>(cfg, "mlp_widths", {6, 12, 8, 3});
        const int n_examples = get_or<int>(cfg, "n_examples", 64);
        const int avg_samples = get_or<int>(cfg, "avg_samples", 200);
        const int apgd_iters = get_or<int>(cfg, "apgd_iters", 20);
        if (grid_points < 1) throw ConfigError("scale_grid.points must be >= 1");
        for (double a : alphas)
            if (!(a > 0.0)) throw ConfigError("alphas must be positive");

        std::vector<Assertion> checks;

        // --- Reparametrization suite on a ReLU MLP ---
        ModelSpec spec{ModelKind::mlp, mlp_widths};
        spec.validate();
        Rng rng(seed);
        Batch batch;
        batch.X = Array({n_examples, mlp_widths.front()});
        for (double& x : batch.X.data) x = rng.normal();
        batch.labels.resize(n_examples);
        for (int i = 0; i < n_examples; ++i)
            batch.labels[i] = static_cast<int>(rng.index(mlp_widths.back()));
        Rng init_rng = rng.substream({7});
        ParamVector params = init_params(spec, init_rng);

        SharpnessConfig avg_cfg;
        avg_cfg.mode = SharpnessMode::avg;
        avg_cfg.p = NormP::linf;
        avg_cfg.rho = rho;
        avg_cfg.scaling = ScalingMode::adaptive;
        avg_cfg.m = n_examples / 4;
        avg_cfg.n_batches = 4;
        avg_cfg.n_samples = avg_samples;
        avg_cfg.seed = seed;
        SharpnessConfig worst_cfg = avg_cfg;
        worst_cfg.mode = SharpnessMode::worst;
        worst_cfg.n_iters = apgd_iters;

        const double base_avg = avg_sharpness(spec, params, batch, avg_cfg, 0, opt.jobs).mean;
        const double base_worst = worst_sharpness(spec, params, batch, worst_cfg, 0, opt.jobs).mean;
        SharpnessConfig std_cfg = worst_cfg;
        std_cfg.scaling = ScalingMode::standard;
        const double base_worst_std = worst_sharpness(spec, params, batch, std_cfg, 0, opt.jobs).mean;

        for (double alpha : alphas) {
            ParamVector rp = reparametrize_scale(spec, params, 0, alpha);
            const double a_avg = avg_sharpness(spec, rp, batch, avg_cfg, 0, opt.jobs).mean;
            const double a_worst = worst_sharpness(spec, rp, batch, worst_cfg, 0, opt.jobs).mean;
            const double d_avg = rel_diff(a_avg, base_avg);
            const double d_worst = rel_diff(a_worst, base_worst);
            checks.push_back({"adaptive_avg_invariant_alpha_" + fmt_short(alpha), d_avg <= 1e-6,
                              "relative deviation " + fmt(d_avg)});
            checks.push_back({"adaptive_worst_invariant_alpha_" + fmt_short(alpha), d_worst <= 0.01,
                              "relative deviation " + fmt(d_worst)});
            if (alpha == 10.0) {
                const double s = worst_sharpness(spec, rp, batch, std_cfg, 0, opt.jobs).mean;
                const double d_std = rel_diff(s, base_worst_std);
                checks.push_back({"standard_worst_changes_alpha_10", d_std >= 0.10,
                                  "relative change " + fmt(d_std)});
            }
        }

        // --- Fig.-1 style scale sweep on a separable linear model ---
        Batch lin_batch;
        auto [lin_spec, lin_params] = separable_linear_fixture(seed + 1, lin_batch, 2.0);
        SharpnessConfig sweep_raw;
        sweep_raw.mode = SharpnessMode::worst;
        sweep_raw.p = NormP::linf;
        sweep_raw.rho = rho;
        sweep_raw.scaling = ScalingMode::adaptive;
        sweep_raw.m = lin_batch.size() / 4;
        sweep_raw.n_batches = 4;
        sweep_raw.n_iters = apgd_iters;
        sweep_raw.seed = seed;
        SharpnessConfig sweep_norm = sweep_raw;
        sweep_norm.normalize = true;

        std::string sweep_csv = "alpha,sharpness_raw,sharpness_norm\n";
        std::vector<double> raw_values, norm_values, grid;
        for (int g = 0; g < grid_points; ++g) {
            const double a =
                grid_points == 1
                    ? grid_min
                    : std::exp(std::log(grid_min) +
                               (std::log(grid_max) - std::log(grid_min)) * g / (grid_points - 1));
            grid.push_back(a);
            ParamVector scaled = lin_params;
            for (double& x : scaled.values) x *= a;
            raw_values.push_back(worst_sharpness(lin_spec, scaled, lin_batch, sweep_raw, 0, opt.jobs).mean);
            norm_values.push_back(
                worst_sharpness(lin_spec, scaled, lin_batch, sweep_norm, 0, opt.jobs).mean);
            sweep_csv += fmt(a) + "," + fmt(raw_values.back()) + "," + fmt(norm_values.back()) + "\n";
        }
        if (grid_points >= 2) {
            bool decreasing = true;
            for (std::size_t i = 1; i < raw_values.size(); ++i)
                if (!(raw_values[i] < raw_values[i - 1])) decreasing = false;
            checks.push_back({"scale_sweep_unnormalized_strictly_decreasing", decreasing,
                              "values " + fmt(raw_values.front()) + " .. " + fmt(raw_values.back())});
            double lo = norm_values[0], hi = norm_values[0];
            for (double v : norm_values) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            const double rel = rel_diff(hi, lo);
            checks.push_back({"scale_sweep_normalized_constant", rel <= 1e-6,
                              "relative variation " + fmt(rel)});
        }

        ojson report;
        report["assertions"] = ojson::array();
        bool all_passed = true;
        for (const Assertion& a : checks) {
            report["assertions"].push_back(
                {{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
            all_passed = all_passed && a.passed;
            if (opt.verbose || !a.passed)
                std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << " (" << a.detail << ")\n";
        }
        report["all_passed"] = all_passed;
        write_file(out_dir / "invariance.csv", sweep_csv);
        write_file(out_dir / "invariance_report.json", report.dump(2) + "\n");
        return all_passed ? kExitOk : kExitAssertion;
    });
}

// ---------------------------------------------------------------------------
// pool
// ---------------------------------------------------------------------------

int cmd_pool(const CommandOptions& opt) {
    return run_guarded(opt, [&](const json& cfg, const fs::path& out_dir) {
        std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);
        if (opt.seed_override) seed = *opt.seed_override;
        const int n_models = get_or<int>(cfg, "n_models", 20);
        if (n_models < 1) throw ConfigError("n_models must be >= 1");
        const double ood_sigma = get_or<double>(cfg, "ood_sigma", 1.0);

        ModelSpec spec;
        const json& sj = need(cfg, "spec");
        spec.kind = model_kind_from_string(need(sj, "kind").get<std::string>());
        spec.widths = need(sj, "widths").get<std::vector<int>>();
        spec.validate();

        const json& tj = need(cfg, "train");
        const double lr_min = need(tj, "lr_min").get<double>();
        const double lr_max = need(tj, "lr_max").get<double>();
        if (!(lr_min > 0.0) || lr_max < lr_min) throw ConfigError("bad train lr range");
        const std::vector<double> sam_rhos =
            get_or<std::vector<double>>(tj, "sam_rhos", {0.0});
        if (sam_rhos.empty()) throw ConfigError("sam_rhos must not be empty");
        TrainConfig base;
        base.spec = spec;
        base.momentum = get_or<double>(tj, "momentum", 0.9);
        base.warmup_frac = get_or<double>(tj, "warmup_frac", 0.4);
        base.epochs = get_or<int>(tj, "epochs", 30);
        base.batch_size = get_or<int>(tj, "batch_size", 32);
        base.filter_train_err = get_or<double>(tj, "filter_train_err", 0.01);
        base.init_gain = get_or<double>(tj, "init_gain", 1.0);

        const json& sharp_list = need(cfg, "sharpness");
        if (!sharp_list.is_array() || sharp_list.empty())
            throw ConfigError("sharpness must be a non-empty array of configs");
        std::vector<SharpnessConfig> sharp_cfgs;
        for (const json& scj : sharp_list) sharp_cfgs.push_back(sharpness_config_from_json(scj));
        const std::vector<std::string> targets =
            get_or<std::vector<std::string>>(cfg, "targets", {"test_error", "gen_gap"});
        for (const std::string& t : targets)
            if (t != "test_error" && t != "gen_gap" && t != "ood_error")
                throw ConfigError("unknown correlation target: " + t);
        const std::string subgroup_key = get_or<std::string>(cfg, "subgroup_key", "sam_rho");

        // Dataset: an inline mixture spec or a pre-generated file.
        Dataset ds;
        if (cfg.contains("dataset_path")) {
            const std::string p = cfg.at("dataset_path").get<std::string>();
            require_file(p, "dataset_path");
            ds = load_dataset(p);
            if (ds.classes < 2) throw ConfigError("pool needs a classification dataset");
        } else {
            const json& dj = need(cfg, "dataset");
            MixtureConfig mc;
            mc.classes = get_or<int>(dj, "classes", spec.widths.back());
            mc.dim = get_or<int>(dj, "dim", spec.widths.front());
            mc.n_train = get_or<int>(dj, "n_train", 2048);
            mc.n_test = get_or<int>(dj, "n_test", 2000);
            mc.separation = get_or<double>(dj, "separation", 3.0);
            mc.spread = get_or<double>(dj, "spread", 1.0);
            mc.seed = get_or<std::uint64_t>(dj, "seed", Rng(seed).substream({0xD5}).next_u64());
            mc.validate();
            ds = make_gaussian_mixture(mc);
        }
        if (ds.classes != spec.widths.back() || ds.train.X.cols() != spec.input_dim())
            throw ConfigError("dataset shape does not match model spec");

        Rng ood_rng = Rng(seed).substream({0x00D});
        Batch ood_batch = corrupt_inputs(ds.test, ood_sigma, ood_rng);

        const fs::path manifest_path = out_dir / "manifest.json";
        const fs::path ck_dir = out_dir / "checkpoints";
        fs::create_directories(ck_dir);

        std::vector<PoolRecord> existing;
        if (fs::exists(manifest_path)) {
            std::ifstream in(manifest_path);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            existing = pool_manifest_from_json(text);
        }
        auto find_existing = [&](const std::string& id) -> const PoolRecord* {
            for (const PoolRecord& r : existing)
                if (r.model_id == id && fs::exists(r.checkpoint_path)) return &r;
            return nullptr;
        };

        std::vector<PoolRecord> records;
        for (int i = 0; i < n_models; ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "model_%03d", i);
            if (const PoolRecord* prev = find_existing(id)) {
                records.push_back(*prev);
                if (opt.verbose) std::cout << id << ": reusing trained record\n";
                continue;
            }
            Rng hp_rng = Rng(seed).substream({0x7001, static_cast<std::uint64_t>(i)});
            TrainConfig tc = base;
            tc.lr = hp_rng.log_uniform(lr_min, lr_max);
            tc.sam_rho = sam_rhos[i % sam_rhos.size()];
            tc.seed = Rng(seed).substream({0x7EA1, static_cast<std::uint64_t>(i)}).next_u64();
            const std::string ck_path = (ck_dir / (std::string(id) + ".json")).string();
            PoolRecord rec;
            try {
                rec = train_model(tc, ds, &ood_batch, id, ck_path);
            } catch (const std::exception& e) {
                rec.model_id = id;
                rec.checkpoint_path = ck_path;
                rec.excluded = true;
                rec.failure = e.what();
            }
            records.push_back(std::move(rec));
            write_file(manifest_path, pool_manifest_json(records) + "\n");
            if (opt.verbose)
                std::cout << id << ": train_err=" << records.back().train_error
                          << " test_err=" << records.back().test_error
                          << (records.back().excluded ? " (excluded)" : "") << "\n";
        }

        measure_pool(records, ds, sharp_cfgs, opt.jobs);
        write_file(manifest_path, pool_manifest_json(records) + "\n");

        ojson tau_report = ojson::array();
        std::string scatter_csv = "measure,rho,target,model_id,value,target_value,subgroup\n";
        for (const SharpnessConfig& sc : sharp_cfgs) {
            for (const std::string& target : targets) {
                CorrelationReport cr =
                    correlate_pool(records, sc.measure_name(), sc.rho, target, subgroup_key);
                ojson entry;
                entry["measure"] = cr.measure;
                entry["rho"] = cr.rho;
                entry["target"] = cr.target;
                entry["global_tau"] =
                    cr.global_tau ? ojson(*cr.global_tau) : ojson(nullptr);
                entry["subgroups"] = ojson::object();
                for (const auto& [label, tau] : cr.subgroup_taus)
                    entry["subgroups"][label] = tau ? ojson(*tau) : ojson(nullptr);
                tau_report.push_back(entry);
                for (const ScatterRow& row : cr.scatter)
                    scatter_csv += cr.measure + "," + fmt(cr.rho) + "," + cr.target + "," +
                                   row.model_id + "," + fmt(row.measure) + "," + fmt(row.target) +
                                   "," + row.subgroup + "\n";
            }
        }
        write_file(out_dir / "tau_report.json", tau_report.dump(2) + "\n");
        write_file(out_dir / "scatter.csv", scatter_csv);
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// gen-task
// ---------------------------------------------------------------------------

int cmd_gen_task(const CommandOptions& opt) {
    return run_guarded(opt, [&](const json& cfg, const fs::path& out_dir) {
        const std::string type = need(cfg, "type").get<std::string>();
        std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);
        if (opt.seed_override) seed = *opt.seed_override;

        Dataset ds;
        if (type == "classification") {
            MixtureConfig mc;
            mc.classes = get_or<int>(cfg, "classes", 3);
            mc.dim = get_or<int>(cfg, "dim", 10);
            mc.n_train = get_or<int>(cfg, "n_train", 2048);
            mc.n_test = get_or<int>(cfg, "n_test", 2000);
            mc.separation = get_or<double>(cfg, "separation", 3.0);
            mc.spread = get_or<double>(cfg, "spread", 1.0);
            mc.seed = seed;
            mc.validate();
            ds = make_gaussian_mixture(mc);
        } else if (type == "sparse_regression") {
            const int n = get_or<int>(cfg, "n", 100);
            const int d = get_or<int>(cfg, "d", 200);
            const double sparsity = get_or<double>(cfg, "sparsity", 0.9);
            const double noise_std = get_or<double>(cfg, "noise_std", 0.0);
            const bool whiten = get_or<bool>(cfg, "whiten", false);
            const int n_test = get_or<int>(cfg, "n_test", 1000);
            Rng rng(seed);
            SparseTask task = make_task(n, d, sparsity, noise_std, whiten, rng, n_test);
            ds.classes = 0;
            ds.train = task.train_batch();
            ds.test = Batch{task.X_test, {}, task.y_test};
        } else {
            throw ConfigError("unknown task type: " + type +
                              " (expected classification or sparse_regression)");
        }
        save_dataset((out_dir / "dataset.json").string(), ds);
        if (opt.verbose)
            std::cout << "wrote dataset with " << ds.train.size() << " train / " << ds.test.size()
                      << " test examples\n";
        return kExitOk;
    });
}

}  // namespace sharplab
