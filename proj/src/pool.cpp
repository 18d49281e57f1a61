#include "sharplab/pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "sharplab/parallel.hpp"

namespace sharplab {

// ---------------------------------------------------------------------------
// Kendall tau-a
// ---------------------------------------------------------------------------

namespace {

// Strict inversions (i < j with a[i] > a[j]) by iterative merge sort.
long long count_inversions(std::vector<double>& a) {
    const std::size_t n = a.size();
    std::vector<double> buf(n);
    long long inv = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
            const std::size_t mid = lo + width;
            const std::size_t hi = std::min(lo + 2 * width, n);
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (a[j] < a[i]) {
                    inv += static_cast<long long>(mid - i);
                    buf[k++] = a[j++];
                } else {
                    buf[k++] = a[i++];
                }
            }
            while (i < mid) buf[k++] = a[i++];
            while (j < hi) buf[k++] = a[j++];
            std::copy(buf.begin() + lo, buf.begin() + hi, a.begin() + lo);
        }
    }
    return inv;
}

long long tied_pairs(const std::vector<double>& sorted) {
    long long ties = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= sorted.size(); ++i) {
        if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
            ++run;
        } else {
            ties += static_cast<long long>(run) * (run - 1) / 2;
            run = 1;
        }
    }
    return ties;
}

}  // namespace

double kendall_tau(std::span<const double> t, std::span<const double> s) {
    const std::size_t m = t.size();
    if (s.size() != m) throw ShapeError("kendall_tau: vector lengths differ");
    if (m < 2) throw ConfigError("kendall_tau: needs at least two samples");

    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (t[a] != t[b]) return t[a] < t[b];
        return s[a] < s[b];
    });

    long long n1 = 0, n3 = 0;  // pairs tied in t; pairs tied in both
    {
        std::size_t i = 0;
        while (i < m) {
            std::size_t j = i;
            while (j < m && t[order[j]] == t[order[i]]) ++j;
            const long long g = static_cast<long long>(j - i);
            n1 += g * (g - 1) / 2;
            std::size_t a = i;
            while (a < j) {
                std::size_t b = a;
                while (b < j && s[order[b]] == s[order[a]]) ++b;
                const long long h = static_cast<long long>(b - a);
                n3 += h * (h - 1) / 2;
                a = b;
            }
            i = j;
        }
    }

    std::vector<double> s_seq(m);
    for (std::size_t i = 0; i < m; ++i) s_seq[i] = s[order[i]];
    const long long discordant = count_inversions(s_seq);  // s_seq ends up sorted
    const long long n2 = tied_pairs(s_seq);

    const long long n0 = static_cast<long long>(m) * (m - 1) / 2;
    const long long c_minus_d = n0 - n1 - n2 + n3 - 2 * discordant;
    return static_cast<double>(c_minus_d) / static_cast<double>(n0);
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

void MixtureConfig::validate() const {
    if (classes < 2) throw ConfigError("mixture: classes must be >= 2");
    if (dim < 1) throw ConfigError("mixture: dim must be >= 1");
    if (n_train < 1 || n_test < 1) throw ConfigError("mixture: split sizes must be positive");
    if (spread < 0.0 || separation < 0.0) throw ConfigError("mixture: negative scale");
}

namespace {

Batch sample_mixture_split(const std::vector<std::vector<double>>& means, int n, double spread,
                           Rng& rng) {
    const int k = static_cast<int>(means.size());
    const int d = static_cast<int>(means[0].size());
    Batch b;
    b.X = Array({n, d});
    b.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        b.labels[i] = i % k;  // balanced classes before shuffling
        for (int j = 0; j < d; ++j) b.X.at(i, j) = means[b.labels[i]][j] + spread * rng.normal();
    }
    // Fisher-Yates so evaluation prefixes mix classes.
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(i + 1)));
        std::swap(b.labels[i], b.labels[j]);
        for (int col = 0; col < d; ++col) std::swap(b.X.at(i, col), b.X.at(j, col));
    }
    return b;
}

}  // namespace

Dataset make_gaussian_mixture(const MixtureConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::vector<std::vector<double>> means(cfg.classes, std::vector<double>(cfg.dim));
    for (auto& mu : means) {
        double nrm = 0.0;
        for (double& x : mu) {
            x = rng.normal();
            nrm += x * x;
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) nrm = 1.0;
        for (double& x : mu) x *= cfg.separation / nrm;
    }
    Dataset ds;
    ds.classes = cfg.classes;
    Rng train_rng = rng.substream({1});
    Rng test_rng = rng.substream({2});
    ds.train = sample_mixture_split(means, cfg.n_train, cfg.spread, train_rng);
    ds.test = sample_mixture_split(means, cfg.n_test, cfg.spread, test_rng);
    return ds;
}

Batch corrupt_inputs(const Batch& b, double sigma, Rng& rng) {
    Batch out = b;
    for (double& x : out.X.data) x += sigma * rng.normal();
    return out;
}

namespace {

nlohmann::ordered_json batch_to_json(const Batch& b) {
    nlohmann::ordered_json j;
    j["n"] = b.size();
    j["d"] = b.X.cols();
    j["X"] = b.X.data;
    if (b.is_classification())
        j["y"] = b.labels;
    else
        j["y"] = b.targets;
    return j;
}

Batch batch_from_json(const nlohmann::json& j, bool classification) {
    Batch b;
    const int n = j.at("n").get<int>();
    const int d = j.at("d").get<int>();
    b.X = Array({n, d}, j.at("X").get<std::vector<double>>());
    if (classification)
        b.labels = j.at("y").get<std::vector<int>>();
    else
        b.targets = j.at("y").get<std::vector<double>>();
    return b;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    nlohmann::ordered_json j;
    j["classes"] = ds.classes;
    j["train"] = batch_to_json(ds.train);
    j["test"] = batch_to_json(ds.test);
    std::ofstream out(path);
    if (!out) throw Error("cannot open dataset file for writing: " + path);
    out << j.dump() << "\n";
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        Dataset ds;
        ds.classes = j.at("classes").get<int>();
        const bool cls = ds.classes >= 2;
        ds.train = batch_from_json(j.at("train"), cls);
        ds.test = batch_from_json(j.at("test"), cls);
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed dataset " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    spec.validate();
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (warmup_frac < 0.0 || warmup_frac > 1.0)
        throw ConfigError("train: warmup_frac must be in [0, 1]");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
    if (epochs < 1 || batch_size < 1) throw ConfigError("train: epochs and batch_size >= 1");
    if (sam_rho < 0.0) throw ConfigError("train: sam_rho must be nonnegative");
}

double lr_at(const TrainConfig& cfg, int iteration, int total_iterations) {
    const double warm = cfg.warmup_frac * total_iterations;
    if (iteration < warm) return cfg.lr * iteration / warm;
    if (total_iterations - warm <= 0.0) return cfg.lr;
    return cfg.lr * (total_iterations - iteration) / (total_iterations - warm);
}

double error_rate(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    Array logits = predict_logits(spec, params, batch.X);
    const int n = batch.size(), k = logits.cols();
    int wrong = 0;
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best != batch.labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / n;
}

PoolRecord train_model(const TrainConfig& cfg, const Dataset& data, const Batch* ood_test,
                       const std::string& model_id, const std::string& checkpoint_path) {
    cfg.validate();
    data.train.validate(cfg.spec);
    const int n = data.train.size();
    const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int total = per_epoch * cfg.epochs;

    Rng init_rng = Rng(cfg.seed).substream({1});
    ParamVector params = init_params(cfg.spec, init_rng, cfg.init_gain);
    std::vector<double> velocity(params.values.size(), 0.0);
    std::vector<double> grad(params.values.size());
    std::vector<double> perturbed(params.values.size());

    std::vector<int> order(n);
    int it = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng = Rng(cfg.seed).substream({2, static_cast<std::uint64_t>(epoch)});
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_rng.index(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n - start);
            Batch mb;
            mb.X = Array({count, data.train.X.cols()});
            mb.labels.resize(count);
            for (int r = 0; r < count; ++r) {
                const int src = order[start + r];
                std::copy(data.train.X.data.begin() + static_cast<std::size_t>(src) * mb.X.cols(),
                          data.train.X.data.begin() + static_cast<std::size_t>(src + 1) * mb.X.cols(),
                          mb.X.data.begin() + static_cast<std::size_t>(r) * mb.X.cols());
                mb.labels[r] = data.train.labels[src];
            }
            ModelLoss loss(cfg.spec, mb, false);
            double lval = loss.value_grad(params.values, grad);
            if (!std::isfinite(lval))
                throw DivergenceError("train_model: non-finite loss at iteration " +
                                      std::to_string(it));
            if (cfg.sam_rho > 0.0) {
                const double gn = norm2(grad);
                if (gn > 0.0) {
                    const double scale = cfg.sam_rho / gn;
                    for (std::size_t p = 0; p < perturbed.size(); ++p)
                        perturbed[p] = params.values[p] + scale * grad[p];
                    loss.value_grad(perturbed, grad);
                }
            }
            const double step = lr_at(cfg, it, total);
            for (std::size_t p = 0; p < params.values.size(); ++p) {
                velocity[p] = cfg.momentum * velocity[p] + grad[p];
                params.values[p] -= step * velocity[p];
            }
            ++it;
        }
    }

    PoolRecord rec;
    rec.model_id = model_id;
    rec.checkpoint_path = checkpoint_path;
    rec.hyperparameters = {{"lr", cfg.lr},
                           {"momentum", cfg.momentum},
                           {"warmup_frac", cfg.warmup_frac},
                           {"epochs", static_cast<double>(cfg.epochs)},
                           {"batch_size", static_cast<double>(cfg.batch_size)},
                           {"sam_rho", cfg.sam_rho},
                           {"init_gain", cfg.init_gain},
                           {"seed", static_cast<double>(cfg.seed)}};
    rec.train_error = error_rate(cfg.spec, params, data.train);
    rec.test_error = error_rate(cfg.spec, params, data.test);
    if (ood_test) rec.ood_error = error_rate(cfg.spec, params, *ood_test);
    rec.gen_gap = rec.test_error - rec.train_error;
    rec.excluded = rec.train_error > cfg.filter_train_err;
    if (!checkpoint_path.empty())
        save_checkpoint(checkpoint_path, cfg.spec, params, rec.hyperparameters);
    return rec;
}

// ---------------------------------------------------------------------------
// Pool measurement and correlation
// ---------------------------------------------------------------------------

std::optional<double> PoolRecord::find_sharpness(const std::string& measure, double rho) const {
    for (const SharpnessValue& sv : sharpness)
        if (sv.measure == measure && sv.rho == rho) return sv.value;
    return std::nullopt;
}

std::optional<double> PoolRecord::target_value(const std::string& target) const {
    if (target == "test_error") return test_error;
    if (target == "gen_gap") return gen_gap;
    if (target == "ood_error") return ood_error;
    throw ConfigError("unknown correlation target: " + target);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

void measure_pool(std::vector<PoolRecord>& records, const Dataset& data,
                  const std::vector<SharpnessConfig>& configs, int jobs) {
    parallel_for(static_cast<int>(records.size()), jobs, [&](int r) {
        PoolRecord& rec = records[r];
        if (rec.excluded) return;
        try {
            Checkpoint ck = load_checkpoint(rec.checkpoint_path);
            const std::uint64_t stream_id = fnv1a(rec.model_id);
            for (const SharpnessConfig& cfg : configs) {
                if (rec.find_sharpness(cfg.measure_name(), cfg.rho)) continue;  // resumable
                SharpnessReport rep =
                    measure_sharpness(ck.spec, ck.params, data.train, cfg, stream_id, 1);
                rec.sharpness.push_back({cfg.measure_name(), cfg.rho, rep.mean});
            }
        } catch (const std::exception& e) {
            rec.failure = e.what();
        }
    });
}

namespace {

std::string format_subgroup(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

CorrelationReport correlate_pool(const std::vector<PoolRecord>& records,
                                 const std::string& measure, double rho,
                                 const std::string& target, const std::string& subgroup_key) {
    CorrelationReport rep;
    rep.measure = measure;
    rep.rho = rho;
    rep.target = target;

    std::vector<const PoolRecord*> usable;
    std::string missing;
    for (const PoolRecord& r : records) {
        if (r.excluded || !r.failure.empty()) continue;
        const auto mv = r.find_sharpness(measure, rho);
        const auto tv = r.target_value(target);
        if (!mv || !tv) {
            missing += (missing.empty() ? "" : "; ") + r.model_id + " misses " +
                       (!mv ? "measure " + measure : "target " + target);
            continue;
        }
        usable.push_back(&r);
    }
    if (!missing.empty()) throw ConfigError("correlate_pool: " + missing);

    std::vector<double> mv, tv;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const PoolRecord* r : usable) {
        const double m = *r->find_sharpness(measure, rho);
        const double t = *r->target_value(target);
        mv.push_back(m);
        tv.push_back(t);
        std::string label;
        if (!subgroup_key.empty()) {
            auto it = r->hyperparameters.find(subgroup_key);
            if (it == r->hyperparameters.end())
                throw ConfigError("correlate_pool: " + r->model_id + " misses subgroup key " +
                                  subgroup_key);
            label = format_subgroup(it->second);
            auto& g = groups[label];
            g.first.push_back(m);
            g.second.push_back(t);
        }
        rep.scatter.push_back({r->model_id, m, t, label});
    }
    if (mv.size() >= 2) rep.global_tau = kendall_tau(mv, tv);
    for (const auto& [label, g] : groups) {
        std::optional<double> tau;
        if (g.first.size() >= 2) tau = kendall_tau(g.first, g.second);
        rep.subgroup_taus.emplace_back(label, tau);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string pool_manifest_json(const std::vector<PoolRecord>& records) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const PoolRecord& r : records) {
        nlohmann::ordered_json j;
        j["model_id"] = r.model_id;
        j["checkpoint_path"] = r.checkpoint_path;
        j["hyperparameters"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : r.hyperparameters) j["hyperparameters"][k] = v;
        j["train_error"] = r.train_error;
        j["test_error"] = r.test_error;
        j["ood_error"] = r.ood_error ? nlohmann::ordered_json(*r.ood_error)
                                     : nlohmann::ordered_json(nullptr);
        j["gen_gap"] = r.gen_gap;
        j["excluded"] = r.excluded;
        j["failure"] = r.failure;
        nlohmann::ordered_json sv = nlohmann::ordered_json::array();
        for (const SharpnessValue& s : r.sharpness)
            sv.push_back({{"measure", s.measure}, {"rho", s.rho}, {"value", s.value}});
        j["sharpness"] = sv;
        arr.push_back(j);
    }
    return arr.dump(2);
}

std::vector<PoolRecord> pool_manifest_from_json(const std::string& text) {
    std::vector<PoolRecord> out;
    try {
        nlohmann::json arr = nlohmann::json::parse(text);
        for (const auto& j : arr) {
            PoolRecord r;
            r.model_id = j.at("model_id").get<std::string>();
            r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
            for (const auto& [k, v] : j.at("hyperparameters").items())
                r.hyperparameters[k] = v.get<double>();
            r.train_error = j.at("train_error").get<double>();
            r.test_error = j.at("test_error").get<double>();
            if (!j.at("ood_error").is_null()) r.ood_error = j.at("ood_error").get<double>();
            r.gen_gap = j.at("gen_gap").get<double>();
            r.excluded = j.at("excluded").get<bool>();
            r.failure = j.at("failure").get<std::string>();
            for (const auto& s : j.at("sharpness"))
                r.sharpness.push_back({s.at("measure").get<std::string>(),
                                       s.at("rho").get<double>(), s.at("value").get<double>()});
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed pool manifest: ") + e.what());
    }
    return out;
}

}  // namespace sharplab
