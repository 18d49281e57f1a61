#include "sharplab/perturb.hpp"

#include <cmath>

namespace sharplab {

std::string to_string(ScalingMode m) {
    switch (m) {
        case ScalingMode::standard: return "standard";
        case ScalingMode::adaptive: return "adaptive";
        case ScalingMode::custom: return "custom";
    }
    return "?";
}

std::string to_string(NormP p) { return p == NormP::l2 ? "l2" : "linf"; }

std::string to_string(NoiseFamily f) {
    return f == NoiseFamily::gaussian ? "gaussian" : "uniform";
}

ScalingMode scaling_mode_from_string(const std::string& s) {
    if (s == "standard") return ScalingMode::standard;
    if (s == "adaptive") return ScalingMode::adaptive;
    if (s == "custom") return ScalingMode::custom;
    throw ConfigError("unknown scaling mode: " + s);
}

NormP norm_from_string(const std::string& s) {
    if (s == "l2" || s == "2") return NormP::l2;
    if (s == "linf" || s == "inf") return NormP::linf;
    throw ConfigError("unknown norm: " + s);
}

NoiseFamily noise_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseFamily::gaussian;
    if (s == "uniform") return NoiseFamily::uniform;
    throw ConfigError("unknown noise family: " + s);
}

ScalingVector make_scaling(std::span<const double> w, ScalingMode mode,
                           std::span<const double> custom, double eps) {
    ScalingVector out;
    out.provenance = mode;
    switch (mode) {
        case ScalingMode::standard:
            out.c.assign(w.size(), 1.0);
            break;
        case ScalingMode::adaptive:
            out.c.resize(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) out.c[i] = std::abs(w[i]) + eps;
            break;
        case ScalingMode::custom:
            if (custom.size() != w.size())
                throw ShapeError("custom scaling length does not match parameter count");
            for (double x : custom)
                if (x < 0.0) throw ConfigError("custom scaling has negative entries");
            out.c.assign(custom.begin(), custom.end());
            if (eps != 0.0)
                for (double& x : out.c) x += eps;
            break;
    }
    return out;
}

void BallSpec::validate() const {
    if (rho < 0.0) throw ConfigError("ball radius must be nonnegative");
    for (double x : c.c)
        if (x < 0.0) throw ConfigError("scaling vector has negative entries");
}

void project(std::span<double> delta, const BallSpec& ball) {
    const auto& c = ball.c.c;
    if (delta.size() != c.size()) throw ShapeError("project: |delta| != |c|");
    const double rho = ball.rho;
    if (ball.p == NormP::linf) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double bound = rho * c[i];
            if (delta[i] > bound) delta[i] = bound;
            else if (delta[i] < -bound) delta[i] = -bound;
            if (c[i] == 0.0) delta[i] = 0.0;
        }
        return;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        if (c[i] == 0.0) {
            delta[i] = 0.0;
        } else {
            const double g = delta[i] / c[i];
            sq += g * g;
        }
    }
    const double nrm = std::sqrt(sq);
    if (nrm > rho) {
        const double f = rho / nrm;
        for (double& x : delta) x *= f;
    }
}

std::vector<double> projected(std::span<const double> delta, const BallSpec& ball) {
    std::vector<double> out(delta.begin(), delta.end());
    project(out, ball);
    return out;
}

std::vector<double> sample_noise(const BallSpec& ball, NoiseFamily family, Rng& rng) {
    ball.validate();
    const auto& c = ball.c.c;
    std::vector<double> delta(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double z = family == NoiseFamily::gaussian ? rng.normal() : rng.uniform(-1.0, 1.0);
        delta[i] = ball.rho * c[i] * z;
    }
    return delta;
}

}  // namespace sharplab
