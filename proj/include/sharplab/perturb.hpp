#pragma once

#include <span>
#include <string>
#include <vector>

#include "sharplab/array.hpp"
#include "sharplab/rng.hpp"

namespace sharplab {

enum class ScalingMode { standard, adaptive, custom };
enum class NormP { l2, linf };
enum class NoiseFamily { gaussian, uniform };

std::string to_string(ScalingMode m);
std::string to_string(NormP p);
std::string to_string(NoiseFamily f);
ScalingMode scaling_mode_from_string(const std::string& s);
NormP norm_from_string(const std::string& s);
NoiseFamily noise_from_string(const std::string& s);

// Elementwise perturbation scaling c. standard -> ones, adaptive -> |w_i|,
// custom -> caller-supplied nonnegative vector.
struct ScalingVector {
    std::vector<double> c;
    ScalingMode provenance = ScalingMode::standard;
};

// eps is an optional additive floor on c (default 0: zero-scale coordinates
// stay frozen).
ScalingVector make_scaling(std::span<const double> w, ScalingMode mode,
                           std::span<const double> custom = {}, double eps = 0.0);

// The perturbation set { delta : ||delta * c^-1||_p <= rho }, with c_i = 0
// coordinates frozen at delta_i = 0.
struct BallSpec {
    NormP p = NormP::linf;
    double rho = 0.0;
    ScalingVector c;

    void validate() const;
};

// Projection onto the ball. Idempotent; coordinates with c_i = 0 are forced
// to zero in both norms.
void project(std::span<double> delta, const BallSpec& ball);
std::vector<double> projected(std::span<const double> delta, const BallSpec& ball);

// gaussian: delta_i ~ N(0, (rho c_i)^2); uniform: delta_i ~ U(-rho c_i, rho c_i).
// Draws one variate per coordinate in index order, so matched seeds give
// delta' = delta * s exactly when c' = c * s.
std::vector<double> sample_noise(const BallSpec& ball, NoiseFamily family, Rng& rng);

}  // namespace sharplab
