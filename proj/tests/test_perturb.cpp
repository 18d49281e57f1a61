#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sharplab/perturb.hpp"

using namespace sharplab;

TEST_CASE("make_scaling: adaptive is |w|, standard is ones") {
    std::vector<double> w{-2.0, 0.0, 3.0};
    ScalingVector adaptive = make_scaling(w, ScalingMode::adaptive);
    CHECK(adaptive.c == std::vector<double>{2.0, 0.0, 3.0});
    CHECK(adaptive.provenance == ScalingMode::adaptive);
    ScalingVector standard = make_scaling(w, ScalingMode::standard);
    CHECK(standard.c == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("make_scaling: custom validates nonnegativity and round-trips") {
    std::vector<double> w{1.0, 2.0};
    std::vector<double> good{0.5, 0.0};
    ScalingVector s = make_scaling(w, ScalingMode::custom, good);
    CHECK(s.c == good);
    std::vector<double> bad{0.5, -0.1};
    CHECK_THROWS_AS(make_scaling(w, ScalingMode::custom, bad), ConfigError);
    std::vector<double> wrong_len{0.5};
    CHECK_THROWS_AS(make_scaling(w, ScalingMode::custom, wrong_len), ShapeError);
}

TEST_CASE("make_scaling: additive eps floors the scaling") {
    std::vector<double> w{-2.0, 0.0};
    ScalingVector s = make_scaling(w, ScalingMode::adaptive, {}, 0.5);
    CHECK(s.c == std::vector<double>{2.5, 0.5});
}

TEST_CASE("project: linf clamps coordinatewise at rho * c") {
    BallSpec ball{NormP::linf, 0.1,
                  make_scaling(std::vector<double>{1.0, 1.0}, ScalingMode::standard)};
    std::vector<double> d{0.5, -0.5};
    project(d, ball);
    CHECK(d == std::vector<double>{0.1, -0.1});

    BallSpec wide{NormP::linf, 0.1, {std::vector<double>{2.0}, ScalingMode::custom}};
    std::vector<double> e{0.5};
    project(e, wide);
    CHECK(e[0] == doctest::Approx(0.2));
}

TEST_CASE("project: zero-scale coordinates are frozen in both norms") {
    for (NormP p : {NormP::linf, NormP::l2}) {
        BallSpec ball{p, 0.5, {std::vector<double>{1.0, 0.0, 2.0}, ScalingMode::custom}};
        std::vector<double> d{0.1, 0.7, -0.2};
        project(d, ball);
        CHECK(d[1] == 0.0);
    }
}

TEST_CASE("project: l2 rescales onto the weighted ball") {
    BallSpec ball{NormP::l2, 1.0, {std::vector<double>{1.0, 1.0}, ScalingMode::standard}};
    std::vector<double> d{3.0, 4.0};
    project(d, ball);
    CHECK(d[0] == doctest::Approx(0.6));
    CHECK(d[1] == doctest::Approx(0.8));
}

TEST_CASE("project properties: idempotence and feasibility") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 8;
        std::vector<double> w(n), d(n);
        for (double& x : w) x = rng.normal();
        for (double& x : d) x = 2.0 * rng.normal();
        w[rep % n] = 0.0;  // exercise a frozen coordinate
        const NormP p = rep % 2 ? NormP::l2 : NormP::linf;
        BallSpec ball{p, 0.3, make_scaling(w, ScalingMode::adaptive)};
        std::vector<double> once = projected(d, ball);
        std::vector<double> twice = projected(once, ball);
        CHECK(once == twice);
        // feasibility in normalized coordinates over positive-c coordinates
        double nrm = 0.0;
        for (int i = 0; i < n; ++i) {
            if (ball.c.c[i] == 0.0) {
                CHECK(once[i] == 0.0);
                continue;
            }
            const double g = once[i] / ball.c.c[i];
            if (p == NormP::linf)
                CHECK(std::abs(g) <= 0.3 * (1 + 1e-12));
            else
                nrm += g * g;
        }
        if (p == NormP::l2) CHECK(std::sqrt(nrm) <= 0.3 * (1 + 1e-12));
    }
}

TEST_CASE("sample_noise: rho = 0 gives the zero vector") {
    Rng rng(1);
    BallSpec ball{NormP::linf, 0.0, {std::vector<double>{1.0, 2.0}, ScalingMode::custom}};
    for (NoiseFamily f : {NoiseFamily::gaussian, NoiseFamily::uniform}) {
        std::vector<double> d = sample_noise(ball, f, rng);
        CHECK(d == std::vector<double>{0.0, 0.0});
    }
}

TEST_CASE("sample_noise: empirical per-coordinate variance matches rho^2 c^2") {
    const double rho = 0.3;
    std::vector<double> c{0.5, 1.0, 2.0};
    BallSpec ball{NormP::l2, rho, {c, ScalingMode::custom}};
    Rng rng(77);
    const int draws = 100000;
    std::vector<double> sq(c.size(), 0.0);
    for (int k = 0; k < draws; ++k) {
        std::vector<double> d = sample_noise(ball, NoiseFamily::gaussian, rng);
        for (std::size_t i = 0; i < c.size(); ++i) sq[i] += d[i] * d[i];
    }
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double want = rho * rho * c[i] * c[i];
        CHECK(std::abs(sq[i] / draws - want) <= 0.05 * want);
    }
}

TEST_CASE("sample_noise: uniform draws stay inside the box and fill it") {
    const double rho = 0.2;
    std::vector<double> c{1.0, 3.0};
    BallSpec ball{NormP::linf, rho, {c, ScalingMode::custom}};
    Rng rng(78);
    double max0 = 0.0, max1 = 0.0;
    for (int k = 0; k < 20000; ++k) {
        std::vector<double> d = sample_noise(ball, NoiseFamily::uniform, rng);
        CHECK(std::abs(d[0]) <= rho * c[0]);
        CHECK(std::abs(d[1]) <= rho * c[1]);
        max0 = std::max(max0, std::abs(d[0]));
        max1 = std::max(max1, std::abs(d[1]));
    }
    CHECK(max0 > 0.99 * rho * c[0]);
    CHECK(max1 > 0.99 * rho * c[1]);
}

TEST_CASE("sample_noise: same seed gives identical vectors") {
    BallSpec ball{NormP::l2, 0.7, {std::vector<double>{1.0, 2.0, 0.3}, ScalingMode::custom}};
    Rng a(123), b(123);
    for (int k = 0; k < 10; ++k) {
        std::vector<double> da = sample_noise(ball, NoiseFamily::gaussian, a);
        std::vector<double> db = sample_noise(ball, NoiseFamily::gaussian, b);
        CHECK(da == db);
    }
}

TEST_CASE("sample_noise: covariance equivariance under coordinate rescaling") {
    // Sampling with c * s and matched seeds yields exactly delta * s.
    std::vector<double> c{0.4, 1.1, 2.0, 0.0};
    std::vector<double> s{2.0, 0.5, 3.0, 1.5};
    std::vector<double> cs(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) cs[i] = c[i] * s[i];
    BallSpec ball{NormP::linf, 0.6, {c, ScalingMode::custom}};
    BallSpec scaled{NormP::linf, 0.6, {cs, ScalingMode::custom}};
    for (NoiseFamily f : {NoiseFamily::gaussian, NoiseFamily::uniform}) {
        Rng a(9), b(9);
        std::vector<double> d = sample_noise(ball, f, a);
        std::vector<double> ds = sample_noise(scaled, f, b);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(ds[i] == d[i] * s[i]);
    }
}

TEST_CASE("rng: substreams are deterministic and path-separated") {
    Rng root(42);
    Rng a = root.substream({1, 2});
    Rng b = root.substream({1, 2});
    Rng c = root.substream({2, 1});
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() == b.next_u64());
    Rng a2 = root.substream({1, 2});
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("rng: normal moments are sane") {
    Rng rng(5);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}
