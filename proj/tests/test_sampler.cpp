#include "doctest.h"

#include <cmath>
#include <numeric>

#include "neurodiff/denoiser.hpp"
#include "neurodiff/error.hpp"
#include "neurodiff/sampler.hpp"
#include "oracles.hpp"

using namespace neurodiff;

namespace {

constexpr PredictionKind all_kinds[] = {PredictionKind::Sample, PredictionKind::Velocity,
                                        PredictionKind::Flow};

/// With an exact N(m, s^2) posterior-mean denoiser, eta = 0 DDIM is an affine
/// map per voxel: z_prev = z * (a_p a_t s^2 + b_p b_t) / (sig_t sig_p) where
/// z = (x - a m) / sig and sig^2 = a^2 s^2 + b^2. Returns the output for a
/// given starting value.
double linear_map_prediction(double x_start, double m, double s, const NoiseSchedule& schedule,
                             int steps) {
    const auto ts = ddim_timesteps(schedule.steps(), steps);
    auto sig = [s](double ab) { return std::sqrt(ab * s * s + 1.0 - ab); };
    double ab_t = schedule.alpha_bar(ts.back());
    double z = (x_start - std::sqrt(ab_t) * m) / sig(ab_t);
    for (std::size_t i = ts.size(); i-- > 0;) {
        ab_t = schedule.alpha_bar(ts[i]);
        const double ab_p = i > 0 ? schedule.alpha_bar(ts[i - 1]) : 1.0;
        const double num = std::sqrt(ab_p * ab_t) * s * s + std::sqrt((1.0 - ab_p) * (1.0 - ab_t));
        z *= num / (sig(ab_t) * sig(ab_p));
    }
    return m + s * z;
}

struct Moments {
    double mean;
    double sd;
};

Moments moments(const Field& x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

TEST_CASE("ddim_step endpoint returns the clean estimate") {
    const Field xt{0.4, -1.0};
    const Field x0{0.25, 0.75};
    const Field eps{1.5, -2.0};
    CHECK(ddim_step(xt, x0, eps, 0.3, 1.0, 0.0, {}) == x0);
}

TEST_CASE("ddim_step re-noises consistent estimates") {
    const Field x0{0.1, -0.7, 2.0};
    const Field eps{-0.3, 1.1, 0.4};
    const Field xt = forward_diffuse(x0, eps, 0.4);
    const Field out = ddim_step(xt, x0, eps, 0.4, 0.7, 0.0, {});
    const Field expect = forward_diffuse(x0, eps, 0.7);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("ddim sigma at eta=1 equals the ancestral value") {
    // sqrt((1-0.8)/(1-0.5)) * sqrt(1 - 0.5/0.8) = sqrt(0.4 * 0.375) = sqrt(0.15)
    CHECK(ddim_sigma(0.5, 0.8, 1.0) == doctest::Approx(0.3872983346207417).epsilon(1e-15));
    CHECK(ddim_sigma(0.5, 0.8, 0.0) == 0.0);
}

TEST_CASE("ddim_step rejects inverted noise levels") {
    try {
        ddim_step(Field{0.0}, Field{0.0}, Field{0.0}, 0.8, 0.5, 0.0, {});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::invalid_ab_ordering);
    }
    CHECK_THROWS_AS(ddim_step(Field{0.0}, Field{0.0, 1.0}, Field{0.0}, 0.5, 0.8, 0.0, {}), Error);
}

TEST_CASE("oracle posterior matches quadrature") {
    const NoiseSchedule schedule;
    const GaussianOracle oracle(PredictionKind::Sample, 0.0, 1.0, schedule);
    for (double xt : {-2.0, -0.3, 0.0, 1.7}) {
        const double closed = oracle.posterior_mean(Field{xt}, 0.5)[0];
        CHECK(closed == doctest::Approx(std::sqrt(0.5) * xt).epsilon(1e-12));
        CHECK(closed == doctest::Approx(oracle::posterior_mean_quadrature(xt, 0.0, 1.0, 0.5)).epsilon(1e-9));
    }
    const GaussianOracle shifted(PredictionKind::Sample, 0.3, 0.05 * 0.05, schedule);
    for (double ab : {0.01, 0.5, 0.97}) {
        const double closed = shifted.posterior_mean(Field{0.9}, ab)[0];
        CHECK(closed == doctest::Approx(oracle::posterior_mean_quadrature(0.9, 0.3, 0.0025, ab)).epsilon(1e-8));
    }
}

TEST_CASE("oracle limits") {
    const NoiseSchedule schedule;
    SUBCASE("delta prior predicts the mean") {
        const GaussianOracle oracle(PredictionKind::Sample, Field{0.2, -0.4}, 0.0, schedule);
        const Field p = oracle.predict(Field{5.0, -3.0}, Dims{2, 1, 1}, 500);
        CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-14));
        CHECK(p[1] == doctest::Approx(-0.4).epsilon(1e-14));
    }
    SUBCASE("no noise returns the input") {
        const GaussianOracle oracle(PredictionKind::Sample, 0.0, 1.0, schedule);
        const Field p = oracle.posterior_mean(Field{0.8}, 1.0 - 1e-12);
        CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-6));
    }
    SUBCASE("kinds convert consistently") {
        const Field xt{0.3, -1.1, 2.2};
        const Dims shape{3, 1, 1};
        const GaussianOracle base(PredictionKind::Sample, 0.1, 0.5, schedule);
        const Field x0 = base.predict(xt, shape, 300);
        for (auto kind : all_kinds) {
            const GaussianOracle o(kind, 0.1, 0.5, schedule);
            const Field back = predict_x0(kind, o.predict(xt, shape, 300), xt, schedule.alpha_bar(300));
            for (std::size_t i = 0; i < xt.size(); ++i) CHECK(back[i] == doctest::Approx(x0[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("generate follows the closed-form linear map for every kind") {
    const NoiseSchedule schedule;
    const double m = 0.3;
    const double s = 1.0;
    SamplerConfig cfg;
    cfg.shape = Dims{10, 10, 10};
    cfg.seed = 11;
    const Field start = initial_noise(cfg.seed, cfg.shape.size());
    for (int steps : {64, 1000}) {
        cfg.steps = steps;
        for (auto kind : all_kinds) {
            const GaussianOracle oracle(kind, m, s * s, schedule);
            const Field out = generate_field(oracle, schedule, cfg);
            double worst = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                worst = std::max(worst, std::abs(out[i] - linear_map_prediction(start[i], m, s, schedule, steps)));
            }
            CAPTURE(steps);
            CAPTURE(to_string(kind));
            CHECK(worst < 1e-9);
        }
    }
}

TEST_CASE("generated moments sit within Monte-Carlo error of the exact prediction") {
    const NoiseSchedule schedule;
    const double m = 0.3;
    const double s = 1.0;
    SamplerConfig cfg;
    cfg.shape = Dims{25, 20, 20};
    cfg.seed = 2024;
    const GaussianOracle oracle(PredictionKind::Velocity, m, s * s, schedule);
    for (int steps : {64, 1000}) {
        cfg.steps = steps;
        const Field out = generate_field(oracle, schedule, cfg);
        const Moments got = moments(out);
        // Predicted output distribution: the start noise is N(0, 1), pushed
        // through the affine map.
        const double p0 = linear_map_prediction(0.0, m, s, schedule, steps);
        const double slope = linear_map_prediction(1.0, m, s, schedule, steps) - p0;
        const double n = static_cast<double>(out.size());
        CAPTURE(steps);
        CHECK(std::abs(got.mean - m) < 3.0 * s / std::sqrt(n) + std::abs(p0 - m));
        CHECK(std::abs(got.mean - p0) < 3.0 * std::abs(slope) / std::sqrt(n));
        CHECK(std::abs(got.sd - std::abs(slope)) < 3.0 * std::abs(slope) / std::sqrt(2.0 * n));
    }
}

TEST_CASE("delta data collapses every seed onto the image") {
    const NoiseSchedule schedule;
    const Dims shape{4, 3, 2};
    Field image(shape.size());
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = 0.05 * static_cast<double>(i) - 0.4;
    for (auto kind : all_kinds) {
        const GaussianOracle oracle(kind, image, 0.0, schedule);
        for (std::uint64_t seed : {0ULL, 1ULL, 987654321ULL}) {
            SamplerConfig cfg;
            cfg.shape = shape;
            cfg.seed = seed;
            const Field out = generate_field(oracle, schedule, cfg);
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - image[i]) < 1e-6);
        }
    }
}

TEST_CASE("generation is deterministic per seed") {
    const NoiseSchedule schedule;
    const GaussianOracle oracle(PredictionKind::Flow, 0.3, 0.01, schedule);
    SamplerConfig cfg;
    cfg.shape = Dims{6, 5, 4};
    cfg.seed = 42;
    cfg.eta = 0.5;
    const Volume a = generate(oracle, schedule, cfg);
    const Volume b = generate(oracle, schedule, cfg);
    CHECK(a.data() == b.data());
    cfg.seed = 43;
    CHECK(generate(oracle, schedule, cfg).data() != a.data());
}

TEST_CASE("generate validates its configuration") {
    const NoiseSchedule schedule(100, 1e-4, 0.02);
    const GaussianOracle oracle(PredictionKind::Sample, 0.0, 1.0, schedule);
    SamplerConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(generate(oracle, schedule, cfg), Error);
    cfg.steps = 101;
    CHECK_THROWS_AS(generate(oracle, schedule, cfg), Error);
}

TEST_CASE("initial noise is a unit Gaussian") {
    const Field z = initial_noise(5, 20000);
    const Moments mo = moments(z);
    CHECK(std::abs(mo.mean) < 3.0 / std::sqrt(20000.0));
    CHECK(std::abs(mo.sd - 1.0) < 3.0 / std::sqrt(40000.0));
    CHECK(initial_noise(5, 100) == Field(z.begin(), z.begin() + 100));
}
