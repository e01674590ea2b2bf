#include <catch2/catch_amalgamated.hpp>

#include "ctbm/kernel_metric.hpp"
#include "ctbm/learning_example.hpp"
#include "support.hpp"

#include <cmath>

using namespace ctbm;
using Catch::Approx;

namespace {

MetricConfig example_config(double lambda = 1.0) {
    MetricConfig cfg;
    cfg.discount = std::exp(-lambda);
    return cfg;
}

// max over theta in (0,1] of g(theta), on a fine grid.
template <class F>
double max_over_theta(F&& g) {
    double best = 0.0;
    for (int k = 1; k <= 200000; ++k) best = std::max(best, g(k / 200000.0));
    return best;
}

ProcessSpec absorbing_only(std::vector<double> obs) {
    ProcessSpec spec;
    for (std::size_t i = 0; i < obs.size(); ++i) spec.states.push_back("s" + std::to_string(i));
    spec.exit_rate.assign(obs.size(), 0.0);
    spec.jump.assign(obs.size(), {});
    spec.obs = std::move(obs);
    validate(spec);
    return spec;
}

} // namespace

TEST_CASE("observable metric", "[kernel]") {
    const PseudometricMatrix m = obs_metric(learning_example(0.3));
    CHECK(m(0, 4) == 1.0);
    CHECK(m(1, 0) == Approx(0.7));
    CHECK(m(1, 2) == 0.0);
    CHECK(m(2, 4) == Approx(0.3));
}

TEST_CASE("first application of F on the example", "[kernel]") {
    // With c = e^{-lambda} and theta = e^{-lambda t}, the pair (x,y) sees
    // theta (1 - theta)(1 - r) and (x,∂) sees theta (theta r + 1 - theta).
    for (double r : {0.3, 0.5, 0.8}) {
        const ProcessSpec spec = learning_example(r);
        const MetricConfig cfg = example_config();
        const Matrix raw = apply_F_raw(spec, obs_metric(spec), cfg, make_kernel_grid(spec, cfg));
        const ExampleLayout L;
        const double xy = max_over_theta([&](double th) { return th * (1 - th) * (1 - r); });
        const double xd = max_over_theta([&](double th) { return th * (th * r + 1 - th); });
        CHECK(raw(L.x, L.y) == Approx(xy).margin(1e-9));
        CHECK(raw(L.x, L.dead) == Approx(xd).margin(1e-9));
        // Pairs of absorbing states keep their current distance.
        CHECK(raw(L.zero, L.dead) == 1.0);
        CHECK(raw(L.y, L.dead) == Approx(r));
    }
}

TEST_CASE("F is monotone and stays above its argument after repair", "[kernel]") {
    const ProcessSpec spec = learning_example(0.4);
    const MetricConfig cfg = example_config();
    const KernelGrid grid = make_kernel_grid(spec, cfg);
    const PseudometricMatrix lo = obs_metric(spec);
    const PseudometricMatrix hi = entrywise_max(lo, apply_F(spec, lo, cfg, grid));
    const PseudometricMatrix f_lo = apply_F(spec, lo, cfg, grid), f_hi = apply_F(spec, hi, cfg, grid);
    CHECK(dominates(f_lo, lo));
    CHECK(dominates(f_hi, f_lo, 1e-12));
    CHECK(check_pseudometric(f_hi.matrix()).ok());
}

TEST_CASE("uniform-theta grid agrees with the uniform-time grid", "[kernel]") {
    const ProcessSpec spec = learning_example(0.5);
    MetricConfig a = example_config(), b = example_config();
    b.grid = TimeGrid::uniform_theta;
    const PseudometricMatrix m = obs_metric(spec);
    const Matrix fa = apply_F_raw(spec, m, a, make_kernel_grid(spec, a));
    const Matrix fb = apply_F_raw(spec, m, b, make_kernel_grid(spec, b));
    CHECK(sup_distance(fa, fb) < 1e-9);
}

TEST_CASE("Aitken extrapolation of a geometric sequence", "[kernel]") {
    const double limit = 0.75, q = 0.9;
    const auto x = [&](int n) { return limit - 0.2 * std::pow(q, n); };
    CHECK(aitken(x(10), x(11), x(12)) == Approx(limit).margin(1e-12));
    // Constant sequences are returned unchanged.
    CHECK(aitken(0.3, 0.3, 0.3) == 0.3);
}

TEST_CASE("kernel fixpoint reproduces the closed-form table", "[kernel][slow]") {
    const double r = 0.5;
    const auto [delta, report] = fixpoint_delta(learning_example(r), example_config());
    const Matrix table = kernel_limit_table(r);
    const ExampleLayout L;
    for (StateIndex a = 0; a < 5; ++a)
        for (StateIndex b = a + 1; b < 5; ++b) {
            INFO("pair " << a << "," << b);
            if (a == L.x && b == L.z) {
                CHECK(report.extrapolated(a, b) >= kernel_xz_lower - 0.01);
                CHECK(report.extrapolated(a, b) <= kernel_xz_upper + 0.01);
                continue;
            }
            CHECK(report.extrapolated(a, b) == Approx(table(a, b)).margin(0.01));
            CHECK(delta(a, b) == Approx(table(a, b)).margin(0.02));
        }
    CHECK(check_pseudometric(delta.matrix()).ok());
    CHECK(report.iterations <= 500);
    CHECK(report.sup_deltas.size() == report.iterations);
    // Extrapolation never moves below the last iterate.
    for (StateIndex a = 0; a < 5; ++a)
        for (StateIndex b = 0; b < 5; ++b) CHECK(report.extrapolated(a, b) >= delta(a, b));
}

TEST_CASE("iterates are nondecreasing pseudometrics", "[kernel]") {
    MetricConfig cfg = example_config();
    cfg.max_iterations = 20;
    cfg.keep_iterates = true;
    const auto [delta, report] = fixpoint_delta(learning_example(0.3), cfg);
    REQUIRE(report.iterates.size() == report.iterations + 1);
    for (std::size_t k = 1; k < report.iterates.size(); ++k) {
        CHECK(dominates(report.iterates[k], report.iterates[k - 1]));
        CHECK(check_pseudometric(report.iterates[k].matrix()).ok());
    }
    CHECK_FALSE(report.all_converged());
}

TEST_CASE("processes without moves converge immediately", "[kernel]") {
    const ProcessSpec spec = absorbing_only({0.0, 0.25, 1.0});
    const auto [delta, report] = fixpoint_delta(spec, MetricConfig{});
    CHECK(delta == obs_metric(spec));
    CHECK(report.iterations == 1);
    CHECK(report.all_converged());
    CHECK(report.residual == 0.0);

    const auto [single, single_report] = fixpoint_delta(absorbing_only({0.5}), MetricConfig{});
    CHECK(single.size() == 1);
    CHECK(single(0, 0) == 0.0);
}

TEST_CASE("metric configuration is validated", "[kernel]") {
    MetricConfig cfg;
    cfg.discount = 1.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg.discount = 0.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = MetricConfig{};
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = MetricConfig{};
    cfg.time_grid_points = 1;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    // c^T = tolerance at the horizon.
    CHECK(std::pow(MetricConfig{}.discount, MetricConfig{}.horizon()) == Approx(MetricConfig{}.time_tolerance));
    const ProcessSpec spec = learning_example(0.5);
    CHECK_THROWS_AS(apply_F(spec, PseudometricMatrix(3), example_config()), dimension_error);
}
