#include <catch2/catch_amalgamated.hpp>

#include "ctbm/learning_example.hpp"
#include "ctbm/logic.hpp"

#include <cmath>
#include <random>

using namespace ctbm;
using Catch::Approx;
namespace F = ctbm::formula;

namespace {

MetricConfig example_config() {
    MetricConfig cfg;
    cfg.discount = std::exp(-1.0);
    return cfg;
}

StatePtr random_state_formula(std::mt19937_64& rng, int depth, bool allow_integral);

TrajectoryPtr random_trajectory_formula(std::mt19937_64& rng, int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 0 : 4);
    const double q = std::uniform_int_distribution<int>(1, 8)(rng) / 8.0;
    const double t = std::uniform_int_distribution<int>(0, 40)(rng) / 16.0;
    switch (pick(rng)) {
    case 1: return F::min(random_trajectory_formula(rng, depth - 1), random_trajectory_formula(rng, depth - 1));
    case 2: return F::max(random_trajectory_formula(rng, depth - 1), random_trajectory_formula(rng, depth - 1));
    case 3: return F::minus(random_trajectory_formula(rng, depth - 1), q);
    case 4: return F::plus(random_trajectory_formula(rng, depth - 1), q);
    default: return F::eval_at(random_state_formula(rng, depth - 1, true), t);
    }
}

StatePtr random_state_formula(std::mt19937_64& rng, int depth, bool allow_integral) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : (allow_integral ? 8 : 7));
    const double q = std::uniform_int_distribution<int>(0, 8)(rng) / 8.0;
    const double t = std::uniform_int_distribution<int>(1, 40)(rng) / 16.0;
    switch (pick(rng)) {
    case 0: return F::constant(q);
    case 1: return F::obs();
    case 2: return F::min(random_state_formula(rng, depth - 1, allow_integral), random_state_formula(rng, depth - 1, allow_integral));
    case 3: return F::max(random_state_formula(rng, depth - 1, allow_integral), random_state_formula(rng, depth - 1, allow_integral));
    case 4: return F::negate(random_state_formula(rng, depth - 1, allow_integral));
    case 5: return F::minus(random_state_formula(rng, depth - 1, allow_integral), q);
    case 6: return F::plus(random_state_formula(rng, depth - 1, allow_integral), q);
    case 7: return F::diamond(t, random_state_formula(rng, depth - 1, allow_integral));
    default: return F::integral(random_trajectory_formula(rng, depth - 1));
    }
}

} // namespace

TEST_CASE("numbers print in shortest round-trip form", "[logic]") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(0.25) == "0.25");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(1e-5) == "1e-05");
}

TEST_CASE("printing and parsing round-trip", "[logic]") {
    for (const char* text : {"obs", "0.25", "1-obs", "<0.5> obs", "min(obs, 0.5)", "max(1-obs, <1> obs)", "obs (-) 0.25",
                             "obs (+) 0.125", "1-(obs (-) 0.5)", "<2> (obs (+) 0.5)", "int(obs @ 0.5)", "int(max(obs @ 0, 1-obs @ 1.5))",
                             "int(obs @ 1 (-) 0.25)", "<0.75> 1-<0.25> obs"}) {
        INFO(text);
        const StatePtr f = parse_state_formula(text);
        CHECK(to_string(*f) == text);
        CHECK(*parse_state_formula(to_string(*f)) == *f);
    }
}

TEST_CASE("random formulas survive a print/parse cycle", "[logic]") {
    std::mt19937_64 rng(99);
    for (int k = 0; k < 500; ++k) {
        const StatePtr f = random_state_formula(rng, 4, true);
        INFO(to_string(*f));
        CHECK(*parse_state_formula(to_string(*f)) == *f);
    }
    for (int k = 0; k < 200; ++k) {
        const TrajectoryPtr g = random_trajectory_formula(rng, 3);
        INFO(to_string(*g));
        CHECK(*parse_trajectory_formula(to_string(*g)) == *g);
    }
}

TEST_CASE("malformed formulas are rejected with an offset", "[logic]") {
    CHECK_THROWS_AS(parse_state_formula("min(obs"), parse_error);
    CHECK_THROWS_AS(parse_state_formula("obs obs"), parse_error);
    CHECK_THROWS_AS(parse_state_formula("obs @ 1"), parse_error);
    CHECK_THROWS_AS(parse_trajectory_formula("obs"), parse_error);
    CHECK_THROWS_AS(parse_state_formula("<-1> obs"), parse_error);
    CHECK_THROWS_AS(parse_state_formula("1.5"), parse_error);
    CHECK_THROWS_AS(parse_state_formula("min(obs, obs @ 1)"), parse_error);
    CHECK_THROWS_AS(parse_state_formula("int(obs)"), parse_error);
    try {
        parse_state_formula("max(obs, ?)");
        FAIL("expected a parse_error");
    } catch (const parse_error& e) {
        CHECK(e.offset() == 9);
    }
}

TEST_CASE("constructors check their arguments", "[logic]") {
    CHECK_THROWS_AS(F::constant(-0.1), config_error);
    CHECK_THROWS_AS(F::constant(1.1), config_error);
    CHECK_THROWS_AS(F::diamond(-1.0, F::obs()), config_error);
    CHECK(depth(*parse_state_formula("<1> min(obs, 1-obs)")) == 3);
    CHECK(depth(*parse_state_formula("obs")) == 0);
}

TEST_CASE("dialects restrict the operators", "[logic]") {
    const StatePtr diamond = parse_state_formula("<1> obs");
    const StatePtr integral = parse_state_formula("int(obs @ 1)");
    CHECK_NOTHROW(check_dialect(*diamond, Dialect::lambda));
    CHECK_THROWS_AS(check_dialect(*diamond, Dialect::sigma), dialect_error);
    CHECK_NOTHROW(check_dialect(*integral, Dialect::sigma));
    CHECK_THROWS_AS(check_dialect(*integral, Dialect::lambda), dialect_error);
}

TEST_CASE("derived operators expand without changing values", "[logic]") {
    const ProcessSpec spec = learning_example(0.3);
    Evaluator ev(spec, example_config());
    std::mt19937_64 rng(4);
    for (int k = 0; k < 100; ++k) {
        const StatePtr f = random_state_formula(rng, 3, false);
        const auto original = ev.values(*f);
        const auto expanded = ev.values(*expand_derived(f, Dialect::lambda));
        for (std::size_t s = 0; s < spec.size(); ++s) CHECK(expanded[s] == Approx(original[s]).margin(1e-12));
    }
    const StatePtr m = parse_state_formula("min(obs, 0.4) (-) 0.125");
    const StatePtr sigma = expand_derived(m, Dialect::sigma);
    CHECK_NOTHROW(check_dialect(*sigma, Dialect::sigma));
    const auto a = ev.values(*m), b = ev.values(*sigma);
    for (std::size_t s = 0; s < spec.size(); ++s) CHECK(b[s] == Approx(a[s]).margin(1e-12));
}

TEST_CASE("evaluation of the basic operators", "[logic]") {
    const ProcessSpec spec = learning_example(0.5);
    Evaluator ev(spec, example_config());
    CHECK(ev.values(*F::obs()) == spec.obs);
    CHECK(ev.eval_state(*parse_state_formula("0.25"), 1) == 0.25);
    CHECK(ev.values(*parse_state_formula("1-obs")) == std::vector<double>{0.0, 0.5, 0.5, 0.5, 1.0});
    CHECK(ev.values(*parse_state_formula("obs (-) 0.75")) == std::vector<double>{0.25, 0.0, 0.0, 0.0, 0.0});
    CHECK(ev.values(*parse_state_formula("obs (+) 0.75")) == std::vector<double>{1.0, 1.0, 1.0, 1.0, 0.75});
    CHECK(ev.values(*parse_state_formula("max(obs, 0.75)")) == std::vector<double>{1.0, 0.75, 0.75, 0.75, 0.75});
}

TEST_CASE("diamond uses the discounted kernel", "[logic]") {
    // <t> obs at x is c^t ((1 - e^{-t}) + e^{-t} r) for lambda = 1.
    const double r = 0.3;
    Evaluator ev(learning_example(r), example_config());
    for (double t : {0.1, 0.6931, 2.0}) {
        const auto v = ev.values(*F::diamond(t, F::obs()));
        const double c_t = std::exp(-t);
        CHECK(v[1] == Approx(c_t * ((1 - c_t) + c_t * r)).margin(1e-12));
        CHECK(v[2] == Approx(c_t * r).margin(1e-12));
        CHECK(v[3] == Approx(c_t * (0.5 * (1 - c_t) + c_t * r)).margin(1e-12));
    }
}

TEST_CASE("integrals average over the sample bank", "[logic]") {
    const double r = 0.3, t = 1.0;
    Evaluator ev(learning_example(r), example_config());
    const auto v = ev.values(*parse_state_formula("int(obs @ 1)"));
    const double c_t = std::exp(-t);
    CHECK(v[1] == Approx(c_t * ((1 - c_t) + c_t * r)).margin(2e-3));
    CHECK(v[2] == Approx(c_t * r).margin(1e-12));
    const Trajectory w{1, {{0.5, 0}}, 20.0};
    CHECK(ev.eval_trajectory(*parse_trajectory_formula("obs @ 1"), w) == Approx(c_t));
    CHECK(ev.eval_trajectory(*parse_trajectory_formula("obs @ 0.25"), w) == Approx(std::exp(-0.25) * r));
}

TEST_CASE("the log-spaced time grid", "[logic]") {
    const double horizon = example_config().horizon();
    const auto times = log_time_grid(16, 1.0 / 64.0, horizon);
    REQUIRE(times.size() == 16);
    CHECK(times[0] == 0.0);
    CHECK(times[1] == 0.0156);
    CHECK(times[15] == Approx(horizon).margin(5e-5));
    CHECK(times[9] == Approx(0.7544).margin(1e-4));
    for (std::size_t k = 1; k < times.size(); ++k) CHECK(times[k] > times[k - 1]);
    CHECK_THROWS_AS(log_time_grid(1, 0.1, 1.0), config_error);
}

TEST_CASE("enumerated formulas stay below the kernel distance", "[logic]") {
    const double r = 0.5;
    Evaluator ev(learning_example(r), example_config());
    EnumerationConfig ec;
    ec.depth = 2;
    const auto spread = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()); };
    const EnumerationResult result = enumerate_formulas(ev, ec, spread);
    CHECK_FALSE(result.formulas.empty());
    const Matrix table = kernel_limit_table(r);
    for (const auto& e : result.formulas) {
        CHECK(e.values == ev.values(*e.formula));
        for (StateIndex a = 0; a < 5; ++a)
            for (StateIndex b = 0; b < 5; ++b) CHECK(std::abs(e.values[a] - e.values[b]) <= table(a, b) + 1e-9);
    }
}

TEST_CASE("distance bounds and their witnesses", "[logic]") {
    Evaluator ev(learning_example(0.5), example_config());
    EnumerationConfig ec;
    ec.depth = 3;
    const DistanceBound xy = logic_distance_bound(ev, 1, 2, ec);
    CHECK(xy.value >= 0.125 - 1e-9);
    CHECK(xy.value <= 0.25 + 1e-9);
    const auto w = ev.values(*xy.witness);
    CHECK(std::abs(w[1] - w[2]) == Approx(xy.value).margin(1e-15));
    CHECK(*parse_state_formula(to_string(*xy.witness)) == *xy.witness);

    const DistanceBound same = logic_distance_bound(ev, 3, 3, ec);
    CHECK(same.value == 0.0);
    CHECK(to_string(*same.witness) == "0");

    const DistanceBound zd = logic_distance_bound(ev, 0, 4, ec);
    CHECK(zd.value == 1.0);

    ec.depth = 6;
    CHECK_THROWS_AS(logic_distance_bound(ev, 1, 2, ec), budget_exceeded);
    CHECK_THROWS_AS(logic_distance_bound(ev, 1, 7, EnumerationConfig{}), dimension_error);
}

TEST_CASE("sigma bounds use integrals only", "[logic]") {
    const double r = 0.5;
    Evaluator ev(learning_example(r), example_config());
    EnumerationConfig ec;
    ec.dialect = Dialect::sigma;
    ec.depth = 2;
    ec.level_cap = 400;
    ec.pair_pool = 8;
    const DistanceBound xz = logic_distance_bound(ev, 1, 3, ec);
    CHECK(xz.value > 0.0);
    CHECK(xz.value <= trajectory_limit_table(r)(1, 3) + 0.03);
    CHECK_THROWS_AS(check_dialect(*xz.witness, Dialect::lambda), dialect_error);
}
