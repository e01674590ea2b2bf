#include <catch2/catch_amalgamated.hpp>

#include "ctbm/transport.hpp"
#include "support.hpp"

using namespace ctbm;
using Catch::Approx;

namespace {

Matrix discrete_metric(std::size_t n) { return PseudometricMatrix::discrete(n).matrix(); }

} // namespace

TEST_CASE("identical distributions cost nothing", "[transport]") {
    const std::vector<double> mu{0.2, 0.3, 0.5};
    const TransportPlan plan = solve_ot(mu, mu, discrete_metric(3));
    CHECK(plan.value == Approx(0.0).margin(1e-15));
    for (std::size_t i = 0; i < 3; ++i) CHECK(plan.plan(i, i) == Approx(mu[i]).margin(1e-15));
}

TEST_CASE("point masses have a unique coupling", "[transport]") {
    std::mt19937_64 rng(7);
    const Matrix cost = testing::random_cost(rng, 4, 3);
    const std::vector<double> mu{0, 0, 1, 0};
    const std::vector<double> nu{0, 1, 0};
    CHECK(solve_ot(mu, nu, cost).value == cost(2, 1));
}

TEST_CASE("half mass moved under the discrete metric", "[transport]") {
    // Couplings of (1/2,1/2) and (1,0) are forced to put 1/2 on (1,0).
    const std::vector<double> mu{0.5, 0.5};
    const std::vector<double> nu{1.0, 0.0};
    CHECK(solve_ot(mu, nu, discrete_metric(2)).value == Approx(0.5).margin(1e-15));
    const DualPotentials dual = dual_certificate(mu, nu, discrete_metric(2));
    CHECK(dual.objective == Approx(0.5).margin(1e-12));
}

TEST_CASE("dimension mismatch is rejected", "[transport]") {
    const std::vector<double> mu{0.5, 0.5};
    const std::vector<double> nu{0.2, 0.3, 0.5};
    CHECK_THROWS_AS(solve_ot(mu, nu, Matrix(2, 2)), dimension_error);
}

TEST_CASE("dual certificate rejects a non-metric cost", "[transport]") {
    Matrix c(2, 2);
    c(0, 1) = 0.3;
    c(1, 0) = 0.4;
    const std::vector<double> mu{0.5, 0.5};
    CHECK_THROWS_AS(dual_certificate(mu, mu, c), not_a_pseudometric);
}

TEST_CASE("point masses saturate the dual Lipschitz constraint", "[transport]") {
    std::mt19937_64 rng(11);
    const PseudometricMatrix m = testing::random_pseudometric(rng, 5);
    const std::vector<double> mu{0, 1, 0, 0, 0};
    const std::vector<double> nu{0, 0, 0, 1, 0};
    const DualPotentials dual = dual_certificate(mu, nu, m.matrix());
    CHECK(dual.potential[1] - dual.potential[3] == Approx(m(1, 3)).margin(1e-12));
}

TEST_CASE("solver matches basic-solution enumeration on small instances", "[transport][oracle]") {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::size_t> size(1, 4);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = size(rng), m = size(rng);
        const auto a = testing::random_distribution(rng, n, 0.2);
        const auto b = testing::random_distribution(rng, m, 0.2);
        const Matrix cost = testing::random_cost(rng, n, m);
        const TransportPlan plan = solve_ot(a, b, cost);
        CHECK(plan.value == Approx(testing::brute_force_transport(a, b, cost)).margin(1e-12));
        CHECK(testing::marginal_residual(plan.plan, a, b) <= 1e-10);
        CHECK(std::abs(testing::weighted_sum(plan.plan, cost) - plan.value) <= 1e-10);
    }
}

TEST_CASE("strong duality on larger pseudometric instances", "[transport][duality]") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 16 + trial;
        const PseudometricMatrix m = testing::random_pseudometric(rng, n);
        const auto a = testing::random_distribution(rng, n, 0.1);
        const auto b = testing::random_distribution(rng, n, 0.1);
        const TransportPlan plan = solve_ot(a, b, m.matrix());
        const DualPotentials dual = dual_certificate(a, b, m.matrix());
        CHECK(std::abs(plan.value - dual.objective) <= 1e-9);
        for (double h : dual.potential) {
            CHECK(h >= 0.0);
            CHECK(h <= 1.0);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(std::abs(dual.potential[i] - dual.potential[j]) <= m(i, j) + 1e-12);
    }
}

TEST_CASE("transport cost is monotone in the cost matrix", "[transport]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix lo = testing::random_cost(rng, 5, 6);
        Matrix hi = lo;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 6; ++j) hi(i, j) = lo(i, j) + (1.0 - lo(i, j)) * u(rng);
        const auto a = testing::random_distribution(rng, 5);
        const auto b = testing::random_distribution(rng, 6);
        CHECK(solve_ot(a, b, lo).value <= solve_ot(a, b, hi).value + 1e-12);
    }
}

TEST_CASE("scaled cost chain scales the value", "[transport]") {
    std::mt19937_64 rng(3);
    const PseudometricMatrix c = testing::random_pseudometric(rng, 6);
    const auto a = testing::random_distribution(rng, 6);
    const auto b = testing::random_distribution(rng, 6);
    const int K = 8;
    std::vector<Matrix> chain;
    for (int k = 1; k <= K; ++k) {
        Matrix s = c.matrix();
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) s(i, j) *= static_cast<double>(k) / K;
        chain.push_back(s);
    }
    const auto values = monotone_cost_limit_check(a, b, chain);
    const double full = solve_ot(a, b, c.matrix()).value;
    for (int k = 1; k <= K; ++k) CHECK(values[k - 1] == Approx(full * k / K).margin(1e-12));

    std::vector<Matrix> constant(3, c.matrix());
    const auto flat = monotone_cost_limit_check(a, b, constant);
    CHECK(flat[0] == flat[2]);

    std::swap(chain[0], chain[5]);
    CHECK_THROWS_AS(monotone_cost_limit_check(a, b, chain), config_error);
}

TEST_CASE("empirical transport", "[transport][empirical]") {
    const auto cost = [](const Trajectory& x, const Trajectory& y) {
        return x == y ? 0.0 : std::min(1.0, std::abs(static_cast<double>(x.initial) - static_cast<double>(y.initial)) / 4.0 + 0.1);
    };
    std::vector<Trajectory> a{constant_trajectory(0, 1.0), constant_trajectory(1, 1.0), constant_trajectory(3, 1.0)};
    CHECK(empirical_ot(a, a, cost).value == Approx(0.0).margin(1e-15));

    const std::vector<Trajectory> one{constant_trajectory(0, 1.0)};
    const std::vector<Trajectory> other{constant_trajectory(2, 1.0)};
    CHECK(empirical_ot(one, other, cost).value == cost(one[0], other[0]));

    // Duplicates are merged but the plan keeps the original indexing.
    std::vector<Trajectory> dup{constant_trajectory(1, 1.0), constant_trajectory(1, 1.0), constant_trajectory(2, 1.0),
                                constant_trajectory(2, 1.0)};
    const TransportPlan plan = empirical_ot(a, dup, cost);
    CHECK(plan.plan.rows() == 3);
    CHECK(plan.plan.cols() == 4);
    CHECK(testing::marginal_residual(plan.plan, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.25, 0.25, 0.25, 0.25}) <= 1e-12);
}

TEST_CASE("equal-weight assignment at sample scale", "[transport][empirical]") {
    std::mt19937_64 rng(42);
    const std::size_t n = 256;
    Matrix cost = testing::random_cost(rng, n, n);
    const std::vector<double> w(n, 1.0 / n);
    const TransportPlan plan = solve_ot(w, w, cost);
    CHECK(testing::marginal_residual(plan.plan, w, w) <= 1e-10);
    // An assignment optimum cannot beat the row-minimum lower bound.
    double lower = 0.0;
    for (std::size_t i = 0; i < n; ++i) lower += *std::min_element(cost.row(i).begin(), cost.row(i).end()) / n;
    CHECK(plan.value >= lower - 1e-12);
}
