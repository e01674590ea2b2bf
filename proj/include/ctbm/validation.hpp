#pragma once

// End-to-end checks on the learning example and on random transport
// instances. Used by the `validate-example` command and the acceptance suite.

#include "ctbm/kernel_metric.hpp"
#include "ctbm/learning_example.hpp"
#include "ctbm/logic.hpp"
#include "ctbm/matrix_io.hpp"
#include "ctbm/pseudometric.hpp"
#include "ctbm/trajectory_metric.hpp"
#include "ctbm/transport.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ctbm::validation {

struct CheckResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

template <class Body>
CheckResult timed(int id, std::string name, Body&& body) {
    CheckResult res;
    res.id = id;
    res.name = std::move(name);
    const auto start = std::chrono::steady_clock::now();
    try {
        body(res);
    } catch (const std::exception& e) {
        res.pass = false;
        res.detail = std::string("exception: ") + e.what();
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

inline std::string pair_name(const ProcessSpec& spec, StateIndex a, StateIndex b) {
    return "(" + spec.states[a] + "," + spec.states[b] + ")";
}

// Collects failures and the worst deviation seen.
struct Tally {
    bool ok = true;
    double worst = 0.0;
    std::string first_failure;

    void check(bool good, double deviation, const std::string& what) {
        worst = std::max(worst, deviation);
        if (!good && ok) first_failure = what;
        ok = ok && good;
    }

    void finish(CheckResult& res, const std::string& summary) const {
        res.pass = ok;
        res.detail = summary + (ok ? "" : "; first failure: " + first_failure);
    }
};

inline std::vector<double> random_weights(std::mt19937_64& rng, std::size_t n, double zero_probability) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(n);
    double total = 0.0;
    for (double& x : w) {
        x = u(rng) < zero_probability ? 0.0 : u(rng) + 1e-3;
        total += x;
    }
    if (total == 0.0) {
        w[0] = 1.0;
        total = 1.0;
    }
    for (double& x : w) x /= total;
    return w;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix c(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) c(i, j) = u(rng);
    return c;
}

inline PseudometricMatrix random_metric(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix raw(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) raw(i, j) = raw(j, i) = u(rng);
    return metric_closure(raw);
}

// Minimum over all basic feasible solutions of the transportation polytope.
inline double enumerate_basic_solutions(const std::vector<double>& a, const std::vector<double>& b, const Matrix& cost) {
    const std::size_t n = a.size(), m = b.size(), cells = n * m, need = n + m - 1;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(need);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == need) {
            std::vector<std::size_t> parent(n + m);
            std::iota(parent.begin(), parent.end(), std::size_t{0});
            std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
            for (std::size_t cell : pick) {
                const std::size_t r = find(cell / m), c = find(n + cell % m);
                if (r == c) return;
                parent[r] = c;
            }
            std::vector<double> rem(n + m);
            for (std::size_t i = 0; i < n; ++i) rem[i] = a[i];
            for (std::size_t j = 0; j < m; ++j) rem[n + j] = b[j];
            std::vector<char> used(need, 0);
            std::vector<double> flow(need, 0.0);
            for (std::size_t round = 0; round < need; ++round) {
                bool progressed = false;
                for (std::size_t node = 0; node < n + m && !progressed; ++node) {
                    std::size_t deg = 0, edge = 0;
                    for (std::size_t k = 0; k < need; ++k) {
                        if (used[k]) continue;
                        if (pick[k] / m == node || n + pick[k] % m == node) ++deg, edge = k;
                    }
                    if (deg != 1) continue;
                    const std::size_t cell = pick[edge];
                    const std::size_t other = cell / m == node ? n + cell % m : cell / m;
                    flow[edge] = rem[node];
                    rem[other] -= rem[node];
                    rem[node] = 0.0;
                    used[edge] = 1;
                    progressed = true;
                }
                if (!progressed) return;
            }
            double value = 0.0;
            for (std::size_t k = 0; k < need; ++k) {
                if (flow[k] < -1e-13) return;
                value += flow[k] * cost(pick[k] / m, pick[k] % m);
            }
            best = std::min(best, value);
            return;
        }
        for (std::size_t c = start; c + (need - depth) <= cells; ++c) {
            pick[depth] = c;
            rec(c + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

inline double marginal_residual(const Matrix& plan, const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < plan.cols(); ++j) s += plan(i, j);
        worst = std::max(worst, std::abs(s - a[i]));
    }
    for (std::size_t j = 0; j < plan.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < plan.rows(); ++i) s += plan(i, j);
        worst = std::max(worst, std::abs(s - b[j]));
    }
    return worst;
}

// Piecewise-constant path over `states` states with jumps at multiples of `step`.
inline Trajectory random_path(std::mt19937_64& rng, std::size_t states, double horizon, double step) {
    std::uniform_int_distribution<std::size_t> pick_state(0, states - 1);
    std::uniform_int_distribution<int> jump_count(0, 5);
    const auto slots = static_cast<std::size_t>(std::llround(horizon / step));
    std::uniform_int_distribution<std::size_t> pick_slot(1, slots - 1);
    Trajectory w = constant_trajectory(pick_state(rng), horizon);
    std::vector<std::size_t> at;
    for (int k = jump_count(rng); k > 0; --k) at.push_back(pick_slot(rng));
    std::sort(at.begin(), at.end());
    at.erase(std::unique(at.begin(), at.end()), at.end());
    StateIndex s = w.initial;
    for (std::size_t slot : at) {
        StateIndex next = pick_state(rng);
        if (next == s) next = (next + 1) % states;
        if (states == 1) break;
        w.jumps.push_back({static_cast<double>(slot) * step, next});
        s = next;
    }
    return w;
}

} // namespace detail

struct Options {
    MetricConfig metric;         // discount is overridden by e^{-lambda}
    SamplingConfig sampling;
    std::uint64_t seed = 7;      // random property instances
    std::size_t logic_depth = 4;
    std::size_t sigma_depth = 4;
};

// Kernel fixpoint against the closed-form table.
inline CheckResult check_delta_table(const std::vector<double>& rs, double lambda, const Options& opt) {
    return detail::timed(1, "kernel distance table", [&](CheckResult& res) {
        detail::Tally tally;
        double slowest = 0.0;
        for (double r : rs) {
            const auto start = std::chrono::steady_clock::now();
            const ProcessSpec spec = learning_example(r, lambda);
            MetricConfig cfg = opt.metric;
            cfg.discount = std::exp(-lambda);
            const auto [delta, report] = fixpoint_delta(spec, cfg);
            const Matrix table = kernel_limit_table(r);
            const ExampleLayout L;
            for (StateIndex a = 0; a < 5; ++a)
                for (StateIndex b = a + 1; b < 5; ++b) {
                    const std::string where = "r=" + detail::fmt(r) + " " + detail::pair_name(spec, a, b);
                    const double ext = report.extrapolated(a, b), raw = delta(a, b);
                    if ((a == L.x && b == L.z) || (a == L.z && b == L.x)) {
                        tally.check(ext >= kernel_xz_lower - 0.01 && ext <= kernel_xz_upper + 0.01, 0.0,
                                    where + " = " + detail::fmt(ext) + " outside [1/8,1/4] +- 0.01");
                        continue;
                    }
                    const double dev = std::abs(ext - table(a, b));
                    tally.check(dev <= 0.01, dev, where + " extrapolated " + detail::fmt(ext) + " vs " + detail::fmt(table(a, b)));
                    tally.check(std::abs(raw - table(a, b)) <= 0.02, dev, where + " raw " + detail::fmt(raw) + " vs " + detail::fmt(table(a, b)));
                }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            slowest = std::max(slowest, secs);
            tally.check(secs <= 60.0, 0.0, "r=" + detail::fmt(r) + " took " + detail::fmt(secs) + " s");
        }
        tally.finish(res, "worst deviation " + detail::fmt(tally.worst) + ", slowest r " + detail::fmt(slowest) + " s");
    });
}

// Exact recurrence for the trajectory distance, iterated 200 times.
inline CheckResult check_oracle_iteration(double r, double lambda) {
    return detail::timed(2, "trajectory recurrence", [&](CheckResult& res) {
        const ExampleParams p{r, lambda};
        const ExampleLayout L;
        const auto it = example_oracle_iterates(p, 200, L);
        detail::Tally tally;
        const auto& d0 = it.front();
        for (std::size_t n = 0; n < it.size(); ++n) {
            const auto& d = it[n];
            for (auto [a, b] : {std::pair{L.y, L.dead}, std::pair{L.x, L.zero}, std::pair{L.zero, L.dead}, std::pair{L.zero, L.y}})
                tally.check(d(a, b) == d0(a, b), 0.0, "entry changed at iteration " + std::to_string(n));
            if (n > 0)
                for (StateIndex a = 0; a < 5; ++a)
                    for (StateIndex b = 0; b < 5; ++b)
                        tally.check(d(a, b) >= it[n - 1](a, b), 0.0, "decrease at iteration " + std::to_string(n));
        }
        const auto& last = it.back();
        for (auto [a, b] : {std::pair{L.x, L.dead}, std::pair{L.z, L.zero}, std::pair{L.z, L.dead}})
            tally.check(last(a, b) >= 0.98, 1.0 - last(a, b), "entry " + detail::fmt(last(a, b)) + " below 0.98");
        const double xy = 1.0 - r, yz = std::max(r, 1.0 - r);
        tally.check(std::abs(last(L.x, L.y) - xy) <= 0.02, std::abs(last(L.x, L.y) - xy), "(x,y) " + detail::fmt(last(L.x, L.y)));
        tally.check(std::abs(last(L.y, L.z) - yz) <= 0.02, std::abs(last(L.y, L.z) - yz), "(y,z) " + detail::fmt(last(L.y, L.z)));
        tally.check(d0(L.y, L.dead) == r && d0(L.zero, L.dead) == 1.0, 0.0, "unexpected starting metric");
        tally.finish(res, "r=" + detail::fmt(r) + ", worst limit deviation " + detail::fmt(tally.worst));
    });
}

// Empirical G iterates against the exact recurrence, first five iterations.
inline CheckResult check_empirical_vs_oracle(const std::vector<double>& rs, double lambda, const Options& opt) {
    return detail::timed(3, "empirical trajectory iterates", [&](CheckResult& res) {
        detail::Tally tally;
        for (double r : rs) {
            const ExampleParams p{r, lambda};
            const ProcessSpec spec = learning_example(p);
            MetricConfig cfg = opt.metric;
            cfg.discount = p.discount();
            const SampleBank bank(spec, cfg.horizon(), opt.sampling);
            const auto oracle = example_oracle_iterates(p, 5);
            PseudometricMatrix m = obs_metric(spec);
            for (std::size_t n = 1; n <= 5; ++n) {
                m = apply_G_empirical(spec, m, cfg, bank, opt.sampling.reps);
                for (StateIndex a = 0; a < 5; ++a)
                    for (StateIndex b = a + 1; b < 5; ++b) {
                        if (oracle_entry_is_bound({}, a, b)) {
                            tally.check(m(a, b) <= oracle[n](a, b) + 0.03, 0.0, "(x,z) above its triangle bound");
                            continue;
                        }
                        const double dev = std::abs(m(a, b) - oracle[n](a, b));
                        tally.check(dev <= 0.03, dev,
                                    "r=" + detail::fmt(r) + " n=" + std::to_string(n) + " " + detail::pair_name(spec, a, b));
                    }
            }
        }
        tally.finish(res, "worst deviation " + detail::fmt(tally.worst) + " (samples " + std::to_string(opt.sampling.samples) +
                              ", reps " + std::to_string(opt.sampling.reps) + ")");
    });
}

// delta-bar <= d-bar on every pair, through the comparison report.
inline CheckResult check_ordering(const std::vector<double>& rs, double lambda, const Options& opt) {
    return detail::timed(4, "ordering of the two distances", [&](CheckResult& res) {
        detail::Tally tally;
        std::size_t violations = 0;
        for (double r : rs) {
            const ProcessSpec spec = learning_example(r, lambda);
            MetricConfig cfg = opt.metric;
            cfg.discount = std::exp(-lambda);
            const auto [delta, report] = fixpoint_delta(spec, cfg);
            MatrixDocument kernel = make_document(spec.states, report, EstimatorKind::exact_kernel, cfg);
            const auto [d, oracle_report] = oracle_fixpoint(ExampleMatch{{r, lambda}, {}}, cfg);
            MatrixDocument traj = make_document(spec.states, oracle_report, EstimatorKind::oracle, cfg);
            check_document(kernel);
            check_document(traj);
            const ComparisonReport cmp = compare_matrices(kernel, traj, 0.01);
            violations += cmp.violations();
            for (const auto& pc : cmp.pairs)
                tally.check(!pc.violation, std::max(0.0, -pc.gap), "r=" + detail::fmt(r) + " (" + pc.a + "," + pc.b + ")");
        }
        tally.finish(res, std::to_string(violations) + " violations, largest excess " + detail::fmt(tally.worst));
    });
}

inline CheckResult check_transport(std::uint64_t seed) {
    return detail::timed(5, "transport solver", [&](CheckResult& res) {
        std::mt19937_64 rng(seed);
        detail::Tally tally;
        std::uniform_int_distribution<std::size_t> small(1, 4), large(1, 64);
        double worst_gap = 0.0, worst_residual = 0.0;
        for (int k = 0; k < 100; ++k) {
            const std::size_t n = small(rng), m = small(rng);
            const auto a = detail::random_weights(rng, n, 0.2);
            const auto b = detail::random_weights(rng, m, 0.2);
            const Matrix c = detail::random_matrix(rng, n, m);
            const double brute = detail::enumerate_basic_solutions(a, b, c);
            const double dev = std::abs(solve_ot(a, b, c).value - brute);
            tally.check(dev <= 1e-12, dev, "small instance " + std::to_string(k));
        }
        for (int k = 0; k < 100; ++k) {
            const std::size_t n = large(rng);
            const PseudometricMatrix metric = detail::random_metric(rng, n);
            const auto a = detail::random_weights(rng, n, 0.1);
            const auto b = detail::random_weights(rng, n, 0.1);
            const TransportPlan plan = solve_ot(a, b, metric.matrix());
            const DualPotentials dual = dual_certificate(a, b, metric.matrix());
            const double gap = std::abs(plan.value - dual.objective);
            const double residual = detail::marginal_residual(plan.plan, a, b);
            worst_gap = std::max(worst_gap, gap);
            worst_residual = std::max(worst_residual, residual);
            tally.check(gap <= 1e-9, 0.0, "duality gap " + detail::fmt(gap) + " on instance " + std::to_string(k));
            tally.check(residual <= 1e-10, 0.0, "marginal residual " + detail::fmt(residual) + " on instance " + std::to_string(k));
        }
        tally.finish(res, "worst enumeration deviation " + detail::fmt(tally.worst) + ", duality gap " + detail::fmt(worst_gap) +
                              ", marginal residual " + detail::fmt(worst_residual));
    });
}

// Every emitted matrix is a pseudometric; W(m) obeys the triangle inequality.
inline CheckResult check_pseudometrics(const std::vector<double>& rs, double lambda, const Options& opt) {
    return detail::timed(6, "pseudometric properties", [&](CheckResult& res) {
        detail::Tally tally;
        std::size_t checked = 0;
        const auto audit = [&](const Matrix& m, const std::string& what) {
            const MetricCheck c = check_pseudometric(m, 1e-12);
            ++checked;
            tally.check(c.ok(), c.worst_triangle_excess, what + ": " + c.describe());
        };
        for (double r : rs) {
            const ExampleParams p{r, lambda};
            const ProcessSpec spec = learning_example(p);
            MetricConfig cfg = opt.metric;
            cfg.discount = p.discount();
            cfg.keep_iterates = true;
            const auto [delta, report] = fixpoint_delta(spec, cfg);
            for (const auto& m : report.iterates) audit(m.matrix(), "kernel iterate r=" + detail::fmt(r));
            for (const auto& m : example_oracle_iterates(p, 200)) audit(m.matrix(), "oracle iterate r=" + detail::fmt(r));
            MetricConfig short_cfg = cfg;
            short_cfg.max_iterations = 5;
            const auto [d, trep] = fixpoint_d(spec, short_cfg, opt.sampling);
            for (const auto& m : trep.iterates) audit(m.matrix(), "empirical iterate r=" + detail::fmt(r));
            audit(trajectory_limit_table(r), "trajectory table r=" + detail::fmt(r));
            audit(kernel_limit_table(r), "kernel table r=" + detail::fmt(r));
        }
        std::mt19937_64 rng(opt.seed + 6);
        std::uniform_int_distribution<std::size_t> size(2, 8);
        double worst_w = 0.0;
        for (int k = 0; k < 200; ++k) {
            const std::size_t n = size(rng);
            const PseudometricMatrix m = detail::random_metric(rng, n);
            const auto p = detail::random_weights(rng, n, 0.2), q = detail::random_weights(rng, n, 0.2),
                       s = detail::random_weights(rng, n, 0.2);
            const double pq = solve_ot(p, q, m.matrix()).value, qs = solve_ot(q, s, m.matrix()).value,
                         ps = solve_ot(p, s, m.matrix()).value, qp = solve_ot(q, p, m.matrix()).value;
            worst_w = std::max(worst_w, ps - pq - qs);
            tally.check(ps <= pq + qs + 1e-9, 0.0, "W triangle inequality on triple " + std::to_string(k));
            tally.check(std::abs(pq - qp) <= 1e-12, 0.0, "W symmetry on triple " + std::to_string(k));
        }
        tally.finish(res, std::to_string(checked) + " matrices, worst triangle excess " + detail::fmt(tally.worst) +
                              ", worst W excess " + detail::fmt(worst_w));
    });
}

// Costs c_k = c - (c - c_0) 2^{-k} increase to c; W(c_k) must increase to W(c).
inline CheckResult check_monotone_limit(std::uint64_t seed) {
    return detail::timed(7, "monotone cost limit", [&](CheckResult& res) {
        std::mt19937_64 rng(seed + 7);
        std::uniform_int_distribution<std::size_t> size(1, 8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        detail::Tally tally;
        for (int k = 0; k < 50; ++k) {
            const std::size_t n = size(rng), m = size(rng);
            const auto a = detail::random_weights(rng, n, 0.1), b = detail::random_weights(rng, m, 0.1);
            const Matrix limit = detail::random_matrix(rng, n, m);
            Matrix start = limit;
            for (std::size_t i = 0; i < n; ++i)
                for (double& v : start.row(i)) v *= u(rng);
            std::vector<Matrix> chain;
            for (int step = 0; step <= 60; ++step) {
                Matrix c(n, m);
                const double w = std::ldexp(1.0, -step);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) c(i, j) = limit(i, j) - (limit(i, j) - start(i, j)) * w;
                chain.push_back(std::move(c));
            }
            const auto values = monotone_cost_limit_check(a, b, chain);
            for (std::size_t s = 1; s < values.size(); ++s)
                tally.check(values[s] >= values[s - 1] - 1e-12, values[s - 1] - values[s], "decrease in chain " + std::to_string(k));
            const double target = solve_ot(a, b, limit).value;
            tally.check(std::abs(values.back() - target) <= 1e-9, std::abs(values.back() - target), "limit mismatch in chain " + std::to_string(k));
        }
        tally.finish(res, "50 chains, worst deviation " + detail::fmt(tally.worst));
    });
}

// Breakpoint evaluation of U_c against a dense time grid. Jumps are placed on
// grid multiples, so the grid sees every breakpoint.
inline CheckResult check_uniform_cost(std::uint64_t seed, double discount) {
    return detail::timed(8, "discounted uniform cost", [&](CheckResult& res) {
        std::mt19937_64 rng(seed + 8);
        detail::Tally tally;
        const std::size_t states = 6;
        const double horizon = 10.0, step = 1e-4 * horizon;
        const auto slots = static_cast<std::size_t>(std::llround(horizon / step));
        for (int k = 0; k < 200; ++k) {
            const TrajectoryCostSpec csp{detail::random_metric(rng, states), discount};
            const Trajectory a = detail::random_path(rng, states, horizon, step);
            const Trajectory b = detail::random_path(rng, states, horizon, step);
            const double exact = uniform_cost(csp, a, b);
            double dense = 0.0;
            for (std::size_t s = 0; s <= slots; ++s) {
                const double t = static_cast<double>(s) * step;
                dense = std::max(dense, std::pow(discount, t) * csp.base(a.state_at(t), b.state_at(t)));
            }
            tally.check(std::abs(exact - dense) <= 1e-9, std::abs(exact - dense), "dense grid mismatch on pair " + std::to_string(k));
        }
        double worst_triangle = 0.0;
        for (int k = 0; k < 200; ++k) {
            const TrajectoryCostSpec csp{detail::random_metric(rng, states), discount};
            const Trajectory a = detail::random_path(rng, states, horizon, step);
            const Trajectory b = detail::random_path(rng, states, horizon, step);
            const Trajectory c = detail::random_path(rng, states, horizon, step);
            const double excess = uniform_cost(csp, a, c) - uniform_cost(csp, a, b) - uniform_cost(csp, b, c);
            worst_triangle = std::max(worst_triangle, excess);
            tally.check(excess <= 1e-12, 0.0, "triangle inequality on triple " + std::to_string(k));
        }
        tally.finish(res, "worst grid deviation " + detail::fmt(tally.worst) + ", worst triangle excess " + detail::fmt(worst_triangle));
    });
}

// Enumerated formulas never separate two states by more than the distance.
inline CheckResult check_logic(const std::vector<double>& rs, double lambda, const Options& opt) {
    return detail::timed(9, "logic soundness", [&](CheckResult& res) {
        detail::Tally tally;
        double xy_bound = 0.0;
        std::string xy_witness;
        std::size_t total = 0;
        for (double r : rs) {
            const ExampleParams p{r, lambda};
            const ProcessSpec spec = learning_example(p);
            MetricConfig cfg = opt.metric;
            cfg.discount = p.discount();
            const Matrix kernel = kernel_limit_table(r);
            const Matrix trajectory = trajectory_limit_table(r);
            const ExampleLayout L;
            const auto spread = [](const std::vector<double>& v) {
                return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
            };

            Evaluator ev(spec, cfg, opt.sampling);
            EnumerationConfig lambda_cfg;
            lambda_cfg.dialect = Dialect::lambda;
            lambda_cfg.depth = opt.logic_depth;
            const EnumerationResult lam = enumerate_formulas(ev, lambda_cfg, spread);
            total += lam.formulas.size();
            for (const auto& e : lam.formulas)
                for (StateIndex a = 0; a < 5; ++a)
                    for (StateIndex b = a + 1; b < 5; ++b) {
                        const double sep = std::abs(e.values[a] - e.values[b]);
                        tally.check(sep <= kernel(a, b) + 1e-9, sep - kernel(a, b),
                                    "r=" + detail::fmt(r) + " " + to_string(*e.formula) + " on " + detail::pair_name(spec, a, b));
                    }
            const DistanceBound xy = logic_distance_bound(ev, L.x, L.y, lambda_cfg);
            if (r == 0.5) {
                xy_bound = xy.value;
                xy_witness = to_string(*xy.witness);
            }
            const double xy_target = (1.0 - r) / 4.0 - 0.001;
            tally.check(xy.value >= xy_target, 0.0, "r=" + detail::fmt(r) + " (x,y) bound " + detail::fmt(xy.value) + " below " + detail::fmt(xy_target));

            EnumerationConfig sigma_cfg;
            sigma_cfg.dialect = Dialect::sigma;
            sigma_cfg.depth = opt.sigma_depth;
            sigma_cfg.level_cap = 600;
            sigma_cfg.pair_pool = 12;
            const EnumerationResult sig = enumerate_formulas(ev, sigma_cfg, spread);
            total += sig.formulas.size();
            for (const auto& e : sig.formulas)
                for (StateIndex a = 0; a < 5; ++a)
                    for (StateIndex b = a + 1; b < 5; ++b) {
                        const double sep = std::abs(e.values[a] - e.values[b]);
                        tally.check(sep <= trajectory(a, b) + 0.03, sep - trajectory(a, b),
                                    "r=" + detail::fmt(r) + " " + to_string(*e.formula) + " on " + detail::pair_name(spec, a, b));
                    }
        }
        std::string summary = std::to_string(total) + " formulas, largest excess over the distance " + detail::fmt(tally.worst);
        if (!xy_witness.empty()) summary += ", (x,y) bound at r=0.5: " + detail::fmt(xy_bound) + " via " + xy_witness;
        tally.finish(res, summary);
    });
}

inline std::string format_result(const CheckResult& r) {
    char head[128];
    std::snprintf(head, sizeof head, "[%s] %d %-32s (%.1f s) ", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds);
    return head + r.detail;
}

// All checks for a single parameter choice, as run by `validate-example`.
inline std::vector<CheckResult> validate_example(const ExampleParams& p, const Options& opt,
                                                 const std::function<void(const CheckResult&)>& on_result = {}) {
    p.validate();
    std::vector<CheckResult> out;
    const auto record = [&](CheckResult r) {
        if (on_result) on_result(r);
        out.push_back(std::move(r));
    };
    const std::vector<double> rs{p.r};
    record(check_delta_table(rs, p.lambda, opt));
    record(check_oracle_iteration(p.r, p.lambda));
    record(check_empirical_vs_oracle(rs, p.lambda, opt));
    record(check_ordering(rs, p.lambda, opt));
    record(check_transport(opt.seed));
    record(check_pseudometrics(rs, p.lambda, opt));
    record(check_monotone_limit(opt.seed));
    record(check_uniform_cost(opt.seed, p.discount()));
    record(check_logic(rs, p.lambda, opt));
    return out;
}

} // namespace ctbm::validation
