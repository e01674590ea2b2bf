#pragma once

// Test-only helpers: random instance generators and independent oracles.

#include "ctbm/matrix.hpp"
#include "ctbm/process.hpp"
#include "ctbm/pseudometric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace ctbm::testing {

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n, double zero_probability = 0.0) {
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

inline Matrix random_cost(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix c(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) c(i, j) = u(rng);
    return c;
}

// Metric closure of a random symmetric matrix.
inline PseudometricMatrix random_pseudometric(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix raw(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) raw(i, j) = raw(j, i) = u(rng);
    return metric_closure(raw);
}

// Minimum of the transportation LP by enumerating every basic feasible
// solution: each spanning tree of the bipartite row/column graph determines
// unique flows; feasible trees are those with nonnegative flows.
inline double brute_force_transport(const std::vector<double>& a, const std::vector<double>& b, const Matrix& cost) {
    const std::size_t n = a.size(), m = b.size(), cells = n * m, need = n + m - 1;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(need);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == need) {
            // acyclicity via union-find
            std::vector<std::size_t> parent(n + m);
            std::iota(parent.begin(), parent.end(), std::size_t{0});
            std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
                return parent[x] == x ? x : parent[x] = find(parent[x]);
            };
            for (std::size_t cell : pick) {
                const std::size_t r = find(cell / m), c = find(n + cell % m);
                if (r == c) return;
                parent[r] = c;
            }
            // leaf elimination
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
                        const std::size_t cell = pick[k];
                        if (cell / m == node || n + cell % m == node) ++deg, edge = k;
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

inline double weighted_sum(const Matrix& plan, const Matrix& cost) {
    double v = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i)
        for (std::size_t j = 0; j < plan.cols(); ++j) v += plan(i, j) * cost(i, j);
    return v;
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

} // namespace ctbm::testing
