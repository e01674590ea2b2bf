#pragma once

#include "ctbm/error.hpp"
#include "ctbm/matrix.hpp"
#include "ctbm/parallel.hpp"
#include "ctbm/process.hpp"
#include "ctbm/pseudometric.hpp"
#include "ctbm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace ctbm {

enum class TimeGrid {
    uniform_time,   // grid points equally spaced in t
    uniform_theta,  // equally spaced in theta = discount^t (exact sampling of polynomial-in-theta objectives)
};

struct MetricConfig {
    double discount = 0.36787944117144233;  // e^{-1}
    double time_tolerance = 1e-6;
    std::size_t time_grid_points = 2048;
    double fix_tolerance = 1e-9;
    std::size_t max_iterations = 500;
    std::size_t refine_steps = 40;
    double kernel_tolerance = 1e-12;
    TimeGrid grid = TimeGrid::uniform_time;
    bool keep_iterates = false;

    void validate() const {
        if (!(discount > 0.0 && discount < 1.0)) throw config_error("discount must lie strictly inside (0,1)");
        if (!(time_tolerance > 0.0 && time_tolerance < 1.0)) throw config_error("time tolerance must lie in (0,1)");
        if (time_grid_points < 2) throw config_error("time grid needs at least two points");
        if (!(fix_tolerance > 0.0)) throw config_error("fixpoint tolerance must be positive");
        if (max_iterations == 0) throw config_error("max_iterations must be positive");
        if (!(kernel_tolerance > 0.0 && kernel_tolerance <= 1e-6)) throw config_error("kernel tolerance must lie in (0, 1e-6]");
    }

    // Times beyond this horizon carry weight discount^t <= time_tolerance.
    [[nodiscard]] double horizon() const { return std::log(time_tolerance) / std::log(discount); }
};

// Per-iteration record of a fixpoint run.
struct IterationReport {
    std::vector<double> sup_deltas;
    PseudometricMatrix final;
    Matrix extrapolated;              // Aitken delta-squared estimate of the limit, per entry
    std::vector<std::vector<bool>> converged;
    std::size_t iterations = 0;
    double residual = 0.0;            // sup |Phi(final) - final|, converged entries only
    std::vector<PseudometricMatrix> iterates;  // filled when keep_iterates is set

    [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> unconverged() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < converged.size(); ++i)
            for (std::size_t j = i + 1; j < converged.size(); ++j)
                if (!converged[i][j]) out.emplace_back(i, j);
        return out;
    }

    [[nodiscard]] bool all_converged() const { return unconverged().empty(); }
};

inline PseudometricMatrix obs_metric(const ProcessSpec& spec) {
    PseudometricMatrix m(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i)
        for (std::size_t j = i + 1; j < spec.size(); ++j) m.set(i, j, std::abs(spec.obs[i] - spec.obs[j]));
    return m;
}

// Kernels P_t at the search grid. Built once and shared by every apply_F of a
// fixpoint run.
struct KernelGrid {
    std::vector<double> times;
    std::vector<Matrix> kernels;
};

inline KernelGrid make_kernel_grid(const ProcessSpec& spec, const MetricConfig& cfg) {
    cfg.validate();
    const double horizon = cfg.horizon();
    const std::size_t points = cfg.time_grid_points;
    KernelGrid grid;
    grid.times.resize(points);
    for (std::size_t k = 0; k < points; ++k) {
        const double s = static_cast<double>(k) / static_cast<double>(points - 1);
        if (cfg.grid == TimeGrid::uniform_time) {
            grid.times[k] = s * horizon;
        } else {
            const double theta = 1.0 - s * (1.0 - cfg.time_tolerance);
            grid.times[k] = std::log(theta) / std::log(cfg.discount);
        }
    }
    grid.times.front() = 0.0;
    grid.kernels.resize(points);
    parallel_for(points, [&](std::size_t k) { grid.kernels[k] = transition_matrix_dense(spec, grid.times[k], cfg.kernel_tolerance); });
    return grid;
}

namespace detail {

inline double discounted_distance(const Matrix& cost, double discount, double t, std::span<const double> p, std::span<const double> q) {
    return std::pow(discount, t) * transport_cost(p, q, cost);
}

// Maximizes t -> c^t W(m)(P_t(x), P_t(y)) over the grid, then refines around
// the best grid point by golden-section search.
inline double time_supremum(const ProcessSpec& spec, const Matrix& cost, const MetricConfig& cfg, const KernelGrid& grid,
                            std::size_t x, std::size_t y) {
    if (spec.absorbing(x) && spec.absorbing(y)) return cost(x, y);
    const std::size_t points = grid.times.size();
    double best = cost(x, y);  // t = 0
    std::size_t best_k = 0;
    for (std::size_t k = 1; k < points; ++k) {
        const Matrix& p = grid.kernels[k];
        const double v = discounted_distance(cost, cfg.discount, grid.times[k], p.row(x), p.row(y));
        if (v > best) {
            best = v;
            best_k = k;
        }
    }
    if (cfg.refine_steps == 0) return best;

    const auto objective = [&](double t) {
        const Distribution px = transition_row(spec, x, t, cfg.kernel_tolerance);
        const Distribution py = transition_row(spec, y, t, cfg.kernel_tolerance);
        return discounted_distance(cost, cfg.discount, t, px.weights, py.weights);
    };
    double lo = grid.times[best_k == 0 ? 0 : best_k - 1];
    double hi = grid.times[std::min(best_k + 1, points - 1)];
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - ratio * (hi - lo);
    double b = lo + ratio * (hi - lo);
    double fa = objective(a), fb = objective(b);
    best = std::max({best, fa, fb});
    for (std::size_t step = 0; step < cfg.refine_steps; ++step) {
        if (fa < fb) {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = objective(b);
            best = std::max(best, fb);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = objective(a);
            best = std::max(best, fa);
        }
    }
    return best;
}

// Keeps an update inside the pseudometric lattice and above the previous
// iterate: shortest-path closure, then entrywise max with `floor`.
inline PseudometricMatrix repair(const Matrix& raw, const PseudometricMatrix& floor) {
    Matrix lifted = raw;
    for (std::size_t i = 0; i < lifted.rows(); ++i)
        for (std::size_t j = 0; j < lifted.cols(); ++j) lifted(i, j) = std::max(lifted(i, j), floor(i, j));
    return entrywise_max(metric_closure(lifted), floor);
}

} // namespace detail

// One application of F_c without metric repair.
inline Matrix apply_F_raw(const ProcessSpec& spec, const PseudometricMatrix& m, const MetricConfig& cfg, const KernelGrid& grid) {
    const std::size_t n = spec.size();
    if (m.size() != n) throw dimension_error("apply_F: metric size does not match the process");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    Matrix out(n, n);
    parallel_for(pairs.size(), [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        const double v = std::clamp(detail::time_supremum(spec, m.matrix(), cfg, grid, i, j), 0.0, 1.0);
        out(i, j) = v;
        out(j, i) = v;
    });
    return out;
}

inline PseudometricMatrix apply_F(const ProcessSpec& spec, const PseudometricMatrix& m, const MetricConfig& cfg,
                                  const KernelGrid& grid) {
    return detail::repair(apply_F_raw(spec, m, cfg, grid), m);
}

inline PseudometricMatrix apply_F(const ProcessSpec& spec, const PseudometricMatrix& m, const MetricConfig& cfg) {
    return apply_F(spec, m, cfg, make_kernel_grid(spec, cfg));
}

// Aitken delta-squared estimate from three consecutive terms; falls back to
// the last term when the differences are too small or do not shrink.
inline double aitken(double x0, double x1, double x2) {
    const double d1 = x1 - x0, d2 = x2 - x1;
    const double denom = d2 - d1;
    if (std::abs(denom) < 1e-15 || std::abs(d2) >= std::abs(d1)) return x2;
    return x2 - d2 * d2 / denom;
}

namespace detail {

// Shared driver for both fixpoint iterations. `step` maps an iterate to the
// next (already repaired) one; `raw_step` is used for the final residual.
template <class Step>
std::pair<PseudometricMatrix, IterationReport> iterate_fixpoint(PseudometricMatrix start, std::size_t max_iterations,
                                                                double fix_tolerance, bool keep_iterates, Step&& step) {
    const std::size_t n = start.size();
    IterationReport report;
    std::vector<PseudometricMatrix> tail{start};
    if (keep_iterates) report.iterates.push_back(start);
    PseudometricMatrix current = std::move(start);
    std::vector<std::vector<double>> last_change(n, std::vector<double>(n, 0.0));
    bool stopped = false;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        PseudometricMatrix next = step(current, it);
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                last_change[i][j] = std::abs(next(i, j) - current(i, j));
                delta = std::max(delta, last_change[i][j]);
            }
        report.sup_deltas.push_back(delta);
        current = std::move(next);
        tail.push_back(current);
        if (tail.size() > 3) tail.erase(tail.begin());
        if (keep_iterates) report.iterates.push_back(current);
        report.iterations = it + 1;
        if (delta <= fix_tolerance) {
            stopped = true;
            break;
        }
    }
    report.converged.assign(n, std::vector<bool>(n, true));
    report.extrapolated = current.matrix();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            report.converged[i][j] = stopped || last_change[i][j] <= fix_tolerance;
            if (tail.size() == 3 && !report.converged[i][j]) {
                const double e = aitken(tail[0](i, j), tail[1](i, j), tail[2](i, j));
                report.extrapolated(i, j) = std::clamp(e, current(i, j), 1.0);
            }
        }
    report.final = current;
    return {std::move(current), std::move(report)};
}

} // namespace detail

// Iterates F_c from the observable metric. The final residual is measured
// with one extra unrepaired application of F_c on converged entries.
inline std::pair<PseudometricMatrix, IterationReport> fixpoint_delta(const ProcessSpec& spec, const MetricConfig& cfg) {
    cfg.validate();
    validate(spec);
    const KernelGrid grid = make_kernel_grid(spec, cfg);
    auto result = detail::iterate_fixpoint(obs_metric(spec), cfg.max_iterations, cfg.fix_tolerance, cfg.keep_iterates,
                                           [&](const PseudometricMatrix& m, std::size_t) { return apply_F(spec, m, cfg, grid); });
    const Matrix after = apply_F_raw(spec, result.first, cfg, grid);
    double residual = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i)
        for (std::size_t j = 0; j < spec.size(); ++j)
            if (i != j && result.second.converged[i][j]) residual = std::max(residual, std::abs(after(i, j) - result.first(i, j)));
    result.second.residual = residual;
    return result;
}

} // namespace ctbm
