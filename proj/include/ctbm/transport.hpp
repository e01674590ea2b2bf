#pragma once

#include "ctbm/error.hpp"
#include "ctbm/matrix.hpp"
#include "ctbm/process.hpp"
#include "ctbm/pseudometric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace ctbm {

// Optimal coupling of two weight vectors under a cost matrix.
struct TransportPlan {
    Matrix plan;
    double value = 0.0;
    std::size_t pivots = 0;
};

// Kantorovich potential: |potential_i - potential_j| <= cost(i,j) and
// sum_i potential_i (mu_i - nu_i) equals the optimal transport value.
struct DualPotentials {
    std::vector<double> potential;
    double objective = 0.0;
};

inline constexpr double pivot_tolerance = 1e-12;
inline constexpr double mass_balance_tolerance = 1e-9;

namespace detail {

struct SimplexSolution {
    std::vector<double> flow;  // n * m, row-major
    std::vector<double> row_potential;
    std::vector<double> col_potential;
    std::size_t pivots = 0;
};

// Transportation simplex on a balanced problem with strictly positive
// supplies and demands. The basis is a spanning tree of the bipartite
// row/column graph with n + m - 1 cells.
//
// Degeneracy is removed by symbolic perturbation: supply i becomes a_i + eps
// and the last demand b_m + n*eps. No proper subset of perturbed supplies then
// balances a subset of demands, so every basis is nondegenerate and the
// objective strictly decreases (lexicographically) at each pivot; the method
// cannot cycle. Flows are carried as (value, eps-coefficient) pairs.
class TransportationSimplex {
public:
    TransportationSimplex(std::span<const double> supply, std::span<const double> demand, std::span<const double> cost)
        : n_(supply.size()), m_(demand.size()), supply_(supply), demand_(demand), cost_(cost),
          flow_(n_ * m_, 0.0), eps_(n_ * m_, 0), basic_(n_ * m_, 0) {
        double scale = 0.0;
        for (double a : supply_) scale = std::max(scale, a);
        for (double b : demand_) scale = std::max(scale, b);
        flow_tie_ = 64.0 * std::numeric_limits<double>::epsilon() * scale * static_cast<double>(n_ + m_);
    }

    SimplexSolution solve() {
        initial_basis();
        const std::size_t cells = n_ * m_;
        const std::size_t block = std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(static_cast<double>(cells))));
        const std::size_t pivot_cap = 1000 + 50 * cells;

        std::size_t scan_start = 0;
        std::size_t pivots = 0;
        for (;;) {
            build_tree();
            const std::size_t entering = price_block(block, scan_start);
            if (entering == npos) break;
            if (++pivots > pivot_cap) throw error("transportation simplex exceeded its pivot budget");
            pivot(entering);
        }
        recompute_flows();
        build_tree();

        SimplexSolution out;
        out.flow = flow_;
        out.row_potential.assign(potential_.begin(), potential_.begin() + static_cast<std::ptrdiff_t>(n_));
        out.col_potential.assign(potential_.begin() + static_cast<std::ptrdiff_t>(n_), potential_.end());
        out.pivots = pivots;
        return out;
    }

private:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    // Lexicographic order on perturbed amounts value + coef * eps.
    [[nodiscard]] bool lex_less(double v1, long c1, double v2, long c2) const {
        if (std::abs(v1 - v2) > flow_tie_) return v1 < v2;
        return c1 < c2;
    }

    // Matrix-minimum rule on the perturbed marginals. Every allocation
    // exhausts exactly one line except the last, which yields n + m - 1 cells
    // forming a spanning tree.
    void initial_basis() {
        std::vector<std::size_t> order(n_ * m_);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cost_[a] < cost_[b]; });
        std::vector<double> row_left(supply_.begin(), supply_.end());
        std::vector<double> col_left(demand_.begin(), demand_.end());
        std::vector<long> row_eps(n_, 1), col_eps(m_, 0);
        col_eps[m_ - 1] = static_cast<long>(n_);
        std::vector<char> row_done(n_, 0), col_done(m_, 0);
        std::size_t rows_open = n_, cols_open = m_;
        basis_.clear();
        basis_.reserve(n_ + m_ - 1);
        for (std::size_t cell : order) {
            const std::size_t i = cell / m_, j = cell % m_;
            if (row_done[i] || col_done[j]) continue;
            const bool row_smaller = lex_less(row_left[i], row_eps[i], col_left[j], col_eps[j]) ||
                                     (!lex_less(col_left[j], col_eps[j], row_left[i], row_eps[i]));
            const double q = row_smaller ? row_left[i] : col_left[j];
            const long qe = row_smaller ? row_eps[i] : col_eps[j];
            flow_[cell] = q;
            eps_[cell] = qe;
            basic_[cell] = 1;
            basis_.push_back(cell);
            row_left[i] -= q;
            row_eps[i] -= qe;
            col_left[j] -= q;
            col_eps[j] -= qe;
            if (rows_open == 1 && cols_open == 1) break;
            const bool cross_row = (row_smaller && rows_open > 1) || cols_open == 1;
            if (cross_row) {
                row_done[i] = 1;
                --rows_open;
            } else {
                col_done[j] = 1;
                --cols_open;
            }
        }
        if (basis_.size() != n_ + m_ - 1) throw error("transportation simplex: initial basis is not a spanning tree");
    }

    // Adjacency of the basis tree, BFS from node 0, potentials u_i + v_j = c_ij.
    void build_tree() {
        const std::size_t nodes = n_ + m_;
        adj_start_.assign(nodes + 1, 0);
        for (std::size_t cell : basis_) {
            ++adj_start_[cell / m_ + 1];
            ++adj_start_[n_ + cell % m_ + 1];
        }
        for (std::size_t k = 0; k < nodes; ++k) adj_start_[k + 1] += adj_start_[k];
        adj_cell_.assign(2 * basis_.size(), 0);
        fill_.assign(adj_start_.begin(), adj_start_.end() - 1);
        for (std::size_t cell : basis_) {
            adj_cell_[fill_[cell / m_]++] = cell;
            adj_cell_[fill_[n_ + cell % m_]++] = cell;
        }

        potential_.assign(nodes, 0.0);
        parent_cell_.assign(nodes, npos);
        depth_.assign(nodes, npos);
        queue_.clear();
        queue_.push_back(0);
        depth_[0] = 0;
        for (std::size_t head = 0; head < queue_.size(); ++head) {
            const std::size_t node = queue_[head];
            for (std::size_t k = adj_start_[node]; k < adj_start_[node + 1]; ++k) {
                const std::size_t cell = adj_cell_[k];
                const std::size_t other = other_end(cell, node);
                if (depth_[other] != npos) continue;
                depth_[other] = depth_[node] + 1;
                parent_cell_[other] = cell;
                potential_[other] = cost_[cell] - potential_[node];
                queue_.push_back(other);
            }
        }
        if (queue_.size() != nodes) throw error("transportation simplex: basis is not connected");
    }

    [[nodiscard]] double reduced_cost(std::size_t cell) const {
        return cost_[cell] - potential_[cell / m_] - potential_[n_ + cell % m_];
    }

    // Most negative reduced cost within the first block (scanning cyclically
    // from `start`) that contains an improving cell.
    std::size_t price_block(std::size_t block, std::size_t& start) const {
        const std::size_t cells = n_ * m_;
        std::size_t best = npos;
        double best_value = -pivot_tolerance;
        std::size_t in_block = 0;
        for (std::size_t step = 0; step < cells; ++step) {
            const std::size_t cell = (start + step) % cells;
            if (!basic_[cell]) {
                const double r = reduced_cost(cell);
                if (r < best_value) {
                    best_value = r;
                    best = cell;
                }
            }
            if (++in_block == block || step + 1 == cells) {
                if (best != npos) {
                    start = (cell + 1) % cells;
                    return best;
                }
                in_block = 0;
            }
        }
        return npos;
    }

    void pivot(std::size_t entering) {
        std::size_t a = entering / m_;       // row node
        std::size_t b = n_ + entering % m_;  // column node
        path_a_.clear();
        path_b_.clear();
        while (depth_[a] > depth_[b]) {
            path_a_.push_back(parent_cell_[a]);
            a = other_end(parent_cell_[a], a);
        }
        while (depth_[b] > depth_[a]) {
            path_b_.push_back(parent_cell_[b]);
            b = other_end(parent_cell_[b], b);
        }
        while (a != b) {
            path_a_.push_back(parent_cell_[a]);
            a = other_end(parent_cell_[a], a);
            path_b_.push_back(parent_cell_[b]);
            b = other_end(parent_cell_[b], b);
        }
        // Cycle: entering (+), then the tree path from the entering column back
        // to the entering row with alternating signs starting with (-).
        cycle_.assign(path_b_.begin(), path_b_.end());
        cycle_.insert(cycle_.end(), path_a_.rbegin(), path_a_.rend());

        std::size_t leaving = npos;
        for (std::size_t k = 0; k < cycle_.size(); k += 2) {
            const std::size_t cell = cycle_[k];
            if (leaving == npos || lex_less(flow_[cell], eps_[cell], flow_[leaving], eps_[leaving]) ||
                (!lex_less(flow_[leaving], eps_[leaving], flow_[cell], eps_[cell]) && cell < leaving))
                leaving = cell;
        }
        const double theta = std::max(flow_[leaving], 0.0);
        const long theta_eps = eps_[leaving];
        for (std::size_t k = 0; k < cycle_.size(); ++k) {
            const std::size_t cell = cycle_[k];
            if (k % 2 == 0) {
                flow_[cell] -= theta;
                eps_[cell] -= theta_eps;
            } else {
                flow_[cell] += theta;
                eps_[cell] += theta_eps;
            }
        }
        flow_[entering] = theta;
        eps_[entering] = theta_eps;
        flow_[leaving] = 0.0;
        eps_[leaving] = 0;
        basic_[leaving] = 0;
        basic_[entering] = 1;
        *std::find(basis_.begin(), basis_.end(), leaving) = entering;
    }

    [[nodiscard]] std::size_t other_end(std::size_t cell, std::size_t node) const {
        const std::size_t row = cell / m_, col_node = n_ + cell % m_;
        return node == row ? col_node : row;
    }

    // Re-derives basic flows from the unperturbed marginals by leaf
    // elimination, removing drift accumulated over pivots.
    void recompute_flows() {
        const std::size_t nodes = n_ + m_;
        build_tree();
        std::vector<double> remaining(nodes);
        for (std::size_t i = 0; i < n_; ++i) remaining[i] = supply_[i];
        for (std::size_t j = 0; j < m_; ++j) remaining[n_ + j] = demand_[j];
        std::vector<std::size_t> degree(nodes);
        for (std::size_t k = 0; k < nodes; ++k) degree[k] = adj_start_[k + 1] - adj_start_[k];
        std::vector<char> edge_done(n_ * m_, 0);
        std::vector<std::size_t> leaves;
        for (std::size_t k = 0; k < nodes; ++k)
            if (degree[k] == 1) leaves.push_back(k);
        while (!leaves.empty()) {
            const std::size_t leaf = leaves.back();
            leaves.pop_back();
            if (degree[leaf] != 1) continue;
            std::size_t edge = npos;
            for (std::size_t k = adj_start_[leaf]; k < adj_start_[leaf + 1]; ++k)
                if (!edge_done[adj_cell_[k]]) {
                    edge = adj_cell_[k];
                    break;
                }
            const std::size_t other = other_end(edge, leaf);
            const double f = std::max(0.0, remaining[leaf]);
            flow_[edge] = f;
            edge_done[edge] = 1;
            remaining[other] -= f;
            remaining[leaf] = 0.0;
            degree[leaf] = 0;
            if (--degree[other] == 1) leaves.push_back(other);
        }
    }

    std::size_t n_, m_;
    std::span<const double> supply_, demand_, cost_;
    std::vector<double> flow_;
    std::vector<long> eps_;
    std::vector<char> basic_;
    double flow_tie_ = 0.0;
    std::vector<std::size_t> basis_;
    std::vector<std::size_t> adj_start_, adj_cell_, fill_;
    std::vector<double> potential_;
    std::vector<std::size_t> parent_cell_, depth_, queue_;
    std::vector<std::size_t> path_a_, path_b_, cycle_;
};

struct FullSolution {
    TransportPlan plan;
    // Potentials on the support of mu / nu (NaN off support) with
    // u_i + v_j <= cost(i,j) on supports and equality on basic cells.
    std::vector<double> row_potential;
    std::vector<double> col_potential;
};

inline void check_weights(std::span<const double> w, const char* which) {
    for (double x : w)
        if (!(x >= 0.0 && std::isfinite(x))) throw dimension_error(std::string(which) + " has a negative or non-finite weight");
}

inline FullSolution solve_full(std::span<const double> mu, std::span<const double> nu, const Matrix& cost) {
    if (cost.rows() != mu.size() || cost.cols() != nu.size())
        throw dimension_error("cost matrix is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                              " but the distributions have " + std::to_string(mu.size()) + " and " +
                              std::to_string(nu.size()) + " atoms");
    check_weights(mu, "source distribution");
    check_weights(nu, "target distribution");
    for (double c : cost.data())
        if (!(c >= 0.0 && c <= 1.0)) throw dimension_error("cost entries must lie in [0,1]");
    const double mass_a = std::accumulate(mu.begin(), mu.end(), 0.0);
    const double mass_b = std::accumulate(nu.begin(), nu.end(), 0.0);
    if (std::abs(mass_a - mass_b) > mass_balance_tolerance || mass_a <= 0.0)
        throw dimension_error("source and target masses differ");

    // Zero-weight atoms are dropped and reinserted as zero rows/columns.
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu[i] > 0.0) rows.push_back(i);
    for (std::size_t j = 0; j < nu.size(); ++j)
        if (nu[j] > 0.0) cols.push_back(j);

    FullSolution out;
    out.plan.plan = Matrix(mu.size(), nu.size());
    out.row_potential.assign(mu.size(), std::numeric_limits<double>::quiet_NaN());
    out.col_potential.assign(nu.size(), std::numeric_limits<double>::quiet_NaN());

    if (rows.size() == 1 || cols.size() == 1) {
        // Unique coupling: product of the marginals.
        const bool single_row = rows.size() == 1;
        const std::size_t anchor = single_row ? rows[0] : cols[0];
        if (single_row) {
            out.row_potential[anchor] = 0.0;
            for (std::size_t j : cols) {
                out.plan.plan(anchor, j) = nu[j];
                out.col_potential[j] = cost(anchor, j);
            }
        } else {
            out.col_potential[anchor] = 0.0;
            for (std::size_t i : rows) {
                out.plan.plan(i, anchor) = mu[i];
                out.row_potential[i] = cost(i, anchor);
            }
        }
    } else {
        std::vector<double> a, b, c;
        for (std::size_t i : rows) a.push_back(mu[i]);
        for (std::size_t j : cols) b.push_back(nu[j]);
        c.reserve(rows.size() * cols.size());
        for (std::size_t i : rows)
            for (std::size_t j : cols) c.push_back(cost(i, j));
        TransportationSimplex simplex(a, b, c);
        const SimplexSolution s = simplex.solve();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.row_potential[rows[r]] = s.row_potential[r];
            for (std::size_t k = 0; k < cols.size(); ++k) out.plan.plan(rows[r], cols[k]) = s.flow[r * cols.size() + k];
        }
        for (std::size_t k = 0; k < cols.size(); ++k) out.col_potential[cols[k]] = s.col_potential[k];
        out.plan.pivots = s.pivots;
    }
    double value = 0.0;
    for (std::size_t i : rows)
        for (std::size_t j : cols) value += out.plan.plan(i, j) * cost(i, j);
    out.plan.value = value;
    return out;
}

} // namespace detail

// Exact optimal transport W(cost)(mu, nu) between finite weight vectors.
inline TransportPlan solve_ot(std::span<const double> mu, std::span<const double> nu, const Matrix& cost) {
    return detail::solve_full(mu, nu, cost).plan;
}

inline TransportPlan solve_ot(const Distribution& mu, const Distribution& nu, const Matrix& cost) {
    return solve_ot(std::span<const double>(mu.weights), std::span<const double>(nu.weights), cost);
}

// Optimal value only, with shortcuts for the cases where one side is a point
// mass (unique coupling).
inline double transport_cost(std::span<const double> mu, std::span<const double> nu, const Matrix& cost) {
    std::size_t support_a = 0, support_b = 0, ia = 0, ib = 0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu[i] > 0.0) ++support_a, ia = i;
    for (std::size_t j = 0; j < nu.size(); ++j)
        if (nu[j] > 0.0) ++support_b, ib = j;
    if (support_a == 1 && cost.rows() == mu.size() && cost.cols() == nu.size()) {
        double v = 0.0;
        for (std::size_t j = 0; j < nu.size(); ++j)
            if (nu[j] > 0.0) v += nu[j] * cost(ia, j);
        return v;
    }
    if (support_b == 1 && cost.rows() == mu.size() && cost.cols() == nu.size()) {
        double v = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i)
            if (mu[i] > 0.0) v += mu[i] * cost(i, ib);
        return v;
    }
    return solve_ot(mu, nu, cost).value;
}

// Kantorovich potential certifying solve_ot. The cost must be a square
// pseudometric; the potential is the c-transform of the optimal column
// potentials, shifted so that its minimum is 0 (it then lies in [0,1]).
inline DualPotentials dual_certificate(std::span<const double> mu, std::span<const double> nu, const Matrix& cost,
                                       double triangle_tol = 1e-12) {
    const MetricCheck check = check_pseudometric(cost, triangle_tol);
    if (!check.ok()) throw not_a_pseudometric("dual certificate needs a pseudometric cost: " + check.describe());
    const detail::FullSolution sol = detail::solve_full(mu, nu, cost);
    const std::size_t n = cost.rows();
    DualPotentials out;
    out.potential.assign(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        double h = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (nu[j] > 0.0) h = std::min(h, cost(x, j) - sol.col_potential[j]);
        out.potential[x] = h;
    }
    const double lowest = *std::min_element(out.potential.begin(), out.potential.end());
    for (double& h : out.potential) h -= lowest;
    double objective = 0.0;
    for (std::size_t x = 0; x < n; ++x) objective += out.potential[x] * (mu[x] - nu[x]);
    out.objective = objective;
    return out;
}

inline DualPotentials dual_certificate(const Distribution& mu, const Distribution& nu, const Matrix& cost) {
    return dual_certificate(std::span<const double>(mu.weights), std::span<const double>(nu.weights), cost);
}

using TrajectoryCost = std::function<double(const Trajectory&, const Trajectory&)>;

namespace detail {

struct Atoms {
    std::vector<Trajectory> points;
    std::vector<double> weights;
    std::vector<std::size_t> class_of;  // original index -> atom
};

inline Atoms merge_duplicates(std::span<const Trajectory> samples) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return trajectory_less(samples[a], samples[b]); });
    Atoms out;
    out.class_of.assign(samples.size(), 0);
    const double w = 1.0 / static_cast<double>(samples.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Trajectory& t = samples[order[k]];
        if (out.points.empty() || !(out.points.back() == t)) {
            out.points.push_back(t);
            out.weights.push_back(0.0);
        }
        out.weights.back() += w;
        out.class_of[order[k]] = out.points.size() - 1;
    }
    return out;
}

} // namespace detail

// Exact transport between the two equal-weight empirical measures. Identical
// trajectories are merged before solving; the returned plan is indexed by the
// original samples, splitting merged mass evenly.
inline TransportPlan empirical_ot(std::span<const Trajectory> samples_a, std::span<const Trajectory> samples_b,
                                  const TrajectoryCost& cost_fn) {
    if (samples_a.empty() || samples_b.empty()) throw dimension_error("empirical transport needs nonempty sample lists");
    const detail::Atoms a = detail::merge_duplicates(samples_a);
    const detail::Atoms b = detail::merge_duplicates(samples_b);
    Matrix cost(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i)
        for (std::size_t j = 0; j < b.points.size(); ++j) cost(i, j) = cost_fn(a.points[i], b.points[j]);
    const TransportPlan merged = solve_ot(std::span<const double>(a.weights), std::span<const double>(b.weights), cost);

    TransportPlan out;
    out.value = merged.value;
    out.pivots = merged.pivots;
    out.plan = Matrix(samples_a.size(), samples_b.size());
    const double wa = 1.0 / static_cast<double>(samples_a.size());
    const double wb = 1.0 / static_cast<double>(samples_b.size());
    for (std::size_t i = 0; i < samples_a.size(); ++i) {
        const std::size_t ci = a.class_of[i];
        for (std::size_t j = 0; j < samples_b.size(); ++j) {
            const std::size_t cj = b.class_of[j];
            out.plan(i, j) = merged.plan(ci, cj) * (wa / a.weights[ci]) * (wb / b.weights[cj]);
        }
    }
    return out;
}

// Optimal value only; skips expanding the plan to the original samples.
inline double empirical_transport_cost(std::span<const Trajectory> samples_a, std::span<const Trajectory> samples_b,
                                       const TrajectoryCost& cost_fn) {
    if (samples_a.empty() || samples_b.empty()) throw dimension_error("empirical transport needs nonempty sample lists");
    const detail::Atoms a = detail::merge_duplicates(samples_a);
    const detail::Atoms b = detail::merge_duplicates(samples_b);
    Matrix cost(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i)
        for (std::size_t j = 0; j < b.points.size(); ++j) cost(i, j) = cost_fn(a.points[i], b.points[j]);
    return transport_cost(a.weights, b.weights, cost);
}

// W(costs[k])(mu, nu) for an entrywise nondecreasing chain of cost matrices.
inline std::vector<double> monotone_cost_limit_check(std::span<const double> mu, std::span<const double> nu,
                                                     std::span<const Matrix> costs) {
    for (std::size_t k = 1; k < costs.size(); ++k) {
        const Matrix& lo = costs[k - 1];
        const Matrix& hi = costs[k];
        if (lo.rows() != hi.rows() || lo.cols() != hi.cols()) throw dimension_error("cost chain has inconsistent shapes");
        for (std::size_t e = 0; e < lo.data().size(); ++e)
            if (hi.data()[e] < lo.data()[e])
                throw config_error("cost chain is not nondecreasing at position " + std::to_string(k));
    }
    std::vector<double> values;
    values.reserve(costs.size());
    for (const Matrix& c : costs) values.push_back(solve_ot(mu, nu, c).value);
    return values;
}

} // namespace ctbm
