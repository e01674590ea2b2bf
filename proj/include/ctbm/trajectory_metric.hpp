#pragma once

#include "ctbm/error.hpp"
#include "ctbm/kernel_metric.hpp"
#include "ctbm/learning_example.hpp"
#include "ctbm/parallel.hpp"
#include "ctbm/process.hpp"
#include "ctbm/pseudometric.hpp"
#include "ctbm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace ctbm {

struct TrajectoryCostSpec {
    PseudometricMatrix base;
    double discount = 1.0;

    void validate() const {
        if (!(discount > 0.0 && discount <= 1.0)) throw config_error("trajectory discount must lie in (0,1]");
    }
};

// sup_t c^t m(a(t), b(t)). Both paths are piecewise constant and c^t is
// decreasing, so the supremum is attained at a breakpoint: 0 or a jump time of
// either path.
inline double uniform_cost(const TrajectoryCostSpec& csp, const Trajectory& a, const Trajectory& b) {
    if (a.horizon != b.horizon) throw config_error("uniform_cost: trajectories have different horizons");
    const PseudometricMatrix& m = csp.base;
    const double log_c = std::log(csp.discount);
    StateIndex sa = a.initial, sb = b.initial;
    double best = m(sa, sb);
    std::size_t ia = 0, ib = 0;
    while (ia < a.jumps.size() || ib < b.jumps.size()) {
        const double ta = ia < a.jumps.size() ? a.jumps[ia].time : std::numeric_limits<double>::infinity();
        const double tb = ib < b.jumps.size() ? b.jumps[ib].time : std::numeric_limits<double>::infinity();
        const double t = std::min(ta, tb);
        if (t > a.horizon) break;
        if (ta == t) sa = a.jumps[ia++].state;
        if (tb == t) sb = b.jumps[ib++].state;
        const double weight = std::exp(log_c * t);
        if (weight <= best) break;  // later breakpoints cannot beat the current maximum
        best = std::max(best, weight * m(sa, sb));
    }
    return best;
}

struct SamplingConfig {
    std::size_t samples = 512;
    std::size_t reps = 10;
    std::uint64_t seed = 20240901;
    bool stratify = true;  // use stratified jump times where the structure permits

    void validate() const {
        if (samples < 2) throw config_error("empirical estimation needs at least two samples");
        if (reps == 0) throw config_error("reps must be positive");
    }
};

// Equal-weight trajectory sets per state and repetition. Stratified sets are
// deterministic and therefore shared by all repetitions.
class SampleBank {
public:
    SampleBank(const ProcessSpec& spec, double horizon, const SamplingConfig& sampling) : horizon_(horizon) {
        sampling.validate();
        const std::size_t n = spec.size();
        deterministic_.assign(n, false);
        sets_.assign(n, {});
        for (StateIndex s = 0; s < n; ++s) {
            if (spec.absorbing(s) || (sampling.stratify && single_jump_absorbing(spec, s))) {
                deterministic_[s] = true;
                sets_[s].push_back(spec.absorbing(s) ? std::vector<Trajectory>{constant_trajectory(s, horizon)}
                                                     : stratified_jump_times(spec, s, sampling.samples, horizon));
            }
        }
        std::vector<std::pair<StateIndex, std::size_t>> jobs;
        for (StateIndex s = 0; s < n; ++s)
            if (!deterministic_[s]) {
                sets_[s].resize(sampling.reps);
                for (std::size_t rep = 0; rep < sampling.reps; ++rep) jobs.emplace_back(s, rep);
            }
        parallel_for(jobs.size(), [&](std::size_t k) {
            const auto [s, rep] = jobs[k];
            auto& out = sets_[s][rep];
            out.reserve(sampling.samples);
            for (std::size_t i = 0; i < sampling.samples; ++i) {
                RandomStream stream = RandomStream::substream(sampling.seed, rep, s, i);
                out.push_back(sample_trajectory(spec, s, horizon, stream));
            }
        });
    }

    [[nodiscard]] bool deterministic(StateIndex s) const { return deterministic_.at(s); }
    [[nodiscard]] std::size_t reps_for(StateIndex s) const { return sets_.at(s).size(); }

    [[nodiscard]] const std::vector<Trajectory>& samples(StateIndex s, std::size_t rep) const {
        const auto& sets = sets_.at(s);
        return sets.size() == 1 ? sets.front() : sets.at(rep);
    }

    [[nodiscard]] double horizon() const { return horizon_; }

private:
    double horizon_;
    std::vector<bool> deterministic_;
    std::vector<std::vector<std::vector<Trajectory>>> sets_;
};

// Empirical G_c(m) before metric repair, from a prepared sample bank.
inline Matrix apply_G_raw(const ProcessSpec& spec, const PseudometricMatrix& m, const MetricConfig& cfg, const SampleBank& bank,
                          std::size_t reps) {
    const std::size_t n = spec.size();
    if (m.size() != n) throw dimension_error("apply_G: metric size does not match the process");
    const TrajectoryCostSpec csp{m, cfg.discount};
    const TrajectoryCost cost = [&](const Trajectory& a, const Trajectory& b) { return uniform_cost(csp, a, b); };
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    Matrix out(n, n);
    parallel_for(pairs.size(), [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        double v;
        if (spec.absorbing(i) && spec.absorbing(j)) {
            v = m(i, j);
        } else if (bank.deterministic(i) && bank.deterministic(j)) {
            v = empirical_transport_cost(bank.samples(i, 0), bank.samples(j, 0), cost);
        } else {
            double total = 0.0;
            for (std::size_t rep = 0; rep < reps; ++rep)
                total += empirical_transport_cost(bank.samples(i, rep), bank.samples(j, rep), cost);
            v = total / static_cast<double>(reps);
        }
        v = std::clamp(v, 0.0, 1.0);
        out(i, j) = v;
        out(j, i) = v;
    });
    return out;
}

inline PseudometricMatrix apply_G_empirical(const ProcessSpec& spec, const PseudometricMatrix& m, const MetricConfig& cfg,
                                            const SampleBank& bank, std::size_t reps) {
    return detail::repair(apply_G_raw(spec, m, cfg, bank, reps), m);
}

inline PseudometricMatrix apply_G_empirical(const ProcessSpec& spec, const PseudometricMatrix& m, const MetricConfig& cfg,
                                            const SamplingConfig& sampling) {
    cfg.validate();
    const SampleBank bank(spec, cfg.horizon(), sampling);
    return apply_G_empirical(spec, m, cfg, bank, sampling.reps);
}

// Iterates the empirical G_c from the observable metric with one fixed sample
// bank. Each iterate is the entrywise maximum of the repaired update and the
// previous iterate.
inline std::pair<PseudometricMatrix, IterationReport> fixpoint_d(const ProcessSpec& spec, const MetricConfig& cfg,
                                                                 const SamplingConfig& sampling) {
    cfg.validate();
    validate(spec);
    const SampleBank bank(spec, cfg.horizon(), sampling);
    auto result = detail::iterate_fixpoint(obs_metric(spec), cfg.max_iterations, cfg.fix_tolerance, cfg.keep_iterates,
                                           [&](const PseudometricMatrix& m, std::size_t) {
                                               return apply_G_empirical(spec, m, cfg, bank, sampling.reps);
                                           });
    const Matrix after = apply_G_raw(spec, result.first, cfg, bank, sampling.reps);
    double residual = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i)
        for (std::size_t j = 0; j < spec.size(); ++j)
            if (i != j && result.second.converged[i][j]) residual = std::max(residual, std::abs(after(i, j) - result.first(i, j)));
    result.second.residual = residual;
    return result;
}

// ---------------------------------------------------------------------------
// Exact recurrence for the learning example
// ---------------------------------------------------------------------------

// E[max{d, a X}] for X uniform on [0,1] and a >= 0.
inline double expected_max_uniform(double d, double a) {
    if (a <= d) return d;
    return a / 2.0 + d * d / (2.0 * a);
}

// One exact G_c step on the learning example, with c = e^{-lambda}. Along a
// path from x or z the single jump happens at time T and c^T = e^{-lambda T}
// is uniform on (0,1), so each entry is an expectation of the form above.
//
// The (x,z) entry has no closed-form step; it is set to the tightest value
// allowed by the triangle inequality through the other states, which bounds
// the true iterate from above.
inline PseudometricMatrix example_recurrence_step(const PseudometricMatrix& d, const ExampleParams& p, const ExampleLayout& L = {}) {
    p.validate();
    if (d.size() != 5) throw dimension_error("example recurrence needs a 5-state metric");
    const auto [zero, x, y, z, dead] = L.all();
    PseudometricMatrix next = d;
    next.set(x, dead, expected_max_uniform(d(x, dead), d(zero, dead)));
    next.set(x, y, expected_max_uniform(d(x, y), d(zero, y)));
    next.set(z, zero, 0.5 * d(z, zero) + 0.5 * expected_max_uniform(d(z, zero), d(dead, zero)));
    next.set(z, dead, 0.5 * d(z, dead) + 0.5 * expected_max_uniform(d(z, dead), d(zero, dead)));
    next.set(y, z, 0.5 * expected_max_uniform(d(y, z), d(y, zero)) + 0.5 * expected_max_uniform(d(y, z), d(y, dead)));
    double bound = 1.0;
    for (StateIndex k : {zero, y, dead}) bound = std::min(bound, next(x, k) + next(k, z));
    next.set(x, z, std::max(d(x, z), bound));
    return next;
}

// d_0, d_1, ..., d_count of the exact recurrence, starting at the observable metric.
inline std::vector<PseudometricMatrix> example_oracle_iterates(const ExampleParams& p, std::size_t count, const ExampleLayout& L = {}) {
    const ProcessSpec spec = learning_example(p);
    PseudometricMatrix d0(5);
    for (StateIndex a = 0; a < 5; ++a)
        for (StateIndex b = a + 1; b < 5; ++b) {
            const StateIndex ra = L.all()[a], rb = L.all()[b];
            d0.set(ra, rb, std::abs(spec.obs[a] - spec.obs[b]));
        }
    std::vector<PseudometricMatrix> out{d0};
    out.reserve(count + 1);
    for (std::size_t k = 0; k < count; ++k) out.push_back(example_recurrence_step(out.back(), p, L));
    return out;
}

// The exact recurrence run through the common fixpoint driver, so that it
// reports convergence and extrapolation like the sampled estimator.
inline std::pair<PseudometricMatrix, IterationReport> oracle_fixpoint(const ExampleMatch& match, const MetricConfig& cfg) {
    cfg.validate();
    match.params.validate();
    if (std::abs(cfg.discount - match.params.discount()) > 1e-12)
        throw config_error("the exact recurrence needs discount e^{-lambda}");
    const auto start = example_oracle_iterates(match.params, 0, match.layout).front();
    return detail::iterate_fixpoint(start, cfg.max_iterations, cfg.fix_tolerance, cfg.keep_iterates,
                                    [&](const PseudometricMatrix& m, std::size_t) {
                                        return example_recurrence_step(m, match.params, match.layout);
                                    });
}

// True when the (x,z) entry of the oracle is a bound rather than an exact iterate.
inline bool oracle_entry_is_bound(const ExampleLayout& L, StateIndex a, StateIndex b) {
    return (a == L.x && b == L.z) || (a == L.z && b == L.x);
}

} // namespace ctbm
