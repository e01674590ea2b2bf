#pragma once

#include "ctbm/error.hpp"
#include "ctbm/matrix.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctbm {

using StateIndex = std::size_t;

inline constexpr double honesty_tolerance = 1e-12;

// Probability weights over the states of a process.
struct Distribution {
    std::vector<double> weights;

    static Distribution point_mass(std::size_t n, StateIndex at) {
        Distribution d{std::vector<double>(n, 0.0)};
        d.weights.at(at) = 1.0;
        return d;
    }

    [[nodiscard]] std::size_t size() const { return weights.size(); }
    [[nodiscard]] double total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

    [[nodiscard]] bool valid(double tol = honesty_tolerance) const {
        return std::all_of(weights.begin(), weights.end(), [](double w) { return w >= 0.0 && std::isfinite(w); }) &&
               std::abs(total() - 1.0) <= tol;
    }

    friend bool operator==(const Distribution&, const Distribution&) = default;
};

// Finite-state jump process: the process sits in state i for an exponential
// time with rate exit_rate[i], then moves according to jump[i].
struct ProcessSpec {
    std::vector<std::string> states;
    std::vector<double> obs;
    std::vector<double> exit_rate;
    std::vector<std::vector<double>> jump;  // empty row for absorbing states
    std::optional<Matrix> base_metric;

    [[nodiscard]] std::size_t size() const { return states.size(); }
    [[nodiscard]] bool absorbing(StateIndex i) const { return exit_rate.at(i) == 0.0; }

    [[nodiscard]] StateIndex index_of(std::string_view name) const {
        const auto it = std::find(states.begin(), states.end(), name);
        if (it == states.end()) throw spec_error(std::string(name), "unknown state");
        return static_cast<StateIndex>(it - states.begin());
    }

    friend bool operator==(const ProcessSpec&, const ProcessSpec&) = default;
};

// Throws spec_error naming the offending state on the first violated invariant.
inline void validate(const ProcessSpec& spec) {
    const std::size_t n = spec.size();
    if (n == 0) throw spec_error("", "process has no states");
    if (spec.obs.size() != n) throw spec_error("", "obs has " + std::to_string(spec.obs.size()) + " entries, expected " + std::to_string(n));
    if (spec.exit_rate.size() != n)
        throw spec_error("", "exit_rates has " + std::to_string(spec.exit_rate.size()) + " entries, expected " + std::to_string(n));
    if (spec.jump.size() != n) throw spec_error("", "jump table has wrong size");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& name = spec.states[i];
        if (name.empty()) throw spec_error("", "empty state name");
        if (std::find(spec.states.begin() + static_cast<std::ptrdiff_t>(i) + 1, spec.states.end(), name) != spec.states.end())
            throw spec_error(name, "duplicate state name");
        if (!(spec.obs[i] >= 0.0 && spec.obs[i] <= 1.0)) throw spec_error(name, "obs value outside [0,1]");
        if (!(std::isfinite(spec.exit_rate[i]) && spec.exit_rate[i] >= 0.0))
            throw spec_error(name, "exit rate must be finite and nonnegative");
        const auto& row = spec.jump[i];
        if (row.empty()) {
            if (!spec.absorbing(i)) throw spec_error(name, "non-absorbing state has no jump distribution");
            continue;
        }
        if (row.size() != n) throw spec_error(name, "jump row has wrong length");
        double sum = 0.0;
        for (double w : row) {
            if (!(w >= 0.0 && std::isfinite(w))) throw spec_error(name, "negative or non-finite jump probability");
            sum += w;
        }
        if (std::abs(sum - 1.0) > honesty_tolerance)
            throw spec_error(name, "jump row sums to " + std::to_string(sum) + ", not 1 (process must be honest)");
        if (row[i] > 0.0) throw spec_error(name, "jump row puts mass on the state itself");
    }
    if (spec.base_metric) {
        const Matrix& b = *spec.base_metric;
        if (b.rows() != n || b.cols() != n) throw spec_error("", "base_metric has wrong shape");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (!(b(i, j) >= 0.0 && b(i, j) <= 1.0)) throw spec_error(spec.states[i], "base_metric entry outside [0,1]");
                if (b(i, j) != b(j, i)) throw spec_error(spec.states[i], "base_metric is not symmetric");
            }
        for (std::size_t i = 0; i < n; ++i)
            if (b(i, i) != 0.0) throw spec_error(spec.states[i], "base_metric has a nonzero diagonal");
    }
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

using ParameterMap = std::map<std::string, double>;

namespace detail {

inline double resolve_number(const nlohmann::json& v, const ParameterMap& params, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto name = v.get<std::string>();
        const auto it = params.find(name);
        if (it == params.end()) throw spec_error(where, "unknown parameter '" + name + "'");
        return it->second;
    }
    throw spec_error(where, "expected a number or a parameter name");
}

} // namespace detail

// Parses a process document. Numeric fields of obs and exit_rates may name an
// entry of the optional "parameters" object; `overrides` replaces declared
// parameter values.
inline ProcessSpec parse_spec(const nlohmann::json& doc, const ParameterMap& overrides = {}) {
    if (!doc.is_object()) throw spec_error("", "document must be a JSON object");
    for (const char* key : {"states", "obs", "exit_rates"})
        if (!doc.contains(key)) throw spec_error("", std::string("missing field '") + key + "'");

    ParameterMap params;
    if (doc.contains("parameters")) {
        if (!doc["parameters"].is_object()) throw spec_error("", "'parameters' must be an object");
        for (const auto& [key, value] : doc["parameters"].items()) {
            if (!value.is_number()) throw spec_error("", "parameter '" + key + "' must be a number");
            params[key] = value.get<double>();
        }
    }
    for (const auto& [key, value] : overrides) {
        if (!params.contains(key)) throw spec_error("", "override of undeclared parameter '" + key + "'");
        params[key] = value;
    }

    ProcessSpec spec;
    const auto& states = doc["states"];
    if (!states.is_array()) throw spec_error("", "'states' must be an array of names");
    for (const auto& s : states) {
        if (!s.is_string()) throw spec_error("", "state names must be strings");
        spec.states.push_back(s.get<std::string>());
    }
    const std::size_t n = spec.states.size();
    auto state_name = [&](std::size_t i) { return i < n ? spec.states[i] : std::string(); };

    const auto& obs = doc["obs"];
    const auto& rates = doc["exit_rates"];
    if (!obs.is_array() || obs.size() != n) throw spec_error("", "'obs' must be an array with one entry per state");
    if (!rates.is_array() || rates.size() != n) throw spec_error("", "'exit_rates' must be an array with one entry per state");
    for (std::size_t i = 0; i < n; ++i) {
        spec.obs.push_back(detail::resolve_number(obs[i], params, state_name(i)));
        spec.exit_rate.push_back(detail::resolve_number(rates[i], params, state_name(i)));
    }

    spec.jump.assign(n, {});
    if (doc.contains("jump")) {
        const auto& jump = doc["jump"];
        if (!jump.is_object()) throw spec_error("", "'jump' must map state names to distributions");
        for (const auto& [from, row] : jump.items()) {
            const StateIndex i = spec.index_of(from);
            if (!row.is_object()) throw spec_error(from, "jump distribution must be an object");
            std::vector<double> dense(n, 0.0);
            for (const auto& [to, p] : row.items()) {
                if (!p.is_number()) throw spec_error(from, "jump probability to '" + to + "' is not a number");
                dense[spec.index_of(to)] += p.get<double>();
            }
            spec.jump[i] = std::move(dense);
        }
    }

    if (doc.contains("base_metric") && !doc["base_metric"].is_null()) {
        const auto& bm = doc["base_metric"];
        if (!bm.is_array()) throw spec_error("", "'base_metric' must be an array");
        Matrix b(n, n);
        if (bm.size() == n * n && (n == 0 || bm[0].is_number())) {
            for (std::size_t k = 0; k < n * n; ++k) b(k / n, k % n) = bm[k].get<double>();
        } else if (bm.size() == n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!bm[i].is_array() || bm[i].size() != n) throw spec_error(state_name(i), "base_metric row has wrong length");
                for (std::size_t j = 0; j < n; ++j) b(i, j) = bm[i][j].get<double>();
            }
        } else {
            throw spec_error("", "'base_metric' must hold n*n entries");
        }
        spec.base_metric = std::move(b);
    }

    validate(spec);
    return spec;
}

inline ProcessSpec parse_spec(std::string_view text, const ParameterMap& overrides = {}) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw spec_error("", std::string("malformed document: ") + e.what());
    }
    return parse_spec(doc, overrides);
}

inline nlohmann::json to_json(const ProcessSpec& spec) {
    nlohmann::json doc;
    doc["states"] = spec.states;
    doc["obs"] = spec.obs;
    doc["exit_rates"] = spec.exit_rate;
    nlohmann::json jump = nlohmann::json::object();
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (spec.jump[i].empty()) continue;
        nlohmann::json row = nlohmann::json::object();
        for (std::size_t j = 0; j < spec.size(); ++j)
            if (spec.jump[i][j] > 0.0) row[spec.states[j]] = spec.jump[i][j];
        jump[spec.states[i]] = std::move(row);
    }
    doc["jump"] = std::move(jump);
    if (spec.base_metric) {
        std::vector<double> flat(spec.base_metric->data().begin(), spec.base_metric->data().end());
        doc["base_metric"] = std::move(flat);
    }
    return doc;
}

// Base metric of the process, or the discrete metric when none is given.
inline Matrix base_metric_or_discrete(const ProcessSpec& spec) {
    if (spec.base_metric) return *spec.base_metric;
    Matrix d(spec.size(), spec.size(), 1.0);
    for (std::size_t i = 0; i < spec.size(); ++i) d(i, i) = 0.0;
    return d;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

inline double max_exit_rate(const ProcessSpec& spec) {
    return spec.exit_rate.empty() ? 0.0 : *std::max_element(spec.exit_rate.begin(), spec.exit_rate.end());
}

// One-step matrix of the uniformized chain at rate `uniform_rate`.
inline Matrix uniformized_step(const ProcessSpec& spec, double uniform_rate) {
    const std::size_t n = spec.size();
    Matrix p(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (spec.absorbing(i)) {
            p(i, i) = 1.0;
            continue;
        }
        const double leave = spec.exit_rate[i] / uniform_rate;
        p(i, i) = 1.0 - leave;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) p(i, j) = leave * spec.jump[i][j];
    }
    return p;
}

// Kernel P_t as a row-stochastic matrix, computed by uniformization:
// P_t = sum_k Poisson(k; L t) S^k with S the uniformized step matrix. The
// Poisson series is truncated once the omitted mass is at most `tol`; rows are
// then renormalized.
inline Matrix transition_matrix_dense(const ProcessSpec& spec, double t, double tol = 1e-12) {
    if (!(std::isfinite(t) && t >= 0.0)) throw config_error("transition time must be finite and nonnegative");
    if (!(tol > 0.0 && tol <= 1e-6)) throw config_error("kernel tolerance must lie in (0, 1e-6]");
    const std::size_t n = spec.size();
    Matrix identity(n, n);
    for (std::size_t i = 0; i < n; ++i) identity(i, i) = 1.0;
    const double rate = max_exit_rate(spec);
    if (t == 0.0 || rate == 0.0) return identity;

    const Matrix step = uniformized_step(spec, rate);
    const double a = rate * t;
    const double log_a = std::log(a);
    const auto cap = static_cast<std::size_t>(a + 20.0 * std::sqrt(a) + 200.0);

    Matrix power = identity;
    Matrix result(n, n);
    double mass = 0.0;
    for (std::size_t k = 0; k <= cap; ++k) {
        const double w = std::exp(-a + static_cast<double>(k) * log_a - std::lgamma(static_cast<double>(k) + 1.0));
        if (w > 0.0) {
            for (std::size_t e = 0; e < n; ++e)
                for (std::size_t f = 0; f < n; ++f) result(e, f) += w * power(e, f);
        }
        mass += w;
        if (mass >= 1.0 - tol && static_cast<double>(k) >= a) break;
        power = multiply(power, step);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (spec.absorbing(i)) {
            std::fill(result.row(i).begin(), result.row(i).end(), 0.0);
            result(i, i) = 1.0;
            continue;
        }
        double row_sum = 0.0;
        for (double v : result.row(i)) row_sum += v;
        for (double& v : result.row(i)) v /= row_sum;
    }
    return result;
}

// Single row P_t(start, .) by the same uniformization series, propagating a
// row vector instead of matrix powers.
inline Distribution transition_row(const ProcessSpec& spec, StateIndex start, double t, double tol = 1e-12) {
    if (!(std::isfinite(t) && t >= 0.0)) throw config_error("transition time must be finite and nonnegative");
    if (!(tol > 0.0 && tol <= 1e-6)) throw config_error("kernel tolerance must lie in (0, 1e-6]");
    const std::size_t n = spec.size();
    const double rate = max_exit_rate(spec);
    if (t == 0.0 || rate == 0.0 || spec.absorbing(start)) return Distribution::point_mass(n, start);

    const Matrix step = uniformized_step(spec, rate);
    const double a = rate * t;
    const double log_a = std::log(a);
    const auto cap = static_cast<std::size_t>(a + 20.0 * std::sqrt(a) + 200.0);
    std::vector<double> v(n, 0.0), next(n), result(n, 0.0);
    v[start] = 1.0;
    double mass = 0.0;
    for (std::size_t k = 0; k <= cap; ++k) {
        const double w = std::exp(-a + static_cast<double>(k) * log_a - std::lgamma(static_cast<double>(k) + 1.0));
        for (std::size_t j = 0; j < n; ++j) result[j] += w * v[j];
        mass += w;
        if (mass >= 1.0 - tol && static_cast<double>(k) >= a) break;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (v[i] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) next[j] += v[i] * step(i, j);
        }
        v.swap(next);
    }
    double total = 0.0;
    for (double x : result) total += x;
    for (double& x : result) x /= total;
    return Distribution{std::move(result)};
}

inline std::vector<Distribution> transition_matrix(const ProcessSpec& spec, double t, double tol = 1e-12) {
    const Matrix p = transition_matrix_dense(spec, t, tol);
    std::vector<Distribution> rows;
    rows.reserve(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) rows.push_back({std::vector<double>(p.row(i).begin(), p.row(i).end())});
    return rows;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Jump {
    double time;
    StateIndex state;

    friend bool operator==(const Jump&, const Jump&) = default;
};

// Right-continuous piecewise-constant path on [0, horizon], frozen after its
// last jump.
struct Trajectory {
    StateIndex initial = 0;
    std::vector<Jump> jumps;
    double horizon = 1.0;

    [[nodiscard]] StateIndex state_at(double t) const {
        StateIndex s = initial;
        for (const Jump& j : jumps) {
            if (j.time > t) break;
            s = j.state;
        }
        return s;
    }

    [[nodiscard]] StateIndex final_state() const { return jumps.empty() ? initial : jumps.back().state; }

    [[nodiscard]] bool valid() const {
        if (!(horizon > 0.0)) return false;
        StateIndex prev = initial;
        double prev_t = 0.0;
        for (const Jump& j : jumps) {
            if (!(j.time > prev_t) || j.time > horizon || j.state == prev) return false;
            prev_t = j.time;
            prev = j.state;
        }
        return true;
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Random source used by the samplers. Substreams are derived from a base seed
// and a tuple of indices so results do not depend on evaluation order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    static RandomStream substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t h = mix(seed ^ 0x6a09e667f3bcc908ULL);
        h = mix(h ^ (a + 0x9e3779b97f4a7c15ULL));
        h = mix(h ^ (b + 0xbb67ae8584caa73bULL));
        h = mix(h ^ (c + 0x3c6ef372fe94f82bULL));
        return RandomStream(h);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    StateIndex categorical(std::span<const double> weights) {
        const double u = uniform();
        double cum = 0.0;
        StateIndex last = 0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (weights[k] <= 0.0) continue;
            cum += weights[k];
            last = k;
            if (u < cum) return k;
        }
        return last;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

// Strict weak order on trajectories (lexicographic on initial state, horizon, jumps).
inline bool trajectory_less(const Trajectory& a, const Trajectory& b) {
    if (a.initial != b.initial) return a.initial < b.initial;
    if (a.horizon != b.horizon) return a.horizon < b.horizon;
    const std::size_t n = std::min(a.jumps.size(), b.jumps.size());
    for (std::size_t k = 0; k < n; ++k) {
        if (a.jumps[k].time != b.jumps[k].time) return a.jumps[k].time < b.jumps[k].time;
        if (a.jumps[k].state != b.jumps[k].state) return a.jumps[k].state < b.jumps[k].state;
    }
    return a.jumps.size() < b.jumps.size();
}

inline Trajectory constant_trajectory(StateIndex s, double horizon) { return Trajectory{s, {}, horizon}; }

// Simulates the jump chain with exponential holding times until the horizon
// or an absorbing state is reached.
inline Trajectory sample_trajectory(const ProcessSpec& spec, StateIndex start, double horizon, RandomStream& stream) {
    if (!(horizon > 0.0 && std::isfinite(horizon))) throw config_error("trajectory horizon must be positive and finite");
    if (start >= spec.size()) throw spec_error("", "start state out of range");
    Trajectory out = constant_trajectory(start, horizon);
    double t = 0.0;
    StateIndex s = start;
    while (!spec.absorbing(s)) {
        t += stream.exponential(spec.exit_rate[s]);
        if (t > horizon) break;
        s = stream.categorical(spec.jump[s]);
        out.jumps.push_back({t, s});
    }
    return out;
}

// True when every path from `start` is absorbed after at most one jump.
inline bool single_jump_absorbing(const ProcessSpec& spec, StateIndex start) {
    if (spec.absorbing(start)) return true;
    for (std::size_t j = 0; j < spec.size(); ++j)
        if (spec.jump[start][j] > 0.0 && !spec.absorbing(j)) return false;
    return true;
}

// Splits `count` slots across targets proportionally to `weights` using the
// largest-remainder rule (ties go to the lower index).
inline std::vector<std::size_t> proportional_split(std::span<const double> weights, std::size_t count) {
    std::vector<std::size_t> out(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t used = 0;
    for (std::size_t j = 0; j < weights.size(); ++j) {
        const double exact = weights[j] * static_cast<double>(count);
        out[j] = static_cast<std::size_t>(std::floor(exact));
        used += out[j];
        if (weights[j] > 0.0) remainders.emplace_back(exact - static_cast<double>(out[j]), j);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < count && k < remainders.size(); ++k, ++used) ++out[remainders[k].second];
    return out;
}

// Deterministic equal-weight quantization of the trajectory law from `start`
// for processes that are absorbed after one jump. Jump times sit at the
// exponential quantiles -ln((i - 1/2)/k)/rate, k being the number of
// trajectories assigned to a jump target. Jumps after the horizon are dropped.
inline std::vector<Trajectory> stratified_jump_times(const ProcessSpec& spec, StateIndex start, std::size_t count,
                                                     double horizon) {
    if (count == 0) throw config_error("stratified sampling needs at least one trajectory");
    if (!(horizon > 0.0 && std::isfinite(horizon))) throw config_error("trajectory horizon must be positive and finite");
    if (spec.absorbing(start)) return {constant_trajectory(start, horizon)};
    if (!single_jump_absorbing(spec, start))
        throw unsupported_structure("state '" + spec.states[start] +
                                    "' can make more than one jump; stratified jump times need single-jump absorption");
    const double rate = spec.exit_rate[start];
    const auto split = proportional_split(spec.jump[start], count);
    std::vector<Trajectory> out;
    out.reserve(count);
    for (std::size_t target = 0; target < split.size(); ++target) {
        const std::size_t k = split[target];
        for (std::size_t i = k; i >= 1; --i) {
            const double time = -std::log((static_cast<double>(i) - 0.5) / static_cast<double>(k)) / rate;
            Trajectory tr = constant_trajectory(start, horizon);
            if (time <= horizon) tr.jumps.push_back({time, target});
            out.push_back(std::move(tr));
        }
    }
    return out;
}

} // namespace ctbm
