#pragma once

// The five-state "learning" process. From x the correct value (0) is learnt
// at rate lambda; y never learns; z learns at rate lambda but ends in the
// correct state 0 or the incorrect state ∂ with probability 1/2 each.
// Observables are 1 on 0, 0 on ∂ and r elsewhere.

#include "ctbm/error.hpp"
#include "ctbm/matrix.hpp"
#include "ctbm/process.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

namespace ctbm {

struct ExampleParams {
    double r = 0.5;
    double lambda = 1.0;

    void validate() const {
        if (!(r > 0.0 && r < 1.0)) throw config_error("example parameter r must lie in (0,1)");
        if (!(lambda > 0.0 && std::isfinite(lambda))) throw config_error("example parameter lambda must be positive");
    }

    [[nodiscard]] double discount() const { return std::exp(-lambda); }
};

// Indices of the five roles inside a concrete spec.
struct ExampleLayout {
    StateIndex zero = 0, x = 1, y = 2, z = 3, dead = 4;

    [[nodiscard]] std::array<StateIndex, 5> all() const { return {zero, x, y, z, dead}; }
};

inline ProcessSpec learning_example(const ExampleParams& p) {
    p.validate();
    ProcessSpec spec;
    spec.states = {"0", "x", "y", "z", "∂"};
    spec.obs = {1.0, p.r, p.r, p.r, 0.0};
    spec.exit_rate = {0.0, p.lambda, 0.0, p.lambda, 0.0};
    spec.jump.assign(5, {});
    spec.jump[1] = {1.0, 0.0, 0.0, 0.0, 0.0};
    spec.jump[3] = {0.5, 0.0, 0.0, 0.0, 0.5};
    validate(spec);
    return spec;
}

inline ProcessSpec learning_example(double r, double lambda = 1.0) { return learning_example(ExampleParams{r, lambda}); }

struct ExampleMatch {
    ExampleParams params;
    ExampleLayout layout;
};

// Recognizes the example family by structure, whatever the state names and
// their order.
inline std::optional<ExampleMatch> match_learning_example(const ProcessSpec& spec) {
    if (spec.size() != 5 || spec.base_metric) return std::nullopt;
    std::vector<StateIndex> moving, resting;
    for (StateIndex i = 0; i < 5; ++i) (spec.absorbing(i) ? resting : moving).push_back(i);
    if (moving.size() != 2 || resting.size() != 3) return std::nullopt;
    if (spec.exit_rate[moving[0]] != spec.exit_rate[moving[1]]) return std::nullopt;

    const auto support = [&](StateIndex s) {
        std::vector<StateIndex> out;
        for (StateIndex j = 0; j < 5; ++j)
            if (spec.jump[s][j] > 0.0) out.push_back(j);
        return out;
    };
    for (int swap = 0; swap < 2; ++swap) {
        const StateIndex x = moving[swap], z = moving[1 - swap];
        const auto sx = support(x), sz = support(z);
        if (sx.size() != 1 || sz.size() != 2) continue;
        const StateIndex zero = sx[0];
        if (std::find(sz.begin(), sz.end(), zero) == sz.end()) continue;
        const StateIndex dead = sz[0] == zero ? sz[1] : sz[0];
        if (spec.jump[z][zero] != 0.5 || spec.jump[z][dead] != 0.5) continue;
        StateIndex y = 5;
        for (StateIndex s : resting)
            if (s != zero && s != dead) y = s;
        if (y == 5) continue;
        const double r = spec.obs[x];
        if (spec.obs[zero] != 1.0 || spec.obs[dead] != 0.0 || spec.obs[y] != r || spec.obs[z] != r) continue;
        if (!(r > 0.0 && r < 1.0)) continue;
        return ExampleMatch{ExampleParams{r, spec.exit_rate[x]}, ExampleLayout{zero, x, y, z, dead}};
    }
    return std::nullopt;
}

// Closed-form limits of the kernel-based fixpoint. The (x,z) entry is only
// known to lie in [1/8, 1/4]; the table holds the upper end.
inline Matrix kernel_limit_table(double r, const ExampleLayout& L = {}) {
    Matrix t(5, 5);
    const auto put = [&](StateIndex a, StateIndex b, double v) { t(a, b) = t(b, a) = v; };
    put(L.zero, L.dead, 1.0);
    put(L.x, L.zero, 1.0 - r);
    put(L.y, L.zero, 1.0 - r);
    put(L.y, L.dead, r);
    put(L.x, L.y, (1.0 - r) / 2.0);
    put(L.y, L.z, 0.25);
    put(L.x, L.dead, std::max(r, 0.5));
    put(L.z, L.dead, std::max(r, 0.25));
    put(L.z, L.zero, r >= 0.75 ? 0.25 : 1.0 - r);
    put(L.x, L.z, 0.25);
    return t;
}

inline constexpr double kernel_xz_lower = 0.125;
inline constexpr double kernel_xz_upper = 0.25;

// Closed-form limits of the trajectory-based fixpoint.
inline Matrix trajectory_limit_table(double r, const ExampleLayout& L = {}) {
    Matrix t(5, 5);
    const auto put = [&](StateIndex a, StateIndex b, double v) { t(a, b) = t(b, a) = v; };
    put(L.x, L.y, 1.0 - r);
    put(L.x, L.z, 1.0);
    put(L.x, L.dead, 1.0);
    put(L.x, L.zero, 1.0 - r);
    put(L.y, L.z, std::max(r, 1.0 - r));
    put(L.y, L.dead, r);
    put(L.y, L.zero, 1.0 - r);
    put(L.z, L.dead, 1.0);
    put(L.z, L.zero, 1.0);
    put(L.zero, L.dead, 1.0);
    return t;
}

} // namespace ctbm
