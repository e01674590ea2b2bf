#pragma once

#include "ctbm/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace ctbm {

// Outcome of checking the pseudometric axioms on a square matrix.
struct MetricCheck {
    bool square = true;
    bool symmetric = true;      // exact
    bool zero_diagonal = true;  // exact
    bool bounded = true;        // entries in [0,1]
    bool triangle = true;       // within the tolerance passed to check_pseudometric
    double worst_triangle_excess = 0.0;

    [[nodiscard]] bool ok() const { return square && symmetric && zero_diagonal && bounded && triangle; }

    [[nodiscard]] std::string describe() const {
        if (ok()) return "ok";
        std::ostringstream os;
        if (!square) os << "not square; ";
        if (!symmetric) os << "not symmetric; ";
        if (!zero_diagonal) os << "nonzero diagonal; ";
        if (!bounded) os << "entries outside [0,1]; ";
        if (!triangle) os << "triangle inequality violated by " << worst_triangle_excess << "; ";
        return os.str();
    }
};

inline MetricCheck check_pseudometric(const Matrix& m, double triangle_tol = 1e-12) {
    MetricCheck out;
    if (!m.square()) {
        out.square = false;
        return out;
    }
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i) {
        if (m(i, i) != 0.0) out.zero_diagonal = false;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = m(i, j);
            if (!(v >= 0.0 && v <= 1.0)) out.bounded = false;
            if (v != m(j, i)) out.symmetric = false;
        }
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double excess = m(i, j) - (m(i, k) + m(k, j));
                out.worst_triangle_excess = std::max(out.worst_triangle_excess, excess);
            }
    out.triangle = out.worst_triangle_excess <= triangle_tol;
    return out;
}

// Symmetric 1-bounded matrix with zero diagonal. Symmetry and the zero diagonal
// hold by construction; the triangle inequality is checked, not enforced.
class PseudometricMatrix {
public:
    PseudometricMatrix() = default;
    explicit PseudometricMatrix(std::size_t n) : entries_(n, n, 0.0) {}

    // Validates all axioms; triangle inequality within `triangle_tol`.
    static PseudometricMatrix from_matrix(const Matrix& m, double triangle_tol = 1e-12) {
        const MetricCheck check = check_pseudometric(m, triangle_tol);
        if (!check.ok()) throw not_a_pseudometric("matrix is not a pseudometric: " + check.describe());
        PseudometricMatrix out;
        out.entries_ = m;
        return out;
    }

    static PseudometricMatrix discrete(std::size_t n) {
        PseudometricMatrix out(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out.entries_(i, j) = i == j ? 0.0 : 1.0;
        return out;
    }

    [[nodiscard]] std::size_t size() const { return entries_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }

    // Writes both (i,j) and (j,i). Values are clamped into [0,1].
    void set(std::size_t i, std::size_t j, double v) {
        if (i == j) return;
        v = std::clamp(v, 0.0, 1.0);
        entries_(i, j) = v;
        entries_(j, i) = v;
    }

    [[nodiscard]] const Matrix& matrix() const { return entries_; }

    friend bool operator==(const PseudometricMatrix&, const PseudometricMatrix&) = default;

private:
    Matrix entries_;
};

// Largest pseudometric below the symmetrised, clamped input: all-pairs shortest
// path closure. Used to remove floating-point triangle violations.
inline PseudometricMatrix metric_closure(const Matrix& m) {
    if (!m.square()) throw dimension_error("metric_closure: matrix is not square");
    const std::size_t n = m.rows();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::clamp(std::min(m(i, j), m(j, i)), 0.0, 1.0);
            d(i, j) = v;
            d(j, i) = v;
        }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double via = d(i, k) + d(k, j);
                if (via < d(i, j)) {
                    d(i, j) = via;
                    d(j, i) = via;
                }
            }
    PseudometricMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out.set(i, j, d(i, j));
    return out;
}

// Entrywise max of `repaired` and `floor`. Used after metric repair to keep
// fixpoint iterates nondecreasing; both inputs are pseudometrics up to rounding.
inline PseudometricMatrix entrywise_max(const PseudometricMatrix& repaired, const PseudometricMatrix& floor) {
    if (repaired.size() != floor.size()) throw dimension_error("entrywise_max: size mismatch");
    PseudometricMatrix out = repaired;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j) out.set(i, j, std::max(repaired(i, j), floor(i, j)));
    return out;
}

inline bool dominates(const PseudometricMatrix& hi, const PseudometricMatrix& lo, double slack = 0.0) {
    if (hi.size() != lo.size()) throw dimension_error("dominates: size mismatch");
    for (std::size_t i = 0; i < hi.size(); ++i)
        for (std::size_t j = 0; j < hi.size(); ++j)
            if (hi(i, j) + slack < lo(i, j)) return false;
    return true;
}

} // namespace ctbm
