#pragma once

#include "ctbm/error.hpp"
#include "ctbm/kernel_metric.hpp"
#include "ctbm/process.hpp"
#include "ctbm/trajectory_metric.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace ctbm {

// Λ: q | obs | min(f,f) | 1-f | f (-) q | <t> f
// Lσ: q | obs | 1-f | int(g), with g in Lτ: f @ t | min(g,g) | max(g,g) | g (-) q | g (+) q
// max and (+) are derived in both state logics; min and (-) are derived in Lσ.
enum class Dialect { lambda, sigma };

struct StateFormula;
struct TrajectoryFormula;
using StatePtr = std::shared_ptr<const StateFormula>;
using TrajectoryPtr = std::shared_ptr<const TrajectoryFormula>;

struct StateFormula {
    enum class Kind { constant, obs, min, max, negate, minus, plus, diamond, integral };
    Kind kind = Kind::constant;
    double value = 0.0;  // constant, or the q of minus/plus, or the t of diamond
    StatePtr a, b;
    TrajectoryPtr g;
};

struct TrajectoryFormula {
    enum class Kind { eval_at, min, max, minus, plus };
    Kind kind = Kind::eval_at;
    double value = 0.0;  // t of eval_at, q of minus/plus
    StatePtr f;
    TrajectoryPtr a, b;
};

bool operator==(const StateFormula& x, const StateFormula& y);
bool operator==(const TrajectoryFormula& x, const TrajectoryFormula& y);

namespace detail {
template <class P>
bool same_ptr(const P& x, const P& y) {
    if (!x || !y) return !x && !y;
    return x == y || *x == *y;
}
} // namespace detail

inline bool operator==(const StateFormula& x, const StateFormula& y) {
    return x.kind == y.kind && x.value == y.value && detail::same_ptr(x.a, y.a) && detail::same_ptr(x.b, y.b) &&
           detail::same_ptr(x.g, y.g);
}

inline bool operator==(const TrajectoryFormula& x, const TrajectoryFormula& y) {
    return x.kind == y.kind && x.value == y.value && detail::same_ptr(x.f, y.f) && detail::same_ptr(x.a, y.a) &&
           detail::same_ptr(x.b, y.b);
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

namespace formula {

inline double checked_constant(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw config_error("formula constant must lie in [0,1]");
    return q;
}

inline double checked_time(double t) {
    if (!(t >= 0.0 && std::isfinite(t))) throw config_error("formula time must be finite and nonnegative");
    return t;
}

inline StatePtr make(StateFormula::Kind k, double v = 0.0, StatePtr a = {}, StatePtr b = {}, TrajectoryPtr g = {}) {
    return std::make_shared<const StateFormula>(StateFormula{k, v, std::move(a), std::move(b), std::move(g)});
}

inline TrajectoryPtr make_t(TrajectoryFormula::Kind k, double v = 0.0, StatePtr f = {}, TrajectoryPtr a = {}, TrajectoryPtr b = {}) {
    return std::make_shared<const TrajectoryFormula>(TrajectoryFormula{k, v, std::move(f), std::move(a), std::move(b)});
}

using SK = StateFormula::Kind;
using TK = TrajectoryFormula::Kind;

inline StatePtr constant(double q) { return make(SK::constant, checked_constant(q)); }
inline StatePtr obs() { return make(SK::obs); }
inline StatePtr min(StatePtr f, StatePtr g) { return make(SK::min, 0.0, std::move(f), std::move(g)); }
inline StatePtr max(StatePtr f, StatePtr g) { return make(SK::max, 0.0, std::move(f), std::move(g)); }
inline StatePtr negate(StatePtr f) { return make(SK::negate, 0.0, std::move(f)); }
inline StatePtr minus(StatePtr f, double q) { return make(SK::minus, checked_constant(q), std::move(f)); }
inline StatePtr plus(StatePtr f, double q) { return make(SK::plus, checked_constant(q), std::move(f)); }
inline StatePtr diamond(double t, StatePtr f) { return make(SK::diamond, checked_time(t), std::move(f)); }
inline StatePtr integral(TrajectoryPtr g) { return make(SK::integral, 0.0, {}, {}, std::move(g)); }

inline TrajectoryPtr eval_at(StatePtr f, double t) { return make_t(TK::eval_at, checked_time(t), std::move(f)); }
inline TrajectoryPtr min(TrajectoryPtr g, TrajectoryPtr h) { return make_t(TK::min, 0.0, {}, std::move(g), std::move(h)); }
inline TrajectoryPtr max(TrajectoryPtr g, TrajectoryPtr h) { return make_t(TK::max, 0.0, {}, std::move(g), std::move(h)); }
inline TrajectoryPtr minus(TrajectoryPtr g, double q) { return make_t(TK::minus, checked_constant(q), {}, std::move(g)); }
inline TrajectoryPtr plus(TrajectoryPtr g, double q) { return make_t(TK::plus, checked_constant(q), {}, std::move(g)); }

} // namespace formula

inline std::size_t depth(const StateFormula& f);
inline std::size_t depth(const TrajectoryFormula& g) {
    using K = TrajectoryFormula::Kind;
    switch (g.kind) {
    case K::eval_at: return 1 + depth(*g.f);
    case K::min:
    case K::max: return 1 + std::max(depth(*g.a), depth(*g.b));
    default: return 1 + depth(*g.a);
    }
}

inline std::size_t depth(const StateFormula& f) {
    using K = StateFormula::Kind;
    switch (f.kind) {
    case K::constant:
    case K::obs: return 0;
    case K::min:
    case K::max: return 1 + std::max(depth(*f.a), depth(*f.b));
    case K::integral: return 1 + depth(*f.g);
    default: return 1 + depth(*f.a);
    }
}

// Throws dialect_error if `f` uses a constructor outside the dialect.
inline void check_dialect(const StateFormula& f, Dialect d);
inline void check_dialect(const TrajectoryFormula& g, Dialect d) {
    if (d == Dialect::lambda) throw dialect_error("trajectory formulas are not part of the Λ logic");
    if (g.f) check_dialect(*g.f, d);
    if (g.a) check_dialect(*g.a, d);
    if (g.b) check_dialect(*g.b, d);
}

inline void check_dialect(const StateFormula& f, Dialect d) {
    using K = StateFormula::Kind;
    if (f.kind == K::diamond && d == Dialect::sigma) throw dialect_error("<t> is not part of the Lσ logic");
    if (f.kind == K::integral && d == Dialect::lambda) throw dialect_error("int(...) is not part of the Λ logic");
    if (f.a) check_dialect(*f.a, d);
    if (f.b) check_dialect(*f.b, d);
    if (f.g) check_dialect(*f.g, d);
}

// Rewrites derived constructors into the primitive grammar of the dialect.
inline StatePtr expand_derived(const StatePtr& f, Dialect d);
inline TrajectoryPtr expand_derived(const TrajectoryPtr& g, Dialect d) {
    using K = TrajectoryFormula::Kind;
    switch (g->kind) {
    case K::eval_at: return formula::eval_at(expand_derived(g->f, d), g->value);
    case K::min: return formula::min(expand_derived(g->a, d), expand_derived(g->b, d));
    case K::max: return formula::max(expand_derived(g->a, d), expand_derived(g->b, d));
    case K::minus: return formula::minus(expand_derived(g->a, d), g->value);
    case K::plus: return formula::plus(expand_derived(g->a, d), g->value);
    }
    return g;
}

inline StatePtr expand_derived(const StatePtr& f, Dialect d) {
    using K = StateFormula::Kind;
    namespace F = formula;
    switch (f->kind) {
    case K::constant:
    case K::obs: return f;
    case K::negate: return F::negate(expand_derived(f->a, d));
    case K::diamond: return F::diamond(f->value, expand_derived(f->a, d));
    case K::integral: return F::integral(expand_derived(f->g, d));
    case K::max: return expand_derived(F::negate(F::min(F::negate(f->a), F::negate(f->b))), d);
    case K::plus: return expand_derived(F::negate(F::minus(F::negate(f->a), f->value)), d);
    case K::min:
        if (d == Dialect::lambda) return F::min(expand_derived(f->a, d), expand_derived(f->b, d));
        return F::integral(F::min(F::eval_at(expand_derived(f->a, d), 0.0), F::eval_at(expand_derived(f->b, d), 0.0)));
    case K::minus:
        if (d == Dialect::lambda) return F::minus(expand_derived(f->a, d), f->value);
        return F::integral(F::minus(F::eval_at(expand_derived(f->a, d), 0.0), f->value));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Text syntax
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

// Whether the printed form of a node ends in a postfix operator, which must
// be parenthesized under a prefix operator.
inline bool postfix_form(const StateFormula& f) {
    return f.kind == StateFormula::Kind::minus || f.kind == StateFormula::Kind::plus;
}

} // namespace detail

inline std::string to_string(const StateFormula& f);
inline std::string to_string(const TrajectoryFormula& g) {
    using K = TrajectoryFormula::Kind;
    switch (g.kind) {
    case K::eval_at: {
        std::string inner = to_string(*g.f);
        return inner + " @ " + format_number(g.value);
    }
    case K::min: return "min(" + to_string(*g.a) + ", " + to_string(*g.b) + ")";
    case K::max: return "max(" + to_string(*g.a) + ", " + to_string(*g.b) + ")";
    case K::minus: return to_string(*g.a) + " (-) " + format_number(g.value);
    case K::plus: return to_string(*g.a) + " (+) " + format_number(g.value);
    }
    return {};
}

inline std::string to_string(const StateFormula& f) {
    using K = StateFormula::Kind;
    const auto operand = [](const StateFormula& x) {
        return detail::postfix_form(x) ? "(" + to_string(x) + ")" : to_string(x);
    };
    switch (f.kind) {
    case K::constant: return format_number(f.value);
    case K::obs: return "obs";
    case K::min: return "min(" + to_string(*f.a) + ", " + to_string(*f.b) + ")";
    case K::max: return "max(" + to_string(*f.a) + ", " + to_string(*f.b) + ")";
    case K::negate: return "1-" + operand(*f.a);
    case K::minus: return to_string(*f.a) + " (-) " + format_number(f.value);
    case K::plus: return to_string(*f.a) + " (+) " + format_number(f.value);
    case K::diamond: return "<" + format_number(f.value) + "> " + operand(*f.a);
    case K::integral: return "int(" + to_string(*f.g) + ")";
    }
    return {};
}

namespace detail {

struct SyntaxNode {
    enum class Kind { number, obs, min, max, negate, minus, plus, diamond, integral, eval_at };
    Kind kind;
    double value = 0.0;
    std::size_t offset = 0;
    std::vector<std::unique_ptr<SyntaxNode>> children;
};

class FormulaParser {
public:
    explicit FormulaParser(std::string_view text) : text_(text) {}

    std::unique_ptr<SyntaxNode> parse() {
        auto node = expression();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return node;
    }

private:
    using Node = std::unique_ptr<SyntaxNode>;
    using K = SyntaxNode::Kind;

    [[noreturn]] void fail(const std::string& what) const {
        throw parse_error(what + " at offset " + std::to_string(pos_), pos_);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(std::string_view token) {
        skip_space();
        if (text_.substr(pos_, token.size()) == token) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    void expect(std::string_view token) {
        if (!accept(token)) fail("expected '" + std::string(token) + "'");
    }

    bool keyword(std::string_view word) {
        skip_space();
        if (text_.substr(pos_, word.size()) != word) return false;
        const std::size_t end = pos_ + word.size();
        if (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) return false;
        pos_ = end;
        return true;
    }

    bool at_number() {
        skip_space();
        return pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.');
    }

    double number() {
        skip_space();
        std::size_t end = pos_;
        while (end < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[end])) || text_[end] == '.' || text_[end] == 'e' ||
                text_[end] == 'E' || ((text_[end] == '-' || text_[end] == '+') && end > pos_ &&
                                      (text_[end - 1] == 'e' || text_[end - 1] == 'E'))))
            ++end;
        double v = 0.0;
        const auto res = std::from_chars(text_.data() + pos_, text_.data() + end, v);
        if (res.ec != std::errc() || res.ptr != text_.data() + end || end == pos_) fail("malformed number");
        pos_ = end;
        return v;
    }

    Node make(K kind, std::size_t at, double value = 0.0) {
        auto n = std::make_unique<SyntaxNode>();
        n->kind = kind;
        n->value = value;
        n->offset = at;
        return n;
    }

    Node expression() {
        Node node = prefix();
        for (;;) {
            const std::size_t at = pos_;
            K kind;
            if (accept("(-)")) kind = K::minus;
            else if (accept("(+)")) kind = K::plus;
            else if (accept("@")) kind = K::eval_at;
            else break;
            Node op = make(kind, at, number());
            op->children.push_back(std::move(node));
            node = std::move(op);
        }
        return node;
    }

    Node prefix() {
        skip_space();
        const std::size_t at = pos_;
        if (accept("<")) {
            const double t = number();
            expect(">");
            Node op = make(K::diamond, at, t);
            op->children.push_back(prefix());
            return op;
        }
        if (at_number()) {
            const double v = number();
            const std::size_t after = pos_;
            skip_space();
            if (v == 1.0 && pos_ < text_.size() && text_[pos_] == '-') {
                ++pos_;
                Node op = make(K::negate, at);
                op->children.push_back(prefix());
                return op;
            }
            pos_ = after;
            return make(K::number, at, v);
        }
        return primary();
    }

    Node primary() {
        skip_space();
        const std::size_t at = pos_;
        if (keyword("obs")) return make(K::obs, at);
        for (auto [word, kind] : {std::pair{"min", K::min}, std::pair{"max", K::max}}) {
            if (keyword(word)) {
                expect("(");
                Node op = make(kind, at);
                op->children.push_back(expression());
                expect(",");
                op->children.push_back(expression());
                expect(")");
                return op;
            }
        }
        if (keyword("int")) {
            expect("(");
            Node op = make(K::integral, at);
            op->children.push_back(expression());
            expect(")");
            return op;
        }
        if (accept("(")) {
            Node inner = expression();
            expect(")");
            return inner;
        }
        fail(pos_ < text_.size() ? "unexpected character" : "unexpected end of input");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

struct Typed {
    StatePtr state;
    TrajectoryPtr trajectory;
};

inline Typed type_check(const SyntaxNode& n) {
    using K = SyntaxNode::Kind;
    namespace F = formula;
    const auto fail = [&](const std::string& what) -> Typed { throw parse_error(what + " at offset " + std::to_string(n.offset), n.offset); };
    const auto state_child = [&](std::size_t i) {
        Typed c = type_check(*n.children[i]);
        if (!c.state) fail("expected a state formula");
        return c.state;
    };
    const auto traj_child = [&](std::size_t i) {
        Typed c = type_check(*n.children[i]);
        if (!c.trajectory) fail("expected a trajectory formula");
        return c.trajectory;
    };
    try {
        switch (n.kind) {
        case K::number: return {F::constant(n.value), {}};
        case K::obs: return {F::obs(), {}};
        case K::negate: return {F::negate(state_child(0)), {}};
        case K::diamond: return {F::diamond(n.value, state_child(0)), {}};
        case K::integral: return {F::integral(traj_child(0)), {}};
        case K::eval_at: return {{}, F::eval_at(state_child(0), n.value)};
        case K::min:
        case K::max: {
            Typed l = type_check(*n.children[0]);
            Typed r = type_check(*n.children[1]);
            if (l.state && r.state) return {n.kind == K::min ? F::min(l.state, r.state) : F::max(l.state, r.state), {}};
            if (l.trajectory && r.trajectory)
                return {{}, n.kind == K::min ? F::min(l.trajectory, r.trajectory) : F::max(l.trajectory, r.trajectory)};
            return fail("min/max operands mix state and trajectory formulas");
        }
        case K::minus:
        case K::plus: {
            Typed c = type_check(*n.children[0]);
            if (c.state) return {n.kind == K::minus ? F::minus(c.state, n.value) : F::plus(c.state, n.value), {}};
            return {{}, n.kind == K::minus ? F::minus(c.trajectory, n.value) : F::plus(c.trajectory, n.value)};
        }
        }
    } catch (const config_error& e) {
        return fail(e.what());
    }
    return fail("unknown node");
}

} // namespace detail

inline StatePtr parse_state_formula(std::string_view text) {
    const auto tree = detail::FormulaParser(text).parse();
    detail::Typed t = detail::type_check(*tree);
    if (!t.state) throw parse_error("expected a state formula, got a trajectory formula", 0);
    return t.state;
}

inline TrajectoryPtr parse_trajectory_formula(std::string_view text) {
    const auto tree = detail::FormulaParser(text).parse();
    detail::Typed t = detail::type_check(*tree);
    if (!t.trajectory) throw parse_error("expected a trajectory formula, got a state formula", 0);
    return t.trajectory;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Evaluates formulas on all states at once. Diamonds use the exact kernels;
// integrals average over a fixed sample bank, shared by every evaluation made
// through the same evaluator.
class Evaluator {
public:
    Evaluator(ProcessSpec spec, MetricConfig cfg, SamplingConfig sampling = {})
        : spec_(std::move(spec)), cfg_(cfg), sampling_(sampling) {
        cfg_.validate();
    }

    [[nodiscard]] const ProcessSpec& spec() const { return spec_; }
    [[nodiscard]] const MetricConfig& config() const { return cfg_; }
    [[nodiscard]] bool truncated() const { return truncated_; }

    std::vector<double> values(const StateFormula& f) {
        using K = StateFormula::Kind;
        const std::size_t n = spec_.size();
        switch (f.kind) {
        case K::constant: return std::vector<double>(n, f.value);
        case K::obs: return spec_.obs;
        case K::min: return pointwise_min(values(*f.a), values(*f.b));
        case K::max: return pointwise_max(values(*f.a), values(*f.b));
        case K::negate: return negate(values(*f.a));
        case K::minus: return minus(values(*f.a), f.value);
        case K::plus: return plus(values(*f.a), f.value);
        case K::diamond: return diamond(f.value, values(*f.a));
        case K::integral: {
            std::vector<double> out(n);
            for (StateIndex s = 0; s < n; ++s) out[s] = integral(*f.g, s);
            return out;
        }
        }
        return {};
    }

    double eval_state(const StateFormula& f, StateIndex x) { return values(f).at(x); }

    double eval_trajectory(const TrajectoryFormula& g, const Trajectory& w) { return trajectory_values(g, {&w, 1}).front(); }

    // g evaluated on each of `paths`.
    std::vector<double> trajectory_values(const TrajectoryFormula& g, std::span<const Trajectory> paths) {
        using K = TrajectoryFormula::Kind;
        switch (g.kind) {
        case K::eval_at: {
            const std::vector<double> fv = values(*g.f);
            const double weight = std::pow(cfg_.discount, g.value);
            std::vector<double> out(paths.size());
            for (std::size_t i = 0; i < paths.size(); ++i) {
                if (g.value > paths[i].horizon) truncated_ = true;
                out[i] = weight * fv[paths[i].state_at(g.value)];
            }
            return out;
        }
        case K::min: return pointwise_min(trajectory_values(*g.a, paths), trajectory_values(*g.b, paths));
        case K::max: return pointwise_max(trajectory_values(*g.a, paths), trajectory_values(*g.b, paths));
        case K::minus: return minus(trajectory_values(*g.a, paths), g.value);
        case K::plus: return plus(trajectory_values(*g.a, paths), g.value);
        }
        return {};
    }

    // Mean of g over the sample bank of state s.
    double integral(const TrajectoryFormula& g, StateIndex s) {
        const SampleBank& b = bank();
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t rep = 0; rep < b.reps_for(s); ++rep) {
            const auto& paths = b.samples(s, rep);
            for (double v : trajectory_values(g, paths)) total += v;
            count += paths.size();
        }
        return std::clamp(total / static_cast<double>(count), 0.0, 1.0);
    }

    std::vector<double> diamond(double t, const std::vector<double>& fv) {
        const Matrix& p = kernel(t);
        const double weight = std::pow(cfg_.discount, t);
        std::vector<double> out(fv.size());
        for (std::size_t i = 0; i < fv.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < fv.size(); ++j) acc += p(i, j) * fv[j];
            out[i] = std::clamp(weight * acc, 0.0, 1.0);
        }
        return out;
    }

    // Per-state path sets used for integrals.
    const SampleBank& bank() {
        if (!bank_) bank_.emplace(spec_, cfg_.horizon(), sampling_);
        return *bank_;
    }

    static std::vector<double> negate(std::vector<double> v) {
        for (double& x : v) x = 1.0 - x;
        return v;
    }
    static std::vector<double> minus(std::vector<double> v, double q) {
        for (double& x : v) x = std::max(0.0, x - q);
        return v;
    }
    static std::vector<double> plus(std::vector<double> v, double q) {
        for (double& x : v) x = std::min(1.0, x + q);
        return v;
    }
    static std::vector<double> pointwise_min(std::vector<double> a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::min(a[i], b[i]);
        return a;
    }
    static std::vector<double> pointwise_max(std::vector<double> a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::max(a[i], b[i]);
        return a;
    }

private:
    const Matrix& kernel(double t) {
        auto it = kernels_.find(t);
        if (it == kernels_.end()) it = kernels_.emplace(t, transition_matrix_dense(spec_, t, cfg_.kernel_tolerance)).first;
        return it->second;
    }

    ProcessSpec spec_;
    MetricConfig cfg_;
    SamplingConfig sampling_;
    std::map<double, Matrix> kernels_;
    std::optional<SampleBank> bank_;
    bool truncated_ = false;
};

inline double eval_state(const StateFormula& f, StateIndex x, const ProcessSpec& spec, const MetricConfig& cfg,
                         const SamplingConfig& sampling = {}) {
    return Evaluator(spec, cfg, sampling).eval_state(f, x);
}

inline double eval_trajectory(const TrajectoryFormula& g, const Trajectory& w, const ProcessSpec& spec, const MetricConfig& cfg,
                              const SamplingConfig& sampling = {}) {
    return Evaluator(spec, cfg, sampling).eval_trajectory(g, w);
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

// Times 0 and count-1 log-spaced values in [t_min, t_max], rounded to four
// decimals so that they are exact decimal rationals.
inline std::vector<double> log_time_grid(std::size_t count, double t_min, double t_max) {
    if (count < 2 || !(t_min > 0.0 && t_max > t_min)) throw config_error("log time grid needs count >= 2 and 0 < t_min < t_max");
    std::vector<double> out{0.0};
    const double ratio = std::log(t_max / t_min) / static_cast<double>(count - 2);
    for (std::size_t k = 0; k + 1 < count; ++k) {
        const double t = t_min * std::exp(ratio * static_cast<double>(k));
        out.push_back(std::round(t * 1e4) / 1e4);
    }
    return out;
}

struct EnumerationConfig {
    Dialect dialect = Dialect::lambda;
    std::size_t depth = 3;
    std::size_t constant_grid = 8;          // constants k / constant_grid
    std::vector<double> times;              // empty: log_time_grid(16, 1/64, horizon)
    std::size_t level_cap = 4000;           // formulas kept per depth level
    std::size_t pair_pool = 24;             // operands considered for binary constructors
    std::size_t max_formulas = 200000;

    static constexpr std::size_t max_depth = 5;
};

struct EnumeratedFormula {
    StatePtr formula;
    std::vector<double> values;  // per state
};

struct EnumerationResult {
    std::vector<EnumeratedFormula> formulas;
    bool truncated = false;  // stopped by max_formulas
};

namespace detail {

inline std::vector<long long> fingerprint(const std::vector<double>& v) {
    std::vector<long long> key(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) key[i] = std::llround(v[i] * 1e12);
    return key;
}

} // namespace detail

// Breadth-first enumeration by depth with deduplication on the value vector.
// Each level keeps the `level_cap` formulas that score highest; `score`
// ranks a value vector (for a distance bound: the separation of the pair).
template <class Score>
EnumerationResult enumerate_formulas(Evaluator& ev, const EnumerationConfig& ec, Score&& score) {
    if (ec.depth > EnumerationConfig::max_depth)
        throw budget_exceeded("enumeration depth " + std::to_string(ec.depth) + " exceeds the limit of " +
                              std::to_string(EnumerationConfig::max_depth));
    if (ec.constant_grid == 0) throw config_error("constant grid must be positive");
    namespace F = formula;
    const std::vector<double> times = ec.times.empty() ? log_time_grid(16, 1.0 / 64.0, ev.config().horizon()) : ec.times;
    std::vector<double> constants;
    for (std::size_t k = 0; k <= ec.constant_grid; ++k) constants.push_back(static_cast<double>(k) / static_cast<double>(ec.constant_grid));

    EnumerationResult result;
    std::set<std::vector<long long>> seen;
    const auto add = [&](std::vector<EnumeratedFormula>& level, StatePtr f, std::vector<double> v) {
        if (result.formulas.size() + level.size() >= ec.max_formulas) {
            result.truncated = true;
            return;
        }
        if (!seen.insert(detail::fingerprint(v)).second) return;
        level.push_back({std::move(f), std::move(v)});
    };
    const auto keep_best = [&](std::vector<EnumeratedFormula>& level) {
        if (level.size() <= ec.level_cap) return;
        std::stable_sort(level.begin(), level.end(),
                         [&](const EnumeratedFormula& a, const EnumeratedFormula& b) { return score(a.values) > score(b.values); });
        level.resize(ec.level_cap);
    };

    std::vector<EnumeratedFormula> frontier;
    for (double q : constants) add(frontier, F::constant(q), ev.values(*F::constant(q)));
    add(frontier, F::obs(), ev.values(*F::obs()));
    result.formulas = frontier;

    // Path sets for integrals, concatenated across repetitions.
    std::vector<std::vector<Trajectory>> paths;
    if (ec.dialect == Dialect::sigma) {
        const SampleBank& b = ev.bank();
        paths.resize(ev.spec().size());
        for (StateIndex s = 0; s < ev.spec().size(); ++s)
            for (std::size_t rep = 0; rep < b.reps_for(s); ++rep) {
                const auto& set = b.samples(s, rep);
                paths[s].insert(paths[s].end(), set.begin(), set.end());
            }
    }
    const double log_c = std::log(ev.config().discount);
    // Mean over each state's paths of max(c^s f(w(s)), c^t h(w(t))), from the
    // value vectors of f and h; with a single term when `h` is null.
    const auto integral_values = [&](const std::vector<double>& f, double s_time, const std::vector<double>* h, double t_time) {
        std::vector<double> out(paths.size());
        const double ws = std::exp(log_c * s_time), wt = std::exp(log_c * t_time);
        for (StateIndex s = 0; s < paths.size(); ++s) {
            double total = 0.0;
            for (const Trajectory& w : paths[s]) {
                double v = ws * f[w.state_at(s_time)];
                if (h) v = std::max(v, wt * (*h)[w.state_at(t_time)]);
                total += v;
            }
            out[s] = std::clamp(total / static_cast<double>(paths[s].size()), 0.0, 1.0);
        }
        return out;
    };

    for (std::size_t d = 1; d <= ec.depth && !result.truncated; ++d) {
        std::vector<EnumeratedFormula> level;
        for (const auto& e : frontier) {
            add(level, F::negate(e.formula), Evaluator::negate(e.values));
            for (std::size_t k = 1; k < constants.size(); ++k) {
                add(level, F::minus(e.formula, constants[k]), Evaluator::minus(e.values, constants[k]));
                add(level, F::plus(e.formula, constants[k]), Evaluator::plus(e.values, constants[k]));
            }
            for (double t : times) {
                if (t == 0.0) continue;
                if (ec.dialect == Dialect::lambda) {
                    add(level, F::diamond(t, e.formula), ev.diamond(t, e.values));
                } else {
                    add(level, F::integral(F::eval_at(e.formula, t)), integral_values(e.values, t, nullptr, 0.0));
                }
            }
        }
        // Binary constructors over the best-scoring formulas found so far.
        std::vector<const EnumeratedFormula*> pool;
        for (const auto& e : result.formulas) pool.push_back(&e);
        std::stable_sort(pool.begin(), pool.end(), [&](auto* a, auto* b) { return score(a->values) > score(b->values); });
        if (pool.size() > ec.pair_pool) pool.resize(ec.pair_pool);
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t j = i + 1; j < pool.size(); ++j) {
                add(level, F::min(pool[i]->formula, pool[j]->formula), Evaluator::pointwise_min(pool[i]->values, pool[j]->values));
                add(level, F::max(pool[i]->formula, pool[j]->formula), Evaluator::pointwise_max(pool[i]->values, pool[j]->values));
                if (ec.dialect == Dialect::sigma) {
                    for (double t : times) {
                        if (t == 0.0) continue;
                        const TrajectoryPtr g = F::max(F::eval_at(pool[i]->formula, 0.0), F::eval_at(pool[j]->formula, t));
                        add(level, F::integral(g), integral_values(pool[i]->values, 0.0, &pool[j]->values, t));
                    }
                }
            }
        keep_best(level);
        result.formulas.insert(result.formulas.end(), level.begin(), level.end());
        frontier = std::move(level);
    }
    return result;
}

namespace detail {

// Time parameters of <t> and @t nodes, in pre-order.
inline void collect_times(const StateFormula& f, std::vector<double>& out);
inline void collect_times(const TrajectoryFormula& g, std::vector<double>& out) {
    if (g.kind == TrajectoryFormula::Kind::eval_at) out.push_back(g.value);
    if (g.f) collect_times(*g.f, out);
    if (g.a) collect_times(*g.a, out);
    if (g.b) collect_times(*g.b, out);
}
inline void collect_times(const StateFormula& f, std::vector<double>& out) {
    if (f.kind == StateFormula::Kind::diamond) out.push_back(f.value);
    if (f.a) collect_times(*f.a, out);
    if (f.b) collect_times(*f.b, out);
    if (f.g) collect_times(*f.g, out);
}

// Copy of a formula with its time parameters taken from `times`, in the
// order collect_times lists them.
inline StatePtr with_times(const StatePtr& f, const std::vector<double>& times, std::size_t& k);
inline TrajectoryPtr with_times(const TrajectoryPtr& g, const std::vector<double>& times, std::size_t& k) {
    auto copy = std::make_shared<TrajectoryFormula>(*g);
    if (copy->kind == TrajectoryFormula::Kind::eval_at) copy->value = times.at(k++);
    if (copy->f) copy->f = with_times(copy->f, times, k);
    if (copy->a) copy->a = with_times(copy->a, times, k);
    if (copy->b) copy->b = with_times(copy->b, times, k);
    return copy;
}
inline StatePtr with_times(const StatePtr& f, const std::vector<double>& times, std::size_t& k) {
    auto copy = std::make_shared<StateFormula>(*f);
    if (copy->kind == StateFormula::Kind::diamond) copy->value = times.at(k++);
    if (copy->a) copy->a = with_times(copy->a, times, k);
    if (copy->b) copy->b = with_times(copy->b, times, k);
    if (copy->g) copy->g = with_times(copy->g, times, k);
    return copy;
}

// Coordinate-wise golden-section search on the nonzero time parameters of a
// witness. Returns the improved formula and its score.
template <class Score>
std::pair<StatePtr, double> refine_times(Evaluator& ev, StatePtr f, double best, Score&& score, int sweeps = 2) {
    std::vector<double> times;
    collect_times(*f, times);
    const double horizon = ev.config().horizon();
    const auto score_with = [&](std::vector<double> ts, std::size_t i, double t) {
        ts[i] = t;
        std::size_t k = 0;
        StatePtr g = with_times(f, ts, k);
        const double s = score(ev.values(*g));
        return std::pair{std::move(g), s};
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int sweep = 0; sweep < sweeps; ++sweep)
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] == 0.0) continue;
            double lo = times[i] / 2.0, hi = std::min(horizon, times[i] * 2.0);
            if (!(hi > lo)) continue;
            double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
            double fa = score_with(times, i, a).second, fb = score_with(times, i, b).second;
            for (int step = 0; step < 48; ++step) {
                if (fa >= fb) {
                    hi = b;
                    b = a;
                    fb = fa;
                    a = hi - inv_phi * (hi - lo);
                    fa = score_with(times, i, a).second;
                } else {
                    lo = a;
                    a = b;
                    fa = fb;
                    b = lo + inv_phi * (hi - lo);
                    fb = score_with(times, i, b).second;
                }
            }
            auto [g, s] = score_with(times, i, fa >= fb ? a : b);
            if (s > best) {
                best = s;
                times[i] = fa >= fb ? a : b;
                f = std::move(g);
            }
        }
    return {std::move(f), best};
}

} // namespace detail

struct DistanceBound {
    double value = 0.0;
    StatePtr witness;
    std::size_t enumerated = 0;
    bool truncated = false;
};

// Lower bound on the logical distance between x and y: the best separation
// |f(x) - f(y)| over the enumerated formulas.
inline DistanceBound logic_distance_bound(Evaluator& ev, StateIndex x, StateIndex y, const EnumerationConfig& ec) {
    if (x >= ev.spec().size() || y >= ev.spec().size()) throw dimension_error("state index out of range");
    if (x == y) {
        if (ec.depth > EnumerationConfig::max_depth) throw budget_exceeded("enumeration depth exceeds the limit");
        return {0.0, formula::constant(0.0), 0, false};
    }
    const auto score = [x, y](const std::vector<double>& v) { return std::abs(v[x] - v[y]); };
    const EnumerationResult all = enumerate_formulas(ev, ec, score);
    DistanceBound best{0.0, formula::constant(0.0), all.formulas.size(), all.truncated};
    for (const auto& e : all.formulas) {
        const double s = score(e.values);
        if (s > best.value) {
            best.value = s;
            best.witness = e.formula;
        }
    }
    if (best.value > 0.0) std::tie(best.witness, best.value) = detail::refine_times(ev, best.witness, best.value, score);
    return best;
}

inline DistanceBound logic_distance_bound(const ProcessSpec& spec, StateIndex x, StateIndex y, const MetricConfig& cfg,
                                          const EnumerationConfig& ec, const SamplingConfig& sampling = {}) {
    Evaluator ev(spec, cfg, sampling);
    return logic_distance_bound(ev, x, y, ec);
}

} // namespace ctbm
