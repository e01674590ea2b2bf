// ctbm: behavioural distances for finite continuous-time Markov processes.
//
// Exit codes: 0 success, 1 input error, 2 partial convergence,
// 3 ordering violation or failed validation.

#include "ctbm/kernel_metric.hpp"
#include "ctbm/learning_example.hpp"
#include "ctbm/logic.hpp"
#include "ctbm/matrix_io.hpp"
#include "ctbm/process.hpp"
#include "ctbm/trajectory_metric.hpp"
#include "ctbm/validation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace ctbm;

enum Exit : int { exit_ok = 0, exit_input = 1, exit_partial = 2, exit_violation = 3 };

struct SpecFlags {
    std::string path;
    std::vector<std::string> params;
};

struct MetricFlags {
    std::optional<double> discount;
    double fix_tolerance = MetricConfig{}.fix_tolerance;
    double time_tolerance = MetricConfig{}.time_tolerance;
    std::size_t max_iterations = MetricConfig{}.max_iterations;
    std::size_t grid_points = MetricConfig{}.time_grid_points;
    std::string grid = "uniform-time";
};

struct SamplingFlags {
    std::size_t samples = SamplingConfig{}.samples;
    std::size_t reps = SamplingConfig{}.reps;
    std::uint64_t seed = SamplingConfig{}.seed;
    bool no_stratify = false;
};

struct OutputFlags {
    std::string out;
    std::string csv;
};

double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) throw config_error("cannot read " + what + " '" + text + "'");
    return v;
}

ParameterMap parse_params(const std::vector<std::string>& items) {
    ParameterMap out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw config_error("parameter '" + item + "' is not of the form name=value");
        out[item.substr(0, eq)] = parse_double(item.substr(eq + 1), "parameter value");
    }
    return out;
}

ProcessSpec load_spec(const SpecFlags& f) {
    const std::string text = read_text_file(f.path);
    return parse_spec(std::string_view(text), parse_params(f.params));
}

std::pair<std::string, std::string> split_pair(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw config_error("pair '" + text + "' must be written a,b");
    return {text.substr(0, comma), text.substr(comma + 1)};
}

Dialect parse_dialect(const std::string& s) {
    if (s == "lambda") return Dialect::lambda;
    if (s == "sigma") return Dialect::sigma;
    throw config_error("unknown dialect '" + s + "' (expected lambda or sigma)");
}

MetricConfig make_config(const ProcessSpec& spec, const MetricFlags& f) {
    MetricConfig cfg;
    if (f.discount) {
        cfg.discount = *f.discount;
    } else if (const auto match = match_learning_example(spec)) {
        cfg.discount = match->params.discount();
    }
    cfg.fix_tolerance = f.fix_tolerance;
    cfg.time_tolerance = f.time_tolerance;
    cfg.max_iterations = f.max_iterations;
    cfg.time_grid_points = f.grid_points;
    if (f.grid == "uniform-time") {
        cfg.grid = TimeGrid::uniform_time;
    } else if (f.grid == "uniform-theta") {
        cfg.grid = TimeGrid::uniform_theta;
    } else {
        throw config_error("unknown time grid '" + f.grid + "'");
    }
    cfg.validate();
    return cfg;
}

SamplingConfig make_sampling(const SamplingFlags& f) {
    SamplingConfig s;
    s.samples = f.samples;
    s.reps = f.reps;
    s.seed = f.seed;
    s.stratify = !f.no_stratify;
    s.validate();
    return s;
}

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << dump(j);
    } else {
        write_text_file(out, dump(j));
    }
}

int emit_document(const MatrixDocument& doc, const OutputFlags& out) {
    const nlohmann::json j = to_json(doc);
    emit(j, out.out);
    if (!out.csv.empty()) write_text_file(out.csv, to_csv(doc));
    if (doc.metadata.unconverged.empty()) return exit_ok;
    std::cerr << "warning: " << doc.metadata.unconverged.size() << " entries did not converge after " << doc.metadata.iterations
              << " iterations:";
    for (const auto& [a, b] : doc.metadata.unconverged) std::cerr << " (" << a << "," << b << ")";
    std::cerr << "\n";
    return exit_partial;
}

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
    cmd->add_option("spec", f.path, "Process description (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("-p,--param", f.params, "Override a spec parameter, name=value");
}

void add_metric_flags(CLI::App* cmd, MetricFlags& f) {
    cmd->add_option("--discount", f.discount, "Discount factor c in (0,1); defaults to e^{-lambda} for the learning example, else e^{-1}");
    cmd->add_option("--tol", f.fix_tolerance, "Fixpoint tolerance on the sup-norm change")->capture_default_str();
    cmd->add_option("--time-tol", f.time_tolerance, "Weight below which times are ignored")->capture_default_str();
    cmd->add_option("--max-iter", f.max_iterations, "Iteration cap")->capture_default_str();
    cmd->add_option("--time-grid", f.grid, "uniform-time or uniform-theta")->capture_default_str();
    cmd->add_option("--grid-points", f.grid_points, "Number of time grid points")->capture_default_str();
}

void add_sampling_flags(CLI::App* cmd, SamplingFlags& f) {
    cmd->add_option("--samples", f.samples, "Paths per state and repetition")->capture_default_str();
    cmd->add_option("--reps", f.reps, "Independent repetitions averaged per entry")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
    cmd->add_flag("--no-stratify", f.no_stratify, "Always sample, even where stratified jump times are available");
}

void add_output_flags(CLI::App* cmd, OutputFlags& f) {
    cmd->add_option("-o,--out", f.out, "Write the JSON result here instead of stdout");
    cmd->add_option("--csv", f.csv, "Also write the matrix as CSV");
}

int cmd_kernel_metric(const SpecFlags& sf, const MetricFlags& mf, const OutputFlags& of) {
    const ProcessSpec spec = load_spec(sf);
    const MetricConfig cfg = make_config(spec, mf);
    const auto [delta, report] = fixpoint_delta(spec, cfg);
    return emit_document(make_document(spec.states, report, EstimatorKind::exact_kernel, cfg), of);
}

int cmd_trajectory_metric(const SpecFlags& sf, const MetricFlags& mf, const SamplingFlags& smf, bool oracle, const OutputFlags& of) {
    const ProcessSpec spec = load_spec(sf);
    const MetricConfig cfg = make_config(spec, mf);
    if (oracle) {
        const auto match = match_learning_example(spec);
        if (!match) throw unsupported_structure("--oracle only applies to the five-state learning example");
        const auto [d, report] = oracle_fixpoint(*match, cfg);
        return emit_document(make_document(spec.states, report, EstimatorKind::oracle, cfg), of);
    }
    const SamplingConfig sampling = make_sampling(smf);
    const auto [d, report] = fixpoint_d(spec, cfg, sampling);
    MatrixDocument doc = make_document(spec.states, report, EstimatorKind::empirical_trajectory, cfg);
    doc.metadata.seed = sampling.seed;
    doc.metadata.samples = sampling.samples;
    doc.metadata.reps = sampling.reps;
    return emit_document(doc, of);
}

int cmd_logic_eval(const SpecFlags& sf, const MetricFlags& mf, const SamplingFlags& smf, const std::string& text,
                   const std::string& state, const std::string& pair, const std::string& dialect, const std::string& out) {
    const ProcessSpec spec = load_spec(sf);
    const StatePtr f = parse_state_formula(text);
    if (!dialect.empty()) check_dialect(*f, parse_dialect(dialect));
    Evaluator ev(spec, make_config(spec, mf), make_sampling(smf));
    const std::vector<double> values = ev.values(*f);
    nlohmann::json j{{"formula", to_string(*f)}};
    if (!state.empty()) {
        j["state"] = state;
        j["value"] = values[spec.index_of(state)];
    } else if (!pair.empty()) {
        const auto [a, b] = split_pair(pair);
        const double va = values[spec.index_of(a)], vb = values[spec.index_of(b)];
        j["pair"] = {a, b};
        j["values"] = {va, vb};
        j["separation"] = std::abs(va - vb);
    } else {
        nlohmann::json all = nlohmann::json::object();
        for (StateIndex s = 0; s < spec.size(); ++s) all[spec.states[s]] = values[s];
        j["values"] = all;
    }
    if (ev.truncated()) j["truncated"] = true;
    emit(j, out);
    return exit_ok;
}

struct BoundFlags {
    std::string pair;
    std::string dialect = "lambda";
    std::size_t depth = 3;
    std::size_t constant_grid = EnumerationConfig{}.constant_grid;
    std::size_t level_cap = EnumerationConfig{}.level_cap;
    std::size_t pair_pool = EnumerationConfig{}.pair_pool;
};

EnumerationConfig make_enumeration(const BoundFlags& bf) {
    EnumerationConfig ec;
    ec.dialect = parse_dialect(bf.dialect);
    ec.depth = bf.depth;
    ec.constant_grid = bf.constant_grid;
    ec.level_cap = bf.level_cap;
    ec.pair_pool = bf.pair_pool;
    return ec;
}

int cmd_logic_bound(const SpecFlags& sf, const MetricFlags& mf, const SamplingFlags& smf, const BoundFlags& bf, const std::string& out) {
    const ProcessSpec spec = load_spec(sf);
    const auto [a, b] = split_pair(bf.pair);
    const EnumerationConfig ec = make_enumeration(bf);
    Evaluator ev(spec, make_config(spec, mf), make_sampling(smf));
    const DistanceBound bound = logic_distance_bound(ev, spec.index_of(a), spec.index_of(b), ec);
    emit(nlohmann::json{{"pair", {a, b}},
                        {"dialect", bf.dialect},
                        {"depth", bf.depth},
                        {"bound", bound.value},
                        {"witness", to_string(*bound.witness)},
                        {"enumerated", bound.enumerated},
                        {"truncated", bound.truncated}},
         out);
    return exit_ok;
}

int cmd_compare(const std::string& kernel_path, const std::string& trajectory_path, double tolerance, const SpecFlags& sf,
                const MetricFlags& mf, const SamplingFlags& smf, std::size_t logic_depth, const std::string& out) {
    const MatrixDocument kernel = read_matrix_document(kernel_path);
    const MatrixDocument trajectory = read_matrix_document(trajectory_path);
    ComparisonReport report = compare_matrices(kernel, trajectory, tolerance);
    if (!sf.path.empty()) {
        const ProcessSpec spec = load_spec(sf);
        if (spec.states != kernel.states) throw dimension_error("spec states do not match the matrices");
        Evaluator ev(spec, make_config(spec, mf), make_sampling(smf));
        EnumerationConfig lam, sig;
        lam.dialect = Dialect::lambda;
        lam.depth = logic_depth;
        sig.dialect = Dialect::sigma;
        sig.depth = logic_depth;
        for (auto& p : report.pairs) {
            const StateIndex x = spec.index_of(p.a), y = spec.index_of(p.b);
            const DistanceBound kb = logic_distance_bound(ev, x, y, lam);
            const DistanceBound tb = logic_distance_bound(ev, x, y, sig);
            p.kernel_logic_bound = kb.value;
            p.kernel_witness = to_string(*kb.witness);
            p.trajectory_logic_bound = tb.value;
            p.trajectory_witness = to_string(*tb.witness);
        }
    }
    emit(to_json(report), out);
    if (report.violations() == 0) return exit_ok;
    std::cerr << "ordering violated on " << report.violations() << " pairs\n";
    return exit_violation;
}

int cmd_validate_example(const ExampleParams& p, const SamplingFlags& smf, std::uint64_t seed) {
    validation::Options opt;
    opt.sampling = make_sampling(smf);
    opt.seed = seed;
    bool all = true;
    validation::validate_example(p, opt, [&](const validation::CheckResult& r) {
        std::cout << validation::format_result(r) << std::endl;
        all = all && r.pass;
    });
    std::cout << (all ? "all checks passed" : "some checks failed") << "\n";
    return all ? exit_ok : exit_violation;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Behavioural distances for finite continuous-time Markov processes"};
    app.require_subcommand(1);

    SpecFlags spec_flags;
    MetricFlags metric_flags;
    SamplingFlags sampling_flags;
    OutputFlags output_flags;

    auto* kernel = app.add_subcommand("kernel-metric", "Kernel-based distance by fixpoint iteration");
    add_spec_flags(kernel, spec_flags);
    add_metric_flags(kernel, metric_flags);
    add_output_flags(kernel, output_flags);

    bool oracle = false;
    auto* traj = app.add_subcommand("trajectory-metric", "Trajectory-based distance from sampled paths");
    add_spec_flags(traj, spec_flags);
    add_metric_flags(traj, metric_flags);
    add_sampling_flags(traj, sampling_flags);
    add_output_flags(traj, output_flags);
    traj->add_flag("--oracle", oracle, "Use the exact recurrence (learning example only)");

    std::string formula_text, state, pair, dialect;
    auto* eval = app.add_subcommand("logic-eval", "Evaluate a state formula");
    add_spec_flags(eval, spec_flags);
    add_metric_flags(eval, metric_flags);
    add_sampling_flags(eval, sampling_flags);
    eval->add_option("-f,--formula", formula_text, "Formula text")->required();
    auto* state_opt = eval->add_option("--state", state, "Evaluate at one state");
    eval->add_option("--pair", pair, "Evaluate at two states a,b and report the separation")->excludes(state_opt);
    eval->add_option("--dialect", dialect, "Reject formulas outside lambda or sigma");
    eval->add_option("-o,--out", output_flags.out, "Write the JSON result here instead of stdout");

    BoundFlags bound_flags;
    auto* bound = app.add_subcommand("logic-bound", "Lower bound on the logical distance of a pair");
    add_spec_flags(bound, spec_flags);
    add_metric_flags(bound, metric_flags);
    add_sampling_flags(bound, sampling_flags);
    bound->add_option("--pair", bound_flags.pair, "States a,b")->required();
    bound->add_option("--dialect", bound_flags.dialect, "lambda or sigma")->capture_default_str();
    bound->add_option("--depth", bound_flags.depth, "Enumeration depth")->capture_default_str();
    bound->add_option("--constant-grid", bound_flags.constant_grid, "Constants k/N for this N")->capture_default_str();
    bound->add_option("--level-cap", bound_flags.level_cap, "Formulas kept per depth")->capture_default_str();
    bound->add_option("--pair-pool", bound_flags.pair_pool, "Operands for binary constructors")->capture_default_str();
    bound->add_option("-o,--out", output_flags.out, "Write the JSON result here instead of stdout");

    std::string kernel_path, trajectory_path;
    double tolerance = 0.01;
    std::size_t logic_depth = 2;
    auto* compare = app.add_subcommand("compare", "Check that the kernel distance lies below the trajectory distance");
    compare->add_option("kernel", kernel_path, "Kernel distance matrix (JSON)")->required()->check(CLI::ExistingFile);
    compare->add_option("trajectory", trajectory_path, "Trajectory distance matrix (JSON)")->required()->check(CLI::ExistingFile);
    compare->add_option("--tolerance", tolerance, "Allowed excess before a pair counts as a violation")->capture_default_str();
    compare->add_option("--spec", spec_flags.path, "Process description; adds logic bounds per pair")->check(CLI::ExistingFile);
    compare->add_option("-p,--param", spec_flags.params, "Override a spec parameter, name=value");
    compare->add_option("--logic-depth", logic_depth, "Enumeration depth for the logic bounds")->capture_default_str();
    add_sampling_flags(compare, sampling_flags);
    compare->add_option("-o,--out", output_flags.out, "Write the JSON report here instead of stdout");

    ExampleParams example;
    std::uint64_t check_seed = validation::Options{}.seed;
    auto* validate_cmd = app.add_subcommand("validate-example", "Run the end-to-end checks on the learning example");
    validate_cmd->add_option("--r", example.r, "Observable of the undecided states")->capture_default_str();
    validate_cmd->add_option("--lambda", example.lambda, "Learning rate")->capture_default_str();
    validate_cmd->add_option("--samples", sampling_flags.samples, "Paths per state and repetition")->capture_default_str();
    validate_cmd->add_option("--reps", sampling_flags.reps, "Repetitions")->capture_default_str();
    validate_cmd->add_option("--seed", sampling_flags.seed, "Sampling seed")->capture_default_str();
    validate_cmd->add_option("--check-seed", check_seed, "Seed for the random property instances")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_input;
    }

    try {
        if (*kernel) return cmd_kernel_metric(spec_flags, metric_flags, output_flags);
        if (*traj) return cmd_trajectory_metric(spec_flags, metric_flags, sampling_flags, oracle, output_flags);
        if (*eval) return cmd_logic_eval(spec_flags, metric_flags, sampling_flags, formula_text, state, pair, dialect, output_flags.out);
        if (*bound) return cmd_logic_bound(spec_flags, metric_flags, sampling_flags, bound_flags, output_flags.out);
        if (*compare)
            return cmd_compare(kernel_path, trajectory_path, tolerance, spec_flags, metric_flags, sampling_flags, logic_depth, output_flags.out);
        if (*validate_cmd) return cmd_validate_example(example, sampling_flags, check_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_input;
    }
    return exit_input;
}
