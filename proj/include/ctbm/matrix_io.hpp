#pragma once

#include "ctbm/error.hpp"
#include "ctbm/kernel_metric.hpp"
#include "ctbm/matrix.hpp"
#include "ctbm/pseudometric.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ctbm {

enum class EstimatorKind { exact_kernel, empirical_trajectory, oracle };

inline std::string to_string(EstimatorKind k) {
    switch (k) {
    case EstimatorKind::exact_kernel: return "exact-kernel";
    case EstimatorKind::empirical_trajectory: return "empirical-trajectory";
    case EstimatorKind::oracle: return "oracle";
    }
    return {};
}

inline EstimatorKind estimator_from_string(const std::string& s) {
    if (s == "exact-kernel") return EstimatorKind::exact_kernel;
    if (s == "empirical-trajectory") return EstimatorKind::empirical_trajectory;
    if (s == "oracle") return EstimatorKind::oracle;
    throw config_error("unknown estimator kind '" + s + "'");
}

struct MatrixMetadata {
    EstimatorKind estimator = EstimatorKind::exact_kernel;
    double discount = 0.0;
    double time_tolerance = 0.0;
    double fix_tolerance = 0.0;
    std::size_t iterations = 0;
    std::size_t max_iterations = 0;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    std::size_t reps = 0;
    double residual = 0.0;
    std::vector<std::pair<std::string, std::string>> unconverged;
    std::optional<Matrix> extrapolated;

    friend bool operator==(const MatrixMetadata&, const MatrixMetadata&) = default;
};

struct MatrixDocument {
    std::vector<std::string> states;
    Matrix matrix;
    MatrixMetadata metadata;

    friend bool operator==(const MatrixDocument&, const MatrixDocument&) = default;
};

inline void check_document(const MatrixDocument& doc) {
    if (doc.matrix.rows() != doc.states.size() || doc.matrix.cols() != doc.states.size())
        throw dimension_error("matrix shape does not match the state list");
    const MetricCheck check = check_pseudometric(doc.matrix);
    if (!check.ok()) throw not_a_pseudometric("refusing to emit matrix: " + check.describe());
}

inline nlohmann::json to_json(const MatrixDocument& doc) {
    check_document(doc);
    nlohmann::json meta{{"estimator", to_string(doc.metadata.estimator)},
                        {"discount", doc.metadata.discount},
                        {"time_tolerance", doc.metadata.time_tolerance},
                        {"fix_tolerance", doc.metadata.fix_tolerance},
                        {"iterations", doc.metadata.iterations},
                        {"max_iterations", doc.metadata.max_iterations},
                        {"seed", doc.metadata.seed},
                        {"samples", doc.metadata.samples},
                        {"reps", doc.metadata.reps},
                        {"residual", doc.metadata.residual}};
    nlohmann::json unconverged = nlohmann::json::array();
    for (const auto& [a, b] : doc.metadata.unconverged) unconverged.push_back({a, b});
    meta["unconverged"] = unconverged;
    if (doc.metadata.extrapolated) meta["extrapolated"] = doc.metadata.extrapolated->to_rows();
    return nlohmann::json{{"states", doc.states}, {"matrix", doc.matrix.to_rows()}, {"metadata", meta}};
}

inline MatrixDocument matrix_document_from_json(const nlohmann::json& j) {
    try {
        MatrixDocument doc;
        doc.states = j.at("states").get<std::vector<std::string>>();
        doc.matrix = Matrix::from_rows(j.at("matrix").get<std::vector<std::vector<double>>>());
        const auto& m = j.at("metadata");
        doc.metadata.estimator = estimator_from_string(m.at("estimator").get<std::string>());
        doc.metadata.discount = m.value("discount", 0.0);
        doc.metadata.time_tolerance = m.value("time_tolerance", 0.0);
        doc.metadata.fix_tolerance = m.value("fix_tolerance", 0.0);
        doc.metadata.iterations = m.value("iterations", std::size_t{0});
        doc.metadata.max_iterations = m.value("max_iterations", std::size_t{0});
        doc.metadata.seed = m.value("seed", std::uint64_t{0});
        doc.metadata.samples = m.value("samples", std::size_t{0});
        doc.metadata.reps = m.value("reps", std::size_t{0});
        doc.metadata.residual = m.value("residual", 0.0);
        if (m.contains("unconverged"))
            for (const auto& p : m["unconverged"]) doc.metadata.unconverged.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
        if (m.contains("extrapolated"))
            doc.metadata.extrapolated = Matrix::from_rows(m["extrapolated"].get<std::vector<std::vector<double>>>());
        check_document(doc);
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed matrix document: ") + e.what());
    }
}

// nlohmann::json prints doubles with round-trip precision.
inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw config_error("failed writing '" + path + "'");
}

inline MatrixDocument read_matrix_document(const std::string& path) {
    try {
        return matrix_document_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline std::string to_csv(const MatrixDocument& doc) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "state";
    for (const auto& s : doc.states) os << ',' << s;
    os << '\n';
    for (std::size_t i = 0; i < doc.states.size(); ++i) {
        os << doc.states[i];
        for (std::size_t j = 0; j < doc.states.size(); ++j) os << ',' << doc.matrix(i, j);
        os << '\n';
    }
    return os.str();
}

inline MatrixDocument make_document(const std::vector<std::string>& states, const IterationReport& report, EstimatorKind kind,
                                    const MetricConfig& cfg) {
    MatrixDocument doc;
    doc.states = states;
    doc.matrix = report.final.matrix();
    doc.metadata.estimator = kind;
    doc.metadata.discount = cfg.discount;
    doc.metadata.time_tolerance = cfg.time_tolerance;
    doc.metadata.fix_tolerance = cfg.fix_tolerance;
    doc.metadata.iterations = report.iterations;
    doc.metadata.max_iterations = cfg.max_iterations;
    doc.metadata.residual = report.residual;
    for (const auto& [i, j] : report.unconverged()) doc.metadata.unconverged.emplace_back(states[i], states[j]);
    if (!doc.metadata.unconverged.empty()) doc.metadata.extrapolated = report.extrapolated;
    return doc;
}

// ---------------------------------------------------------------------------
// Comparison of the two distances
// ---------------------------------------------------------------------------

struct PairComparison {
    std::string a, b;
    double kernel = 0.0;      // delta-bar entry
    double trajectory = 0.0;  // d-bar entry
    double gap = 0.0;         // trajectory - kernel
    bool violation = false;   // kernel > trajectory + tolerance
    std::optional<double> kernel_logic_bound, trajectory_logic_bound;
    std::string kernel_witness, trajectory_witness;
};

struct ComparisonReport {
    std::vector<PairComparison> pairs;
    double tolerance = 0.0;

    [[nodiscard]] std::size_t violations() const {
        std::size_t n = 0;
        for (const auto& p : pairs) n += p.violation ? 1 : 0;
        return n;
    }
};

inline ComparisonReport compare_matrices(const MatrixDocument& kernel, const MatrixDocument& trajectory, double tolerance = 0.01) {
    if (kernel.states != trajectory.states) throw dimension_error("the two matrices are over different state lists");
    ComparisonReport report;
    report.tolerance = tolerance;
    const std::size_t n = kernel.states.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            PairComparison p;
            p.a = kernel.states[i];
            p.b = kernel.states[j];
            p.kernel = kernel.matrix(i, j);
            p.trajectory = trajectory.matrix(i, j);
            p.gap = p.trajectory - p.kernel;
            p.violation = p.kernel > p.trajectory + tolerance;
            report.pairs.push_back(std::move(p));
        }
    return report;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : r.pairs) {
        nlohmann::json e{{"pair", {p.a, p.b}}, {"kernel", p.kernel}, {"trajectory", p.trajectory}, {"gap", p.gap}, {"violation", p.violation}};
        if (p.kernel_logic_bound) e["kernel_logic_bound"] = {{"value", *p.kernel_logic_bound}, {"witness", p.kernel_witness}};
        if (p.trajectory_logic_bound)
            e["trajectory_logic_bound"] = {{"value", *p.trajectory_logic_bound}, {"witness", p.trajectory_witness}};
        pairs.push_back(std::move(e));
    }
    return nlohmann::json{{"tolerance", r.tolerance}, {"violations", r.violations()}, {"pairs", pairs}};
}

} // namespace ctbm
