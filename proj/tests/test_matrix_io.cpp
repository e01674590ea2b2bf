#include <catch2/catch_amalgamated.hpp>

#include "ctbm/learning_example.hpp"
#include "ctbm/matrix_io.hpp"
#include "support.hpp"

#include <filesystem>
#include <random>

using namespace ctbm;

namespace {

MatrixDocument random_document(std::mt19937_64& rng, std::size_t n) {
    MatrixDocument doc;
    for (std::size_t i = 0; i < n; ++i) doc.states.push_back("s" + std::to_string(i));
    doc.matrix = testing::random_pseudometric(rng, n).matrix();
    doc.metadata.estimator = EstimatorKind::empirical_trajectory;
    doc.metadata.discount = std::exp(-1.0);
    doc.metadata.time_tolerance = 1e-6;
    doc.metadata.fix_tolerance = 1e-9;
    doc.metadata.iterations = 17;
    doc.metadata.max_iterations = 500;
    doc.metadata.seed = 0xfeedfacecafebeefULL;
    doc.metadata.samples = 512;
    doc.metadata.reps = 10;
    doc.metadata.residual = 1.0 / 3.0;
    return doc;
}

} // namespace

TEST_CASE("estimator names", "[io]") {
    for (auto k : {EstimatorKind::exact_kernel, EstimatorKind::empirical_trajectory, EstimatorKind::oracle})
        CHECK(estimator_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(estimator_from_string("guess"), config_error);
}

TEST_CASE("matrix documents round-trip exactly", "[io]") {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 20; ++k) {
        MatrixDocument doc = random_document(rng, 1 + k % 6);
        if (k % 2 == 0) {
            doc.metadata.unconverged = {{"s0", doc.states.back()}};
            doc.metadata.extrapolated = doc.matrix;
        }
        const std::string text = dump(to_json(doc));
        CHECK(matrix_document_from_json(nlohmann::json::parse(text)) == doc);
    }
}

TEST_CASE("documents round-trip through files", "[io]") {
    std::mt19937_64 rng(8);
    const MatrixDocument doc = random_document(rng, 4);
    const auto path = std::filesystem::temp_directory_path() / "ctbm_io_roundtrip.json";
    write_text_file(path.string(), dump(to_json(doc)));
    CHECK(read_matrix_document(path.string()) == doc);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_matrix_document(path.string()), config_error);
}

TEST_CASE("only pseudometrics are written", "[io]") {
    MatrixDocument doc;
    doc.states = {"a", "b", "c"};
    doc.matrix = Matrix::from_rows({{0, 0.1, 0.5}, {0.1, 0, 0.1}, {0.5, 0.1, 0}});
    CHECK_THROWS_AS(to_json(doc), not_a_pseudometric);
    doc.states = {"a", "b"};
    CHECK_THROWS_AS(check_document(doc), dimension_error);
}

TEST_CASE("malformed documents are rejected", "[io]") {
    CHECK_THROWS_AS(matrix_document_from_json(nlohmann::json::parse(R"({"states": ["a"]})")), config_error);
    CHECK_THROWS_AS(matrix_document_from_json(nlohmann::json::parse(R"({"states": ["a"], "matrix": [[0]], "metadata": {"estimator": "x"}})")),
                    config_error);
    CHECK_THROWS_AS(matrix_document_from_json(nlohmann::json::parse(R"({"states": ["a", "b"], "matrix": [[0, 2], [2, 0]], "metadata": {"estimator": "oracle"}})")),
                    not_a_pseudometric);
}

TEST_CASE("CSV export", "[io]") {
    MatrixDocument doc;
    doc.states = {"0", "∂"};
    doc.matrix = Matrix::from_rows({{0, 1}, {1, 0}});
    CHECK(to_csv(doc) == "state,0,∂\n0,0,1\n∂,1,0\n");
}

TEST_CASE("documents from a fixpoint report", "[io]") {
    IterationReport report;
    report.final = PseudometricMatrix::discrete(3);
    report.extrapolated = report.final.matrix();
    report.converged = {{true, true, false}, {true, true, true}, {false, true, true}};
    report.iterations = 9;
    MetricConfig cfg;
    const MatrixDocument doc = make_document({"a", "b", "c"}, report, EstimatorKind::exact_kernel, cfg);
    CHECK(doc.metadata.iterations == 9);
    CHECK(doc.metadata.unconverged == std::vector<std::pair<std::string, std::string>>{{"a", "c"}});
    CHECK(doc.metadata.extrapolated.has_value());
    CHECK(doc.metadata.discount == cfg.discount);
}

TEST_CASE("comparison of two distances", "[io]") {
    MatrixDocument kernel, trajectory;
    kernel.states = trajectory.states = {"0", "x", "z"};
    kernel.matrix = Matrix::from_rows({{0, 0.5, 0.5}, {0.5, 0, 0.25}, {0.5, 0.25, 0}});
    trajectory.matrix = Matrix::from_rows({{0, 0.5, 1}, {0.5, 0, 1}, {1, 1, 0}});
    const ComparisonReport report = compare_matrices(kernel, trajectory);
    REQUIRE(report.pairs.size() == 3);
    CHECK(report.violations() == 0);
    CHECK(report.pairs[0].gap == 0.0);
    CHECK(report.pairs[2].gap == 0.75);
    for (const auto& p : report.pairs) CHECK(p.gap == p.trajectory - p.kernel);

    const ComparisonReport same = compare_matrices(kernel, kernel);
    for (const auto& p : same.pairs) CHECK(p.gap == 0.0);

    const ComparisonReport flipped = compare_matrices(trajectory, kernel);
    CHECK(flipped.violations() == 2);
    CHECK(to_json(flipped)["violations"] == 2);

    MatrixDocument other = trajectory;
    other.states = {"0", "x", "y"};
    CHECK_THROWS_AS(compare_matrices(kernel, other), dimension_error);
}
