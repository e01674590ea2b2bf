// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if
// any criterion fails.

#include "ctbm/validation.hpp"

#include <cmath>
#include <iostream>

int main() {
    using namespace ctbm::validation;
    const std::vector<double> all_r{0.3, 0.5, 0.8};
    const double lambda = 1.0;
    const Options opt;

    std::vector<CheckResult> results;
    const auto run = [&](CheckResult r) {
        std::cout << format_result(r) << std::endl;
        results.push_back(std::move(r));
    };

    run(check_delta_table(all_r, lambda, opt));
    run(check_oracle_iteration(0.5, lambda));
    run(check_empirical_vs_oracle({0.5, 0.3}, lambda, opt));
    run(check_ordering(all_r, lambda, opt));
    run(check_transport(opt.seed));
    run(check_pseudometrics(all_r, lambda, opt));
    run(check_monotone_limit(opt.seed));
    run(check_uniform_cost(opt.seed, std::exp(-lambda)));
    run(check_logic(all_r, lambda, opt));

    std::size_t failed = 0;
    for (const auto& r : results) failed += r.pass ? 0 : 1;
    std::cout << results.size() - failed << "/" << results.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
