#pragma once

#include <string>
#include <vector>

namespace daevi {

struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
    bool pass(double tol) const { return max_rel_err <= tol; }
};

struct GradSuiteReport {
    std::vector<GradCheckRow> rows;
    double tol = 1e-5;
    double elapsed_seconds = 0.0;

    bool all_pass() const {
        for (const auto& row : rows) {
            if (!row.pass(tol)) return false;
        }
        return true;
    }
};

// Backward-vs-central-difference checks in 64-bit over every differentiable
// primitive and each module's forward composite, across `seeds` randomized
// micro-shaped instances. Composites probe a deterministic random coordinate
// subset to stay fast.
GradSuiteReport run_gradient_suite(int seeds = 20, double tol = 1e-5);

} // namespace daevi
