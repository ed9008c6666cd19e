#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mkvcub/problem.hpp"

namespace mkvcub {

enum class Scheme { forward_only, first_order, second_order };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);

/// One batch run: a problem, a discretization family, and a scheme.
struct RunConfig {
    std::string problem = "toy-sb";  // toy-sb | toy-lb
    int dimension = 1;
    double K = 0.6;        // toy-lb half-width
    double horizon = 1.0;
    Scheme scheme = Scheme::first_order;
    int m = 3;
    int q = 1;
    double gamma = 1.0;
    std::vector<int> N_list = {4};
    int substeps = 8;
    bool recombine = false;
    double merge_tolerance = 1e-12;
    std::size_t node_budget = std::size_t{1} << 22;
    int jobs = 1;
    int slope_tail = 8;
    std::string out_prefix = "run";

    /// Throws ConfigError on malformed settings and BudgetError when a plain
    /// (non-recombined) tree of the largest N cannot fit the node budget.
    void validate() const;
};

ToyProblem make_problem(const RunConfig& config);

struct ConvergenceRow {
    int N = 0;
    double forward_err = 0.0;
    double e_u = 0.0;
    double e_v = 0.0;
    double e_v_weighted = 0.0;
    double slope_so_far = 0.0;
    std::size_t nodes = 0;
    double seconds = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    // Fitted slopes over the last `slope_tail` points; NaN when undefined.
    double slope_forward = 0.0;
    double slope_e_u = 0.0;
    double slope_e_v = 0.0;
    double slope_e_v_weighted = 0.0;
};

/// Run the configured N sweep, collecting error functionals per N and fitted
/// slopes. Requires a problem with an exact solution (the built-in toys).
ConvergenceReport run_convergence_study(const RunConfig& config);

/// Fixed column order: N,forward_err,E_u,E_v,E_v_weighted,slope_so_far,nodes,seconds.
/// Floats carry 17 significant digits.
void write_report_csv(const ConvergenceReport& report, std::ostream& out);
nlohmann::json report_summary_json(const RunConfig& config, const ConvergenceReport& report);

struct SolveResult {
    std::size_t nodes = 0;
    double root_u = 0.0;  // meaningful for backward schemes
};

/// Build one tree (single N), run the selected scheme, write the node CSV and
/// (for backward schemes) the field CSV under `out_prefix`.
SolveResult run_solve(const RunConfig& config);

} // namespace mkvcub
