#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mkvcub/forward.hpp"
#include "mkvcub/problem.hpp"

namespace mkvcub {

/// Per-node value and gradient-direction tables of a backward sweep.
/// u[k] has one entry per node of tree level k; v[k] has d entries per node.
/// f_bar[k] is F(T_k, mu_k) = <mu_k, phi_f(., u(T_k, .))>.
struct BackwardField {
    int order = 1;
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> v;
    std::vector<double> f_bar;
};

struct BackwardOptions {
    int jobs = 1;
    /// Materialize per-level tables in the returned field. Turn off for large
    /// trees and consume levels through the observer instead.
    bool keep_field = true;
    /// Optional analytic terminal gradient replacing the zero initialization
    /// of v at T_N. For the second-order scheme this also skips the
    /// first-order bootstrap of level N-1.
    std::function<void(double, std::span<const double>, std::span<double>)> terminal_v;
};

/// Called once per level, from N down to 0, with the finished values.
using LevelObserver = std::function<void(int level, std::span<const double> u,
                                         std::span<const double> v)>;

/// <measure, phi_f(., u)> in ascending node order. u_level must align with
/// the measure support.
double driver_mckean(const ProblemDefinition& problem, const DiscreteMeasureView& measure,
                     std::span<const double> u_level);

/// First-order backward sweep. Terminal level from phi, v(T_N) = 0 (or the
/// override), then for k = N-1 down to 0, with F(T_{k+1}) computed from the
/// level-(k+1) values first:
///   v(T_k, x_i) = 1/dt sum_j lambda_j u(T_{k+1}, child) * (scaled path endpoint)_j
///   u(T_k, x_i) = sum_j lambda_j [ u(child) + dt f(T_{k+1}, X_child, u(child),
///                                                   v(T_k, x_i), F(T_{k+1})) ]
BackwardField solve_first_order(const CubatureTree& tree, const ProblemDefinition& problem,
                                const BackwardOptions& options = {},
                                const LevelObserver& observer = {});

/// Second-order predictor-corrector sweep. Levels N and N-1 come from the
/// first-order scheme (unless an analytic terminal gradient is supplied);
/// below that each step extracts v with the zeta weights
///   zeta_j = 4 (increment)_j / dt - 6 (time-weighted increment)_j / dt^2,
/// predicts u, refreshes the McKean driver term at the predicted values, and
/// averages driver evaluations at both time levels. Requires N >= 2.
BackwardField solve_second_order(const CubatureTree& tree, const ProblemDefinition& problem,
                                 const BackwardOptions& options = {},
                                 const LevelObserver& observer = {});

/// Independent re-computation of the first-order recursion by plain nested
/// summation (no shared sweep machinery). Restricted to small non-recombined
/// trees (kappa^N <= 4096); used to cross-check solve_first_order.
BackwardField enumerate_oracle(const CubatureTree& tree, const ProblemDefinition& problem);

/// One row (level, node, u, v components) per node, 17 significant digits.
void write_field_csv(const CubatureTree& tree, const BackwardField& field, std::ostream& out);

} // namespace mkvcub
