#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mkvcub/cubature.hpp"
#include "mkvcub/problem.hpp"
#include "mkvcub/timegrid.hpp"

namespace mkvcub {

/// Time expansion of the McKean terms at a level:
///   F_i(t, mu_k) = sum_{p < order} (t - base_time)^p / p! * c_{i,p},
/// with c_{i,p} = <mu_k, (L^mu)^p phi_i>.
struct LevelExpansion {
    int count = 0;          // d + 1 functionals
    int order = 1;          // q terms
    double base_time = 0.0; // T_k
    std::vector<double> coeff;  // count x order, row-major

    double coefficient(int i, int p) const {
        return coeff[static_cast<std::size_t>(i) * static_cast<std::size_t>(order) +
                     static_cast<std::size_t>(p)];
    }
    double eval(int i, double t) const {
        const double dt = t - base_time;
        const double* c = coeff.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(order);
        double acc = c[0];
        double term = 1.0;
        for (int p = 1; p < order; ++p) {
            term *= dt / static_cast<double>(p);
            acc += c[p] * term;
        }
        return acc;
    }
};

/// One level of the cubature tree. In recombined trees `child_index` maps
/// (node, path) to the merged index in the next level; otherwise children sit
/// at node * kappa + path by construction.
struct Level {
    std::vector<double> states;   // size() x d, row-major
    std::vector<double> weights;  // size()
    std::vector<std::uint32_t> child_index;  // size() x kappa, recombined trees only
    LevelExpansion expansion;

    std::size_t size() const { return weights.size(); }
};

struct TreeOptions {
    int substeps = 8;                  // RK4 steps per linear path segment
    bool recombine = false;            // merge nodes equal within merge_tolerance
    double merge_tolerance = 1e-12;
    std::size_t node_budget = std::size_t{1} << 22;
    int jobs = 1;
};

struct CubatureTree {
    TimeGrid grid;
    CubatureFormula formula;
    int q = 1;
    bool recombined = false;
    std::vector<Level> levels;  // N + 1 of them

    std::size_t path_count() const { return formula.path_count(); }
    std::size_t child(int level, std::size_t node, std::size_t j) const {
        const Level& parent = levels[static_cast<std::size_t>(level)];
        if (!parent.child_index.empty())
            return parent.child_index[node * path_count() + j];
        return node * path_count() + j;
    }
    std::size_t total_nodes() const;
};

/// (L^measure)^p g where L g = V_0 . grad g + 1/2 Tr[V V^T D^2 g] with the
/// coefficients frozen at (t, ., <measure, phi_i>). Missing derivative oracles
/// of g fall back to finite differences; p >= 2 always nests through finite
/// differences. The returned callable copies the measure view (the underlying
/// arrays must outlive it) and is not thread-safe.
std::function<double(std::span<const double>)> generator_apply(const ProblemDefinition& problem,
                                                               const DiscreteMeasureView& measure,
                                                               double t, const ScalarField& g,
                                                               int p);

/// Endpoint of the cubature ODE
///   dx = Vbar_0(t, x, F_0(t)) dt + sum_i V_i(t, x, F_i(t)) d(scaled path)^i
/// over [path.start, path.start + path.length], classical RK4 with `substeps`
/// steps per linear segment. The expansion supplies the F_i; in measure mode
/// pass the level measure instead and the expansion is ignored.
std::vector<double> integrate_node(const ProblemDefinition& problem, std::span<const double> start,
                                   const ScaledPath& path, const LevelExpansion& expansion,
                                   int substeps);
std::vector<double> integrate_node(const ProblemDefinition& problem, std::span<const double> start,
                                   const ScaledPath& path, const DiscreteMeasureView& measure,
                                   int substeps);

/// Level-by-level tree construction. Levels can be consumed in a streaming
/// fashion (forward-only studies) or accumulated by build_tree.
class TreeBuilder {
public:
    TreeBuilder(const ProblemDefinition& problem, const CubatureFormula& formula,
                const TimeGrid& grid, int q, TreeOptions options);

    Level make_root();
    /// Build level k+1 from level k. Fills parent.child_index when
    /// recombination is on.
    Level advance(Level& parent, int k);
    std::size_t nodes_built() const { return nodes_built_; }

private:
    void compute_expansion(Level& level, double t) const;

    const ProblemDefinition& problem_;
    const CubatureFormula& formula_;
    const TimeGrid& grid_;
    int q_;
    TreeOptions options_;
    std::size_t nodes_built_ = 0;
};

CubatureTree build_tree(const ProblemDefinition& problem, const CubatureFormula& formula,
                        const TimeGrid& grid, int q, TreeOptions options = {});

DiscreteMeasureView level_measure(const CubatureTree& tree, int k);
DiscreteMeasureView level_measure(const Level& level, int dimension);

/// Diagnostic export: one row (level, node, state coordinates, weight) per
/// node, 17 significant digits.
void write_tree_csv(const CubatureTree& tree, std::ostream& out);

} // namespace mkvcub
