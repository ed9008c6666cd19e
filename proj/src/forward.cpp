#include "mkvcub/forward.hpp"

#include "mkvcub/errors.hpp"
#include "mkvcub/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <unordered_map>

namespace mkvcub {

std::size_t CubatureTree::total_nodes() const {
    std::size_t count = 0;
    for (const auto& level : levels) count += level.size();
    return count;
}

std::function<double(std::span<const double>)> generator_apply(const ProblemDefinition& problem,
                                                               const DiscreteMeasureView& measure,
                                                               double t, const ScalarField& g,
                                                               int p) {
    if (p < 0) throw ConfigError("generator_apply: order must be non-negative");
    if (p == 0) return g.value;
    if (p > 1) {
        // Nest through a plain (oracle-free) field; derivatives of the inner
        // application come from finite differences.
        ScalarField inner;
        inner.value = generator_apply(problem, measure, t, g, p - 1);
        return generator_apply(problem, measure, t, inner, 1);
    }

    const int d = problem.dimension;
    // Freeze the McKean scalars of the measure.
    std::vector<double> w(static_cast<std::size_t>(d) + 1, 0.0);
    for (int i = 0; i <= d; ++i) {
        const auto& phi = problem.mckean[static_cast<std::size_t>(i)];
        w[static_cast<std::size_t>(i)] =
            measure.integrate([&phi](std::span<const double> y) { return phi.value(y); });
    }

    return [&problem, g, w, t, d](std::span<const double> y) {
        const std::size_t dim = static_cast<std::size_t>(d);
        std::vector<double> grad(dim), hess(dim * dim), column(dim), scratch;
        if (g.has_gradient())
            g.gradient(y, grad);
        else
            fd::gradient(g.value, y, grad, scratch);
        if (g.has_hessian())
            g.hessian(y, hess);
        else
            fd::hessian(g.value, y, hess, scratch);

        std::vector<double> drift(dim);
        problem.drift(t, y, w[0], drift);
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) acc += drift[i] * grad[i];
        for (std::size_t j = 0; j < dim; ++j) {
            problem.diffusion[j](t, y, w[j + 1], column);
            double quad = 0.0;
            for (std::size_t r = 0; r < dim; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dim; ++c) dot += hess[r * dim + c] * column[c];
                quad += column[r] * dot;
            }
            acc += 0.5 * quad;
        }
        return acc;
    };
}

namespace {

struct SegmentPlan {
    double s_begin = 0.0;
    double s_end = 0.0;
    std::vector<double> gains;  // d(scaled path)^i / ds per component, constant on the segment
};

std::vector<SegmentPlan> plan_segments(const PiecewisePath& base, double start, double length) {
    const int d = base.dimension;
    const double inv_root = 1.0 / std::sqrt(length);
    std::vector<SegmentPlan> plan;
    plan.reserve(base.knot_count() - 1);
    for (std::size_t seg = 0; seg + 1 < base.knot_count(); ++seg) {
        SegmentPlan entry;
        const double ta = base.knot_times[seg];
        const double tb = base.knot_times[seg + 1];
        entry.s_begin = start + ta * length;
        entry.s_end = start + tb * length;
        entry.gains.resize(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c) {
            const double pa = base.knot_points[seg * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            const double pb = base.knot_points[(seg + 1) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            entry.gains[static_cast<std::size_t>(c)] = (pb - pa) / (tb - ta) * inv_root;
        }
        plan.push_back(std::move(entry));
    }
    return plan;
}

struct IntegrateWorkspace {
    std::vector<double> x, stage, k1, k2, k3, k4, w, column;
    DriftWorkspace drift;

    void resize(int d, int w_count) {
        const std::size_t dim = static_cast<std::size_t>(d);
        x.resize(dim);
        stage.resize(dim);
        k1.resize(dim);
        k2.resize(dim);
        k3.resize(dim);
        k4.resize(dim);
        column.resize(dim);
        w.resize(static_cast<std::size_t>(w_count));
    }
};

// Drift correction under general law dependence: Jacobians of the measure
// coefficients are not part of the problem interface, so a state-dependent
// diffusion falls back to finite differences.
void measure_corrected_drift(const ProblemDefinition& problem, double s,
                             std::span<const double> y, const DiscreteMeasureView& measure,
                             std::span<double> out, IntegrateWorkspace& ws) {
    problem.measure_drift(s, y, measure, out);
    if (!problem.diffusion_state_dependent) return;
    const std::size_t d = static_cast<std::size_t>(problem.dimension);
    auto& point = ws.drift.fd_scratch;
    auto& column = ws.drift.column;
    auto& jac = ws.drift.jacobian;
    column.resize(d);
    jac.resize(d * d);
    std::vector<double> up(d), down(d);
    for (std::size_t j = 0; j < d; ++j) {
        problem.measure_diffusion[j](s, y, measure, column);
        point.assign(y.begin(), y.end());
        for (std::size_t axis = 0; axis < d; ++axis) {
            const double h = fd::step(y[axis]);
            point[axis] = y[axis] + h;
            problem.measure_diffusion[j](s, point, measure, up);
            point[axis] = y[axis] - h;
            problem.measure_diffusion[j](s, point, measure, down);
            point[axis] = y[axis];
            for (std::size_t row = 0; row < d; ++row)
                jac[row * d + axis] = (up[row] - down[row]) / (2.0 * h);
        }
        for (std::size_t row = 0; row < d; ++row) {
            double dot = 0.0;
            for (std::size_t col = 0; col < d; ++col) dot += jac[row * d + col] * column[col];
            out[row] -= 0.5 * dot;
        }
    }
}

// dx/ds of the cubature ODE at (s, x).
void ode_derivative(const ProblemDefinition& problem, const LevelExpansion* expansion,
                    const DiscreteMeasureView* measure, double s, std::span<const double> x,
                    std::span<const double> gains, std::span<double> out,
                    IntegrateWorkspace& ws) {
    const int d = problem.dimension;
    if (measure == nullptr) {
        for (int i = 0; i <= d; ++i)
            ws.w[static_cast<std::size_t>(i)] = expansion->eval(i, s);
        corrected_drift(problem, s, x, ws.w, out, ws.drift);
        for (int i = 1; i <= d; ++i) {
            const double gain = gains[static_cast<std::size_t>(i - 1)];
            if (gain == 0.0) continue;
            problem.diffusion[static_cast<std::size_t>(i - 1)](s, x, ws.w[static_cast<std::size_t>(i)],
                                                               ws.column);
            for (int c = 0; c < d; ++c)
                out[static_cast<std::size_t>(c)] += gain * ws.column[static_cast<std::size_t>(c)];
        }
    } else {
        measure_corrected_drift(problem, s, x, *measure, out, ws);
        for (int i = 1; i <= d; ++i) {
            const double gain = gains[static_cast<std::size_t>(i - 1)];
            if (gain == 0.0) continue;
            problem.measure_diffusion[static_cast<std::size_t>(i - 1)](s, x, *measure, ws.column);
            for (int c = 0; c < d; ++c)
                out[static_cast<std::size_t>(c)] += gain * ws.column[static_cast<std::size_t>(c)];
        }
    }
}

void integrate_with_plan(const ProblemDefinition& problem, const std::vector<SegmentPlan>& plan,
                         const LevelExpansion* expansion, const DiscreteMeasureView* measure,
                         int substeps, std::span<const double> start, std::span<double> out,
                         IntegrateWorkspace& ws) {
    const int d = problem.dimension;
    const std::size_t dim = static_cast<std::size_t>(d);
    for (std::size_t c = 0; c < dim; ++c) ws.x[c] = start[c];

    for (const SegmentPlan& segment : plan) {
        const double h = (segment.s_end - segment.s_begin) / substeps;
        double s = segment.s_begin;
        for (int n = 0; n < substeps; ++n) {
            ode_derivative(problem, expansion, measure, s, ws.x, segment.gains, ws.k1, ws);
            for (std::size_t c = 0; c < dim; ++c) ws.stage[c] = ws.x[c] + 0.5 * h * ws.k1[c];
            ode_derivative(problem, expansion, measure, s + 0.5 * h, ws.stage, segment.gains, ws.k2, ws);
            for (std::size_t c = 0; c < dim; ++c) ws.stage[c] = ws.x[c] + 0.5 * h * ws.k2[c];
            ode_derivative(problem, expansion, measure, s + 0.5 * h, ws.stage, segment.gains, ws.k3, ws);
            for (std::size_t c = 0; c < dim; ++c) ws.stage[c] = ws.x[c] + h * ws.k3[c];
            ode_derivative(problem, expansion, measure, s + h, ws.stage, segment.gains, ws.k4, ws);
            for (std::size_t c = 0; c < dim; ++c)
                ws.x[c] += h / 6.0 * (ws.k1[c] + 2.0 * ws.k2[c] + 2.0 * ws.k3[c] + ws.k4[c]);
            s = segment.s_begin + (n + 1) * h;
        }
    }
    for (std::size_t c = 0; c < dim; ++c) out[c] = ws.x[c];
}

} // namespace

std::vector<double> integrate_node(const ProblemDefinition& problem, std::span<const double> start,
                                   const ScaledPath& path, const LevelExpansion& expansion,
                                   int substeps) {
    if (substeps < 1) throw ConfigError("integrate_node: substeps must be at least 1");
    const auto plan = plan_segments(*path.base, path.start, path.length);
    IntegrateWorkspace ws;
    ws.resize(problem.dimension, problem.dimension + 1);
    std::vector<double> out(static_cast<std::size_t>(problem.dimension));
    integrate_with_plan(problem, plan, &expansion, nullptr, substeps, start, out, ws);
    for (double value : out) {
        if (!std::isfinite(value))
            throw NumericalError("integrate_node: non-finite state");
    }
    return out;
}

std::vector<double> integrate_node(const ProblemDefinition& problem, std::span<const double> start,
                                   const ScaledPath& path, const DiscreteMeasureView& measure,
                                   int substeps) {
    if (substeps < 1) throw ConfigError("integrate_node: substeps must be at least 1");
    const auto plan = plan_segments(*path.base, path.start, path.length);
    IntegrateWorkspace ws;
    ws.resize(problem.dimension, problem.dimension + 1);
    std::vector<double> out(static_cast<std::size_t>(problem.dimension));
    integrate_with_plan(problem, plan, nullptr, &measure, substeps, start, out, ws);
    for (double value : out) {
        if (!std::isfinite(value))
            throw NumericalError("integrate_node: non-finite state");
    }
    return out;
}

TreeBuilder::TreeBuilder(const ProblemDefinition& problem, const CubatureFormula& formula,
                         const TimeGrid& grid, int q, TreeOptions options)
    : problem_(problem), formula_(formula), grid_(grid), q_(q), options_(options) {
    problem.validate();
    formula.validate_shape();
    if (formula.dimension != problem.dimension)
        throw ConfigError("tree: cubature dimension does not match the problem");
    if (q < 1) throw ConfigError("tree: expansion order q must be at least 1");
    if (problem.measure_mode() && q != 1)
        throw ConfigError("tree: general law dependence requires q = 1");
    if (options.substeps < 1) throw ConfigError("tree: substeps must be at least 1");
}

void TreeBuilder::compute_expansion(Level& level, double t) const {
    auto& expansion = level.expansion;
    expansion.base_time = t;
    expansion.order = q_;
    if (problem_.measure_mode()) {
        expansion.count = 0;
        expansion.coeff.clear();
        return;
    }
    const int d = problem_.dimension;
    expansion.count = d + 1;
    expansion.coeff.assign(static_cast<std::size_t>(d + 1) * static_cast<std::size_t>(q_), 0.0);
    const DiscreteMeasureView measure = level_measure(level, d);
    for (int i = 0; i <= d; ++i) {
        const ScalarField& phi = problem_.mckean[static_cast<std::size_t>(i)];
        for (int p = 0; p < q_; ++p) {
            double value;
            if (p == 0) {
                value = measure.integrate([&phi](std::span<const double> y) { return phi.value(y); });
            } else {
                const auto powered = generator_apply(problem_, measure, t, phi, p);
                value = measure.integrate(powered);
            }
            expansion.coeff[static_cast<std::size_t>(i) * static_cast<std::size_t>(q_) +
                            static_cast<std::size_t>(p)] = value;
        }
    }
}

Level TreeBuilder::make_root() {
    Level root;
    root.states = problem_.initial_state;
    root.weights = {1.0};
    compute_expansion(root, grid_.time(0));
    nodes_built_ = 1;
    return root;
}

Level TreeBuilder::advance(Level& parent, int k) {
    const int d = problem_.dimension;
    const std::size_t dim = static_cast<std::size_t>(d);
    const std::size_t kappa = formula_.path_count();
    const std::size_t parents = parent.size();
    const double t0 = grid_.time(k);
    const double dt = grid_.step(k + 1);

    std::vector<std::vector<SegmentPlan>> plans(kappa);
    for (std::size_t j = 0; j < kappa; ++j)
        plans[j] = plan_segments(formula_.paths[j], t0, dt);

    const std::size_t child_count = parents * kappa;
    std::vector<double> child_states(child_count * dim);
    std::vector<double> child_weights(child_count);

    const DiscreteMeasureView parent_measure = level_measure(parent, d);
    const LevelExpansion* expansion = problem_.measure_mode() ? nullptr : &parent.expansion;
    const DiscreteMeasureView* measure = problem_.measure_mode() ? &parent_measure : nullptr;

    parallel_for(parents, options_.jobs, [&](std::size_t begin, std::size_t end) {
        IntegrateWorkspace ws;
        ws.resize(d, d + 1);
        for (std::size_t node = begin; node < end; ++node) {
            const std::span<const double> x0{parent.states.data() + node * dim, dim};
            for (std::size_t j = 0; j < kappa; ++j) {
                const std::size_t slot = node * kappa + j;
                integrate_with_plan(problem_, plans[j], expansion, measure, options_.substeps, x0,
                                    {child_states.data() + slot * dim, dim}, ws);
                child_weights[slot] = parent.weights[node] * formula_.weights[j];
            }
        }
    });

    for (std::size_t slot = 0; slot < child_count; ++slot) {
        for (std::size_t c = 0; c < dim; ++c) {
            if (!std::isfinite(child_states[slot * dim + c]))
                throw NumericalError("tree: integration failure at level " + std::to_string(k + 1) +
                                     ", parent node " + std::to_string(slot / kappa) + ", path " +
                                     std::to_string(slot % kappa));
        }
    }

    Level next;
    if (!options_.recombine) {
        parent.child_index.clear();
        next.states = std::move(child_states);
        next.weights = std::move(child_weights);
    } else {
        // Quantized coordinate hash; the first node seen in a cell is the
        // representative and later hits fold their weight into it.
        struct KeyHash {
            std::size_t operator()(const std::vector<std::int64_t>& key) const {
                std::size_t h = 0xcbf29ce484222325ULL;
                for (std::int64_t v : key) {
                    h ^= static_cast<std::size_t>(v);
                    h *= 0x100000001b3ULL;
                }
                return h;
            }
        };
        std::unordered_map<std::vector<std::int64_t>, std::uint32_t, KeyHash> cells;
        cells.reserve(child_count);
        parent.child_index.assign(child_count, 0);
        std::vector<std::int64_t> key(dim);
        for (std::size_t slot = 0; slot < child_count; ++slot) {
            for (std::size_t c = 0; c < dim; ++c)
                key[c] = std::llround(child_states[slot * dim + c] / options_.merge_tolerance);
            auto [it, inserted] = cells.try_emplace(key, static_cast<std::uint32_t>(next.size()));
            if (inserted) {
                next.weights.push_back(child_weights[slot]);
                for (std::size_t c = 0; c < dim; ++c)
                    next.states.push_back(child_states[slot * dim + c]);
            } else {
                next.weights[it->second] += child_weights[slot];
            }
            parent.child_index[slot] = it->second;
        }
    }

    nodes_built_ += next.size();
    if (nodes_built_ > options_.node_budget)
        throw BudgetError("tree: node budget (" + std::to_string(options_.node_budget) +
                          ") exceeded at level " + std::to_string(k + 1));

    compute_expansion(next, grid_.time(k + 1));
    return next;
}

CubatureTree build_tree(const ProblemDefinition& problem, const CubatureFormula& formula,
                        const TimeGrid& grid, int q, TreeOptions options) {
    CubatureTree tree;
    tree.grid = grid;
    tree.formula = formula;
    tree.q = q;
    tree.recombined = options.recombine;
    tree.levels.reserve(static_cast<std::size_t>(grid.size()) + 1);

    TreeBuilder builder(problem, formula, grid, q, options);
    tree.levels.push_back(builder.make_root());
    for (int k = 0; k < grid.size(); ++k)
        tree.levels.push_back(builder.advance(tree.levels.back(), k));
    return tree;
}

DiscreteMeasureView level_measure(const Level& level, int dimension) {
    DiscreteMeasureView view;
    view.dimension = dimension;
    view.states = level.states;
    view.weights = level.weights;
    return view;
}

DiscreteMeasureView level_measure(const CubatureTree& tree, int k) {
    if (k < 0 || k > tree.grid.size())
        throw ConfigError("level_measure: level out of range");
    return level_measure(tree.levels[static_cast<std::size_t>(k)], tree.formula.dimension);
}

void write_tree_csv(const CubatureTree& tree, std::ostream& out) {
    const int d = tree.formula.dimension;
    out << "level,node";
    for (int c = 0; c < d; ++c) out << ",x" << c;
    out << ",weight\n";
    char buffer[32];
    for (std::size_t k = 0; k < tree.levels.size(); ++k) {
        const Level& level = tree.levels[k];
        for (std::size_t node = 0; node < level.size(); ++node) {
            out << k << ',' << node;
            for (int c = 0; c < d; ++c) {
                std::snprintf(buffer, sizeof(buffer), "%.17g",
                              level.states[node * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)]);
                out << ',' << buffer;
            }
            std::snprintf(buffer, sizeof(buffer), "%.17g", level.weights[node]);
            out << ',' << buffer << '\n';
        }
    }
}

} // namespace mkvcub
