#include "mkvcub/backward.hpp"

#include "mkvcub/errors.hpp"
#include "mkvcub/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace mkvcub {

double driver_mckean(const ProblemDefinition& problem, const DiscreteMeasureView& measure,
                     std::span<const double> u_level) {
    if (u_level.size() != measure.size())
        throw ConfigError("driver_mckean: values do not align with the measure support");
    double acc = 0.0;
    for (std::size_t i = 0; i < measure.size(); ++i)
        acc += measure.weights[i] * problem.driver_functional(measure.state(i), u_level[i]);
    return acc;
}

namespace {

struct TerminalData {
    std::vector<double> u;
    std::vector<double> v;
};

TerminalData terminal_level(const CubatureTree& tree, const ProblemDefinition& problem,
                            const BackwardOptions& options) {
    const Level& leaves = tree.levels.back();
    const std::size_t n = leaves.size();
    const std::size_t dim = static_cast<std::size_t>(problem.dimension);
    TerminalData data;
    data.u.resize(n);
    data.v.assign(n * dim, 0.0);
    const double T = tree.grid.horizon;
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> x{leaves.states.data() + i * dim, dim};
        data.u[i] = problem.terminal(x);
        if (options.terminal_v) options.terminal_v(T, x, {data.v.data() + i * dim, dim});
    }
    return data;
}

// Scaled path endpoints sqrt(dt) * omega_j(1), one d-vector per path.
std::vector<std::vector<double>> level_endpoints(const CubatureTree& tree, int k) {
    const std::size_t kappa = tree.path_count();
    const double t0 = tree.grid.time(k);
    const double dt = tree.grid.step(k + 1);
    std::vector<std::vector<double>> endpoints(kappa);
    for (std::size_t j = 0; j < kappa; ++j) {
        const ScaledPath scaled{&tree.formula.paths[j], t0, dt};
        endpoints[j] = path_increment_integrals(scaled).endpoint;
    }
    return endpoints;
}

// First-order update of level k from the level-(k+1) values.
void first_order_step(const CubatureTree& tree, const ProblemDefinition& problem, int k,
                      double f_next, std::span<const double> u_next, std::vector<double>& u_out,
                      std::vector<double>& v_out, int jobs) {
    const Level& level = tree.levels[static_cast<std::size_t>(k)];
    const Level& next = tree.levels[static_cast<std::size_t>(k) + 1];
    const std::size_t kappa = tree.path_count();
    const std::size_t dim = static_cast<std::size_t>(problem.dimension);
    const double dt = tree.grid.step(k + 1);
    const double t_next = tree.grid.time(k + 1);
    const auto endpoints = level_endpoints(tree, k);
    const auto& lambda = tree.formula.weights;

    u_out.resize(level.size());
    v_out.assign(level.size() * dim, 0.0);
    parallel_for(level.size(), jobs, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double* v_i = v_out.data() + i * dim;
            for (std::size_t j = 0; j < kappa; ++j) {
                const double u_child = u_next[tree.child(k, i, j)];
                const double scale = lambda[j] * u_child / dt;
                for (std::size_t c = 0; c < dim; ++c) v_i[c] += scale * endpoints[j][c];
            }
            double acc = 0.0;
            for (std::size_t j = 0; j < kappa; ++j) {
                const std::size_t child = tree.child(k, i, j);
                const double u_child = u_next[child];
                const std::span<const double> x_child{next.states.data() + child * dim, dim};
                const double f_value = problem.driver(t_next, x_child, u_child,
                                                      {v_i, dim}, f_next);
                acc += lambda[j] * (u_child + dt * f_value);
            }
            u_out[i] = acc;
        }
    });
}

struct SweepSink {
    BackwardField& field;
    const LevelObserver& observer;
    bool keep;

    void emit(int k, std::vector<double>& u, std::vector<double>& v) const {
        if (keep) {
            field.u[static_cast<std::size_t>(k)] = u;
            field.v[static_cast<std::size_t>(k)] = v;
        }
        if (observer) observer(k, u, v);
    }
};

} // namespace

BackwardField solve_first_order(const CubatureTree& tree, const ProblemDefinition& problem,
                                const BackwardOptions& options, const LevelObserver& observer) {
    const int N = tree.grid.size();
    BackwardField field;
    field.order = 1;
    field.f_bar.assign(static_cast<std::size_t>(N) + 1, 0.0);
    if (options.keep_field) {
        field.u.resize(static_cast<std::size_t>(N) + 1);
        field.v.resize(static_cast<std::size_t>(N) + 1);
    }
    SweepSink sink{field, observer, options.keep_field};

    TerminalData terminal = terminal_level(tree, problem, options);
    std::vector<double> u_next = std::move(terminal.u);
    std::vector<double> v_next = std::move(terminal.v);
    field.f_bar[static_cast<std::size_t>(N)] =
        driver_mckean(problem, level_measure(tree, N), u_next);
    sink.emit(N, u_next, v_next);

    std::vector<double> u_curr, v_curr;
    for (int k = N - 1; k >= 0; --k) {
        first_order_step(tree, problem, k, field.f_bar[static_cast<std::size_t>(k) + 1], u_next,
                         u_curr, v_curr, options.jobs);
        field.f_bar[static_cast<std::size_t>(k)] =
            driver_mckean(problem, level_measure(tree, k), u_curr);
        sink.emit(k, u_curr, v_curr);
        u_next = std::move(u_curr);
        v_next = std::move(v_curr);
        u_curr.clear();
        v_curr.clear();
    }
    return field;
}

BackwardField solve_second_order(const CubatureTree& tree, const ProblemDefinition& problem,
                                 const BackwardOptions& options, const LevelObserver& observer) {
    const int N = tree.grid.size();
    if (N < 2) throw ConfigError("second-order scheme needs at least two time steps");

    const std::size_t kappa = tree.path_count();
    const std::size_t dim = static_cast<std::size_t>(problem.dimension);
    const auto& lambda = tree.formula.weights;

    BackwardField field;
    field.order = 2;
    field.f_bar.assign(static_cast<std::size_t>(N) + 1, 0.0);
    if (options.keep_field) {
        field.u.resize(static_cast<std::size_t>(N) + 1);
        field.v.resize(static_cast<std::size_t>(N) + 1);
    }
    SweepSink sink{field, observer, options.keep_field};

    TerminalData terminal = terminal_level(tree, problem, options);
    std::vector<double> u_next = std::move(terminal.u);
    std::vector<double> v_next = std::move(terminal.v);
    field.f_bar[static_cast<std::size_t>(N)] =
        driver_mckean(problem, level_measure(tree, N), u_next);
    sink.emit(N, u_next, v_next);

    std::vector<double> u_curr, v_curr;
    int start_level = N - 1;
    if (!options.terminal_v) {
        // Bootstrap level N-1 with one first-order step.
        first_order_step(tree, problem, N - 1, field.f_bar[static_cast<std::size_t>(N)], u_next,
                         u_curr, v_curr, options.jobs);
        field.f_bar[static_cast<std::size_t>(N) - 1] =
            driver_mckean(problem, level_measure(tree, N - 1), u_curr);
        sink.emit(N - 1, u_curr, v_curr);
        u_next = std::move(u_curr);
        v_next = std::move(v_curr);
        u_curr.clear();
        v_curr.clear();
        start_level = N - 2;
    }

    std::vector<double> u_tilde, f_hat;
    for (int k = start_level; k >= 0; --k) {
        const Level& level = tree.levels[static_cast<std::size_t>(k)];
        const Level& next = tree.levels[static_cast<std::size_t>(k) + 1];
        const std::size_t n = level.size();
        const double dt = tree.grid.step(k + 1);
        const double t_curr = tree.grid.time(k);
        const double t_next = tree.grid.time(k + 1);
        const double f_next = field.f_bar[static_cast<std::size_t>(k) + 1];

        // zeta_j = 4 incr / dt - 6 time-weighted / dt^2, per path.
        std::vector<std::vector<double>> zeta(kappa);
        for (std::size_t j = 0; j < kappa; ++j) {
            const ScaledPath scaled{&tree.formula.paths[j], t_curr, dt};
            const PathIncrements inc = path_increment_integrals(scaled);
            zeta[j].resize(dim);
            for (std::size_t c = 0; c < dim; ++c)
                zeta[j][c] = 4.0 * inc.endpoint[c] / dt - 6.0 * inc.time_weighted[c] / (dt * dt);
        }

        u_curr.assign(n, 0.0);
        v_curr.assign(n * dim, 0.0);
        u_tilde.assign(n, 0.0);
        f_hat.assign(n * kappa, 0.0);

        // Pass 1: driver at the child values, gradient extraction, predictor.
        parallel_for(n, options.jobs, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                double* v_i = v_curr.data() + i * dim;
                double predict = 0.0;
                for (std::size_t j = 0; j < kappa; ++j) {
                    const std::size_t child = tree.child(k, i, j);
                    const double u_child = u_next[child];
                    const std::span<const double> x_child{next.states.data() + child * dim, dim};
                    const std::span<const double> v_child{v_next.data() + child * dim, dim};
                    const double f_value =
                        problem.driver(t_next, x_child, u_child, v_child, f_next);
                    f_hat[i * kappa + j] = f_value;
                    const double bracket = u_child + dt * f_value;
                    predict += lambda[j] * bracket;
                    for (std::size_t c = 0; c < dim; ++c)
                        v_i[c] += lambda[j] * bracket * zeta[j][c];
                }
                u_tilde[i] = predict;
            }
        });

        // McKean driver term at the predicted values.
        const double f_tilde_level =
            driver_mckean(problem, level_measure(tree, k), u_tilde);

        // Pass 2: corrector.
        parallel_for(n, options.jobs, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const std::span<const double> x_i{level.states.data() + i * dim, dim};
                const double f_corr = problem.driver(t_curr, x_i, u_tilde[i],
                                                     {v_curr.data() + i * dim, dim}, f_tilde_level);
                double acc = 0.0;
                for (std::size_t j = 0; j < kappa; ++j) {
                    const double u_child = u_next[tree.child(k, i, j)];
                    acc += lambda[j] * (u_child + 0.5 * dt * (f_hat[i * kappa + j] + f_corr));
                }
                u_curr[i] = acc;
            }
        });

        field.f_bar[static_cast<std::size_t>(k)] =
            driver_mckean(problem, level_measure(tree, k), u_curr);
        sink.emit(k, u_curr, v_curr);
        u_next = std::move(u_curr);
        v_next = std::move(v_curr);
        u_curr.clear();
        v_curr.clear();
    }
    return field;
}

BackwardField enumerate_oracle(const CubatureTree& tree, const ProblemDefinition& problem) {
    if (tree.recombined)
        throw ConfigError("enumerate_oracle: only plain (non-recombined) trees are supported");
    const int N = tree.grid.size();
    const std::size_t kappa = tree.path_count();
    if (tree.levels.back().size() > 4096)
        throw ConfigError("enumerate_oracle: tree too large (kappa^N must be <= 4096)");
    const std::size_t dim = static_cast<std::size_t>(problem.dimension);

    BackwardField field;
    field.order = 1;
    field.u.resize(static_cast<std::size_t>(N) + 1);
    field.v.resize(static_cast<std::size_t>(N) + 1);
    field.f_bar.assign(static_cast<std::size_t>(N) + 1, 0.0);

    // Leaves.
    {
        const Level& leaves = tree.levels.back();
        auto& u = field.u[static_cast<std::size_t>(N)];
        u.resize(leaves.size());
        for (std::size_t i = 0; i < leaves.size(); ++i)
            u[i] = problem.terminal({leaves.states.data() + i * dim, dim});
        field.v[static_cast<std::size_t>(N)].assign(leaves.size() * dim, 0.0);
        double f_terminal = 0.0;
        for (std::size_t i = 0; i < leaves.size(); ++i)
            f_terminal += leaves.weights[i] *
                          problem.driver_functional({leaves.states.data() + i * dim, dim}, u[i]);
        field.f_bar[static_cast<std::size_t>(N)] = f_terminal;
    }

    for (int k = N - 1; k >= 0; --k) {
        const Level& level = tree.levels[static_cast<std::size_t>(k)];
        const Level& next = tree.levels[static_cast<std::size_t>(k) + 1];
        const auto& u_next = field.u[static_cast<std::size_t>(k) + 1];
        const double dt = tree.grid.time(k + 1) - tree.grid.time(k);
        const double root_dt = std::sqrt(dt);
        const double t_next = tree.grid.time(k + 1);
        const double f_next = field.f_bar[static_cast<std::size_t>(k) + 1];

        auto& u = field.u[static_cast<std::size_t>(k)];
        auto& v = field.v[static_cast<std::size_t>(k)];
        u.assign(level.size(), 0.0);
        v.assign(level.size() * dim, 0.0);
        for (std::size_t i = 0; i < level.size(); ++i) {
            for (std::size_t j = 0; j < kappa; ++j) {
                const std::size_t child = i * kappa + j;
                const std::span<const double> omega_end = tree.formula.paths[j].endpoint();
                for (std::size_t c = 0; c < dim; ++c)
                    v[i * dim + c] += tree.formula.weights[j] * u_next[child] * root_dt *
                                      omega_end[c] / dt;
            }
            for (std::size_t j = 0; j < kappa; ++j) {
                const std::size_t child = i * kappa + j;
                const double f_value =
                    problem.driver(t_next, {next.states.data() + child * dim, dim}, u_next[child],
                                   {v.data() + i * dim, dim}, f_next);
                u[i] += tree.formula.weights[j] * (u_next[child] + dt * f_value);
            }
        }
        double f_level = 0.0;
        for (std::size_t i = 0; i < level.size(); ++i)
            f_level += level.weights[i] *
                       problem.driver_functional({level.states.data() + i * dim, dim}, u[i]);
        field.f_bar[static_cast<std::size_t>(k)] = f_level;
    }
    return field;
}

void write_field_csv(const CubatureTree& tree, const BackwardField& field, std::ostream& out) {
    const int d = tree.formula.dimension;
    out << "level,node,u";
    for (int c = 0; c < d; ++c) out << ",v" << c;
    out << '\n';
    char buffer[32];
    for (std::size_t k = 0; k < field.u.size(); ++k) {
        for (std::size_t node = 0; node < field.u[k].size(); ++node) {
            out << k << ',' << node;
            std::snprintf(buffer, sizeof(buffer), "%.17g", field.u[k][node]);
            out << ',' << buffer;
            for (int c = 0; c < d; ++c) {
                std::snprintf(buffer, sizeof(buffer), "%.17g",
                              field.v[k][node * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)]);
                out << ',' << buffer;
            }
            out << '\n';
        }
    }
}

} // namespace mkvcub
