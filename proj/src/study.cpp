#include "mkvcub/study.hpp"

#include "mkvcub/analysis.hpp"
#include "mkvcub/backward.hpp"
#include "mkvcub/cubature.hpp"
#include "mkvcub/errors.hpp"
#include "mkvcub/forward.hpp"
#include "mkvcub/timegrid.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

namespace mkvcub {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double wall_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + path);
    return out;
}
} // namespace

std::string to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::forward_only: return "forward-only";
        case Scheme::first_order: return "first-order";
        case Scheme::second_order: return "second-order";
    }
    return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
    if (name == "forward-only") return Scheme::forward_only;
    if (name == "first-order") return Scheme::first_order;
    if (name == "second-order") return Scheme::second_order;
    throw ConfigError("unknown scheme: " + name +
                      " (expected forward-only, first-order or second-order)");
}

void RunConfig::validate() const {
    if (problem != "toy-sb" && problem != "toy-lb")
        throw ConfigError("unknown problem: " + problem + " (built-ins: toy-sb, toy-lb)");
    if (dimension < 1) throw ConfigError("dimension must be positive");
    if (problem == "toy-lb" && !(K > 0.0)) throw ConfigError("K must be positive");
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (q < 1) throw ConfigError("q must be at least 1");
    if (!(gamma >= 1.0)) throw ConfigError("gamma must be >= 1");
    if (substeps < 1) throw ConfigError("substeps must be at least 1");
    if (slope_tail < 2) throw ConfigError("slope tail must be at least 2");
    if (jobs < 0) throw ConfigError("jobs must be non-negative");
    if (N_list.empty()) throw ConfigError("N list must not be empty");
    for (std::size_t i = 0; i < N_list.size(); ++i) {
        if (N_list[i] < 1) throw ConfigError("N values must be positive");
        if (i > 0 && N_list[i] <= N_list[i - 1])
            throw ConfigError("N list must be strictly increasing");
        if (scheme == Scheme::second_order && N_list[i] < 2)
            throw ConfigError("second-order scheme needs N >= 2");
    }
    // Plain trees have kappa^N + ... nodes; fail early when that cannot fit.
    // Recombined trees are guarded lazily against the realized node count.
    if (!recombine) {
        const std::size_t kappa = (m == 5 && dimension == 1)
                                      ? 3
                                      : 2 * static_cast<std::size_t>(dimension);
        const double leaves =
            static_cast<double>(N_list.back()) * std::log(static_cast<double>(kappa));
        if (leaves > std::log(static_cast<double>(node_budget)))
            throw BudgetError("plain tree with N = " + std::to_string(N_list.back()) +
                              " exceeds the node budget (" + std::to_string(node_budget) +
                              "); raise the budget or enable recombination");
    }
}

ToyProblem make_problem(const RunConfig& config) {
    if (config.problem == "toy-sb") {
        ToyProblem toy = make_toy_sb(config.dimension);
        if (config.horizon != 1.0)
            throw ConfigError("built-in toy problems are defined on horizon 1");
        return toy;
    }
    if (config.problem == "toy-lb") {
        if (config.horizon != 1.0)
            throw ConfigError("built-in toy problems are defined on horizon 1");
        return make_toy_lb(config.dimension, config.K);
    }
    throw ConfigError("unknown problem: " + config.problem);
}

namespace {

TreeOptions tree_options(const RunConfig& config) {
    TreeOptions options;
    options.substeps = config.substeps;
    options.recombine = config.recombine;
    options.merge_tolerance = config.merge_tolerance;
    options.node_budget = config.node_budget;
    options.jobs = config.jobs;
    return options;
}

ConvergenceRow run_single(const RunConfig& config, const ToyProblem& toy,
                          const CubatureFormula& formula, int N) {
    ConvergenceRow row;
    row.N = N;
    const TimeGrid grid = make_grid(config.horizon, N, config.gamma);
    const double started = wall_seconds();

    if (config.scheme == Scheme::forward_only) {
        TreeBuilder builder(toy.problem, formula, grid, config.q, tree_options(config));
        ForwardErrorAccumulator forward_acc(toy.exact.forward_test_function,
                                            toy.exact.forward_observable, toy.exact.forward_mode,
                                            N);
        Level current = builder.make_root();
        forward_acc.add_level(0, grid.time(0),
                              level_measure(current, toy.problem.dimension));
        for (int k = 0; k < N; ++k) {
            Level next = builder.advance(current, k);
            forward_acc.add_level(k + 1, grid.time(k + 1),
                                  level_measure(next, toy.problem.dimension));
            current = std::move(next);
        }
        row.forward_err = forward_acc.value();
        row.e_u = kNaN;
        row.e_v = kNaN;
        row.e_v_weighted = kNaN;
        row.nodes = builder.nodes_built();
    } else {
        const CubatureTree tree =
            build_tree(toy.problem, formula, grid, config.q, tree_options(config));
        row.forward_err = forward_error(tree, toy.exact.forward_test_function,
                                        toy.exact.forward_observable, toy.exact.forward_mode);
        BackwardErrorAccumulator backward_acc(tree, toy.exact);
        BackwardOptions options;
        options.jobs = config.jobs;
        options.keep_field = false;
        const LevelObserver observer = [&backward_acc](int level, std::span<const double> u,
                                                       std::span<const double> v) {
            backward_acc.add_level(level, u, v);
        };
        if (config.scheme == Scheme::first_order)
            solve_first_order(tree, toy.problem, options, observer);
        else
            solve_second_order(tree, toy.problem, options, observer);
        row.e_u = backward_acc.value().u_error;
        row.e_v = backward_acc.value().v_error;
        row.e_v_weighted = backward_acc.value().v_error_weighted;
        row.nodes = tree.total_nodes();
    }
    row.seconds = wall_seconds() - started;
    return row;
}

double column_slope(const std::vector<ConvergenceRow>& rows, double ConvergenceRow::*column,
                    int tail) {
    std::vector<std::pair<double, double>> points;
    points.reserve(rows.size());
    for (const auto& row : rows) {
        const double error = row.*column;
        if (std::isnan(error) || !(error > 0.0)) return kNaN;
        points.emplace_back(static_cast<double>(row.N), error);
    }
    if (points.size() < 2) return kNaN;
    return fit_rate(points, tail);
}

} // namespace

ConvergenceReport run_convergence_study(const RunConfig& config) {
    config.validate();
    const ToyProblem toy = make_problem(config);
    const CubatureFormula formula = make_cubature(config.dimension, config.m);

    ConvergenceReport report;
    for (int N : config.N_list) {
        ConvergenceRow row = run_single(config, toy, formula, N);
        report.rows.push_back(row);
        const auto tracked = config.scheme == Scheme::forward_only ? &ConvergenceRow::forward_err
                                                                   : &ConvergenceRow::e_u;
        report.rows.back().slope_so_far =
            column_slope(report.rows, tracked, config.slope_tail);
    }
    report.slope_forward = column_slope(report.rows, &ConvergenceRow::forward_err, config.slope_tail);
    report.slope_e_u = column_slope(report.rows, &ConvergenceRow::e_u, config.slope_tail);
    report.slope_e_v = column_slope(report.rows, &ConvergenceRow::e_v, config.slope_tail);
    report.slope_e_v_weighted =
        column_slope(report.rows, &ConvergenceRow::e_v_weighted, config.slope_tail);
    return report;
}

void write_report_csv(const ConvergenceReport& report, std::ostream& out) {
    out << "N,forward_err,E_u,E_v,E_v_weighted,slope_so_far,nodes,seconds\n";
    char buffer[64];
    for (const auto& row : report.rows) {
        out << row.N;
        for (double value : {row.forward_err, row.e_u, row.e_v, row.e_v_weighted,
                             row.slope_so_far}) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", value);
            out << ',' << buffer;
        }
        out << ',' << row.nodes;
        std::snprintf(buffer, sizeof(buffer), "%.17g", row.seconds);
        out << ',' << buffer << '\n';
    }
}

namespace {
nlohmann::json slope_or_null(double slope) {
    if (std::isnan(slope)) return nullptr;
    return slope;
}
} // namespace

nlohmann::json report_summary_json(const RunConfig& config, const ConvergenceReport& report) {
    nlohmann::json summary;
    summary["problem"] = config.problem;
    summary["dimension"] = config.dimension;
    summary["scheme"] = to_string(config.scheme);
    summary["m"] = config.m;
    summary["q"] = config.q;
    summary["gamma"] = config.gamma;
    summary["substeps"] = config.substeps;
    summary["recombine"] = config.recombine;
    summary["tail"] = config.slope_tail;
    summary["N"] = config.N_list;
    summary["slopes"] = {{"forward_err", slope_or_null(report.slope_forward)},
                         {"E_u", slope_or_null(report.slope_e_u)},
                         {"E_v", slope_or_null(report.slope_e_v)},
                         {"E_v_weighted", slope_or_null(report.slope_e_v_weighted)}};
    return summary;
}

SolveResult run_solve(const RunConfig& config) {
    config.validate();
    if (config.N_list.size() != 1)
        throw ConfigError("solve expects exactly one N");
    const ToyProblem toy = make_problem(config);
    const CubatureFormula formula = make_cubature(config.dimension, config.m);
    const TimeGrid grid = make_grid(config.horizon, config.N_list.front(), config.gamma);

    const CubatureTree tree =
        build_tree(toy.problem, formula, grid, config.q, tree_options(config));
    SolveResult result;
    result.nodes = tree.total_nodes();

    {
        auto out = open_output(config.out_prefix + "_nodes.csv");
        write_tree_csv(tree, out);
    }
    if (config.scheme != Scheme::forward_only) {
        BackwardOptions options;
        options.jobs = config.jobs;
        const BackwardField field = config.scheme == Scheme::first_order
                                        ? solve_first_order(tree, toy.problem, options)
                                        : solve_second_order(tree, toy.problem, options);
        result.root_u = field.u.front().front();
        auto out = open_output(config.out_prefix + "_field.csv");
        write_field_csv(tree, field, out);
    }
    return result;
}

} // namespace mkvcub
