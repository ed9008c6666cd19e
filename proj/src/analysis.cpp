#include "mkvcub/analysis.hpp"

#include "mkvcub/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mkvcub {

void ForwardErrorAccumulator::add_level(int level, double time, const DiscreteMeasureView& measure) {
    if (mode_ == ForwardErrorMode::terminal_only && level != terminal_level_) return;
    const double observed = measure.integrate(test_function_);
    const double error = std::abs(observed - exact_(time));
    worst_ = std::max(worst_, error);
}

double forward_error(const CubatureTree& tree,
                     const std::function<double(std::span<const double>)>& test_function,
                     const std::function<double(double)>& exact, ForwardErrorMode mode) {
    ForwardErrorAccumulator acc(test_function, exact, mode, tree.grid.size());
    for (int k = 0; k <= tree.grid.size(); ++k)
        acc.add_level(k, tree.grid.time(k), level_measure(tree, k));
    return acc.value();
}

BackwardErrorAccumulator::BackwardErrorAccumulator(const CubatureTree& tree,
                                                   const ExactSolution& exact,
                                                   BackwardErrorOptions options)
    : tree_(tree), exact_(exact) {
    const int N = tree.grid.size();
    level_begin_ = options.level_begin;
    level_end_ = options.level_end < 0 ? N + options.level_end : options.level_end;
    if (level_begin_ < 0) level_begin_ = 0;
    if (level_end_ > N) level_end_ = N;
}

void BackwardErrorAccumulator::add_level(int level, std::span<const double> u,
                                         std::span<const double> v) {
    if (level < level_begin_ || level > level_end_) return;
    const Level& nodes = tree_.levels[static_cast<std::size_t>(level)];
    const std::size_t dim = static_cast<std::size_t>(tree_.formula.dimension);
    const double t = tree_.grid.time(level);
    const double weight = std::sqrt(tree_.grid.step(std::max(level, 1)));

    std::vector<double> v_exact(dim);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::span<const double> x{nodes.states.data() + i * dim, dim};
        errors_.u_error = std::max(errors_.u_error, std::abs(exact_.u(t, x) - u[i]));
        if (t < exact_.v_defined_before) {
            exact_.v(t, x, v_exact);
            double worst = 0.0;
            for (std::size_t c = 0; c < dim; ++c)
                worst = std::max(worst, std::abs(v_exact[c] - v[i * dim + c]));
            errors_.v_error = std::max(errors_.v_error, worst);
            errors_.v_error_weighted = std::max(errors_.v_error_weighted, weight * worst);
        }
    }
}

BackwardErrors backward_error(const CubatureTree& tree, const BackwardField& field,
                              const ExactSolution& exact, BackwardErrorOptions options) {
    BackwardErrorAccumulator acc(tree, exact, options);
    for (int k = 0; k < static_cast<int>(field.u.size()); ++k)
        acc.add_level(k, field.u[static_cast<std::size_t>(k)], field.v[static_cast<std::size_t>(k)]);
    return acc.value();
}

double fit_rate(std::span<const std::pair<double, double>> points, int tail) {
    if (tail < 2) throw ConfigError("fit_rate: need at least two points in the tail");
    if (points.size() < 2) throw ConfigError("fit_rate: need at least two points");
    const std::size_t use = std::min<std::size_t>(points.size(), static_cast<std::size_t>(tail));
    const std::size_t first = points.size() - use;

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = first; i < points.size(); ++i) {
        if (!(points[i].second > 0.0))
            throw ConfigError("fit_rate: errors must be positive");
        mean_x += -std::log(points[i].first);
        mean_y += std::log(points[i].second);
    }
    mean_x /= static_cast<double>(use);
    mean_y /= static_cast<double>(use);

    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = first; i < points.size(); ++i) {
        const double dx = -std::log(points[i].first) - mean_x;
        const double dy = std::log(points[i].second) - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw ConfigError("fit_rate: all points share the same N");
    return sxy / sxx;
}

} // namespace mkvcub
