#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "mkvcub/backward.hpp"
#include "mkvcub/forward.hpp"
#include "mkvcub/problem.hpp"
#include "mkvcub/timegrid.hpp"

namespace mkvcub {

/// Streaming |<mu_k, g> - exact(T_k)| folder; feed levels in any order.
class ForwardErrorAccumulator {
public:
    ForwardErrorAccumulator(std::function<double(std::span<const double>)> test_function,
                            std::function<double(double)> exact, ForwardErrorMode mode,
                            int terminal_level)
        : test_function_(std::move(test_function)), exact_(std::move(exact)), mode_(mode),
          terminal_level_(terminal_level) {}

    void add_level(int level, double time, const DiscreteMeasureView& measure);
    double value() const { return worst_; }

private:
    std::function<double(std::span<const double>)> test_function_;
    std::function<double(double)> exact_;
    ForwardErrorMode mode_;
    int terminal_level_;
    double worst_ = 0.0;
};

/// Weak forward error of a built tree against the exact observable:
/// max_k |<mu_k, g> - exact(T_k)| or the terminal-level value only.
double forward_error(const CubatureTree& tree,
                     const std::function<double(std::span<const double>)>& test_function,
                     const std::function<double(double)>& exact, ForwardErrorMode mode);

struct BackwardErrorOptions {
    /// Levels [level_begin, level_end] enter the maxima; level_end < 0 counts
    /// from N (default -2 means N-2, matching the plotted quantity and keeping
    /// clear of the terminal level where the exact gradient may blow up).
    int level_begin = 0;
    int level_end = -2;
};

struct BackwardErrors {
    double u_error = 0.0;
    double v_error = 0.0;           // unweighted max
    double v_error_weighted = 0.0;  // sqrt-step weighted max
};

/// Streaming max |u - u_hat| / |v - v_hat| folder over backward-sweep levels.
/// The sqrt-step weight at level k is sqrt(Delta_{T_k}) (the first step's
/// weight is reused at level 0 where no preceding step exists).
class BackwardErrorAccumulator {
public:
    BackwardErrorAccumulator(const CubatureTree& tree, const ExactSolution& exact,
                             BackwardErrorOptions options = {});

    void add_level(int level, std::span<const double> u, std::span<const double> v);
    const BackwardErrors& value() const { return errors_; }

private:
    const CubatureTree& tree_;
    const ExactSolution& exact_;
    int level_begin_;
    int level_end_;
    BackwardErrors errors_;
};

/// Error functionals of a materialized field over the configured level range.
BackwardErrors backward_error(const CubatureTree& tree, const BackwardField& field,
                              const ExactSolution& exact, BackwardErrorOptions options = {});

/// Least-squares slope of log(error) against log(1/N) over the last `tail`
/// points. Errors must be positive; tail is clamped to the point count but
/// must be at least 2.
double fit_rate(std::span<const std::pair<double, double>> points, int tail = 8);

} // namespace mkvcub
