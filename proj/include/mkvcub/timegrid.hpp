#pragma once

#include <vector>

namespace mkvcub {

/// Discretization 0 = T_0 < ... < T_N = T of [0, T] with
/// T_k = T * (1 - (1 - k/N)^gamma). gamma = 1 gives the uniform grid;
/// gamma > 1 refines the steps towards the right endpoint.
struct TimeGrid {
    double horizon = 0.0;
    int steps = 0;       // N
    double gamma = 1.0;
    std::vector<double> points;  // size N + 1, points[0] = 0, points[N] = horizon

    int size() const { return steps; }
    double time(int k) const { return points[static_cast<std::size_t>(k)]; }
    /// Step length Delta_{T_k} = T_k - T_{k-1}, valid for 1 <= k <= N.
    double step(int k) const {
        return points[static_cast<std::size_t>(k)] - points[static_cast<std::size_t>(k) - 1];
    }
    double max_step() const;
};

/// Build the grid. Requires T > 0, N >= 1, gamma >= 1.
TimeGrid make_grid(double horizon, int steps, double gamma);

} // namespace mkvcub
