#include "mkvcub/timegrid.hpp"

#include "mkvcub/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mkvcub {

double TimeGrid::max_step() const {
    // Mathematically the first step is largest for gamma >= 1, but rounding
    // of the uniform case can break that by an ulp, so scan.
    double worst = 0.0;
    for (int k = 1; k <= steps; ++k) worst = std::max(worst, step(k));
    return worst;
}

TimeGrid make_grid(double horizon, int steps, double gamma) {
    if (!(horizon > 0.0)) throw ConfigError("time grid: horizon must be positive");
    if (steps < 1) throw ConfigError("time grid: need at least one step");
    if (!(gamma >= 1.0))
        throw ConfigError("time grid: gamma must be >= 1 (got " + std::to_string(gamma) + ")");

    TimeGrid grid;
    grid.horizon = horizon;
    grid.steps = steps;
    grid.gamma = gamma;
    grid.points.resize(static_cast<std::size_t>(steps) + 1);
    grid.points[0] = 0.0;
    for (int k = 1; k < steps; ++k) {
        const double frac = 1.0 - static_cast<double>(k) / static_cast<double>(steps);
        grid.points[static_cast<std::size_t>(k)] = horizon * (1.0 - std::pow(frac, gamma));
    }
    // The endpoint is assigned, not computed, so T_N = T holds exactly.
    grid.points[static_cast<std::size_t>(steps)] = horizon;
    return grid;
}

} // namespace mkvcub
