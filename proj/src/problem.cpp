#include "mkvcub/problem.hpp"

#include "mkvcub/errors.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace mkvcub {

void ProblemDefinition::validate() const {
    if (dimension < 1) throw ConfigError("problem: dimension must be positive");
    if (!(horizon > 0.0)) throw ConfigError("problem: horizon must be positive");
    if (initial_state.size() != static_cast<std::size_t>(dimension))
        throw ConfigError("problem: initial state has wrong dimension");
    if (measure_mode()) {
        if (measure_diffusion.size() != static_cast<std::size_t>(dimension))
            throw ConfigError("problem: measure-mode diffusion must supply d columns");
    } else {
        if (!drift) throw ConfigError("problem: drift coefficient missing");
        if (diffusion.size() != static_cast<std::size_t>(dimension))
            throw ConfigError("problem: diffusion must supply d columns");
        if (mckean.size() != static_cast<std::size_t>(dimension) + 1)
            throw ConfigError("problem: need d + 1 McKean functionals");
    }
    if (!terminal) throw ConfigError("problem: terminal condition missing");
}

namespace fd {

double step(double y) {
    static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
    return base * std::max(1.0, std::abs(y));
}

double partial(const std::function<double(std::span<const double>)>& g,
               std::span<const double> y, int axis, std::vector<double>& scratch) {
    scratch.assign(y.begin(), y.end());
    const double h = step(y[static_cast<std::size_t>(axis)]);
    scratch[static_cast<std::size_t>(axis)] = y[static_cast<std::size_t>(axis)] + h;
    const double up = g(scratch);
    scratch[static_cast<std::size_t>(axis)] = y[static_cast<std::size_t>(axis)] - h;
    const double down = g(scratch);
    return (up - down) / (2.0 * h);
}

void gradient(const std::function<double(std::span<const double>)>& g,
              std::span<const double> y, std::span<double> out, std::vector<double>& scratch) {
    for (std::size_t axis = 0; axis < y.size(); ++axis)
        out[axis] = partial(g, y, static_cast<int>(axis), scratch);
}

void hessian(const std::function<double(std::span<const double>)>& g,
             std::span<const double> y, std::span<double> out, std::vector<double>& scratch) {
    const std::size_t d = y.size();
    scratch.assign(y.begin(), y.end());
    const double center = g(scratch);
    for (std::size_t i = 0; i < d; ++i) {
        const double hi = step(y[i]);
        for (std::size_t j = i; j < d; ++j) {
            double value;
            if (i == j) {
                scratch.assign(y.begin(), y.end());
                scratch[i] = y[i] + hi;
                const double up = g(scratch);
                scratch[i] = y[i] - hi;
                const double down = g(scratch);
                value = (up - 2.0 * center + down) / (hi * hi);
            } else {
                const double hj = step(y[j]);
                double corners = 0.0;
                for (double si : {1.0, -1.0}) {
                    for (double sj : {1.0, -1.0}) {
                        scratch.assign(y.begin(), y.end());
                        scratch[i] = y[i] + si * hi;
                        scratch[j] = y[j] + sj * hj;
                        corners += si * sj * g(scratch);
                    }
                }
                value = corners / (4.0 * hi * hj);
            }
            out[i * d + j] = value;
            out[j * d + i] = value;
        }
    }
}

} // namespace fd

namespace {

// Jacobian of diffusion column k at (t, y, w), analytic when supplied,
// central differences otherwise.
void diffusion_jacobian(const ProblemDefinition& problem, int column, double t,
                        std::span<const double> y, double w, std::span<double> out,
                        DriftWorkspace& ws) {
    if (!problem.diffusion_jacobians.empty()) {
        problem.diffusion_jacobians[static_cast<std::size_t>(column)](t, y, w, out);
        return;
    }
    const std::size_t d = static_cast<std::size_t>(problem.dimension);
    auto& point = ws.fd_scratch;
    point.assign(y.begin(), y.end());
    std::vector<double> up(d), down(d);
    for (std::size_t axis = 0; axis < d; ++axis) {
        const double h = fd::step(y[axis]);
        point[axis] = y[axis] + h;
        problem.diffusion[static_cast<std::size_t>(column)](t, point, w, up);
        point[axis] = y[axis] - h;
        problem.diffusion[static_cast<std::size_t>(column)](t, point, w, down);
        point[axis] = y[axis];
        for (std::size_t row = 0; row < d; ++row)
            out[row * d + axis] = (up[row] - down[row]) / (2.0 * h);
    }
}

} // namespace

void corrected_drift(const ProblemDefinition& problem, double t, std::span<const double> y,
                     std::span<const double> w, std::span<double> out, DriftWorkspace& ws) {
    problem.drift(t, y, w[0], out);
    if (!problem.diffusion_state_dependent) return;

    const std::size_t d = static_cast<std::size_t>(problem.dimension);
    ws.column.resize(d);
    ws.jacobian.resize(d * d);
    for (std::size_t j = 0; j < d; ++j) {
        const double wj = w[j + 1];
        problem.diffusion[j](t, y, wj, ws.column);
        diffusion_jacobian(problem, static_cast<int>(j), t, y, wj, ws.jacobian, ws);
        for (std::size_t row = 0; row < d; ++row) {
            double dot = 0.0;
            for (std::size_t col = 0; col < d; ++col)
                dot += ws.jacobian[row * d + col] * ws.column[col];
            out[row] -= 0.5 * dot;
        }
    }
}

std::vector<double> corrected_drift(const ProblemDefinition& problem, double t,
                                    std::span<const double> y, std::span<const double> w) {
    std::vector<double> out(static_cast<std::size_t>(problem.dimension));
    DriftWorkspace ws;
    corrected_drift(problem, t, y, w, out, ws);
    return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double triangular_bump(double y, double K) { return std::max(0.0, K - std::abs(y)); }

namespace {
double normal_pdf(double x) {
    static const double inv_root_2pi = 1.0 / std::sqrt(8.0 * std::atan(1.0));
    return inv_root_2pi * std::exp(-0.5 * x * x);
}
} // namespace

double lb_profile(double t, double y, double K) {
    const double variance = 1.0 - t;
    if (variance <= 0.0) return triangular_bump(y, K);
    const double s = std::sqrt(variance);
    const double gauss_part =
        s * (normal_pdf((K + y) / s) + normal_pdf((K - y) / s) - 2.0 * normal_pdf(y / s));
    const double cdf_part =
        (K + y) * (normal_cdf(-y / s) - normal_cdf(-(K + y) / s)) +
        (K - y) * (normal_cdf((K - y) / s) - normal_cdf(-y / s));
    return gauss_part + cdf_part;
}

double lb_profile_dy(double t, double y, double K) {
    const double variance = 1.0 - t;
    const double s = std::sqrt(variance);
    return 2.0 * normal_cdf(-y / s) - normal_cdf(-(K + y) / s) - normal_cdf((K - y) / s);
}

namespace {

// Shared dynamics of both toy models: drift E[sin(X)] entrywise encoded as
// phi_0(y) = (1.sin(y))/d with V_0(t, y, w) = w 1, unit diffusion columns.
void fill_toy_dynamics(ProblemDefinition& problem, int dimension) {
    const std::size_t d = static_cast<std::size_t>(dimension);
    problem.dimension = dimension;
    problem.horizon = 1.0;
    problem.initial_state.assign(d, 0.0);
    problem.diffusion_state_dependent = false;

    problem.drift = [](double, std::span<const double>, double w, std::span<double> out) {
        for (double& o : out) o = w;
    };
    for (std::size_t k = 0; k < d; ++k) {
        problem.diffusion.push_back(
            [k](double, std::span<const double>, double, std::span<double> out) {
                for (double& o : out) o = 0.0;
                out[k] = 1.0;
            });
    }

    const double inv_d = 1.0 / static_cast<double>(dimension);
    ScalarField phi0;
    phi0.value = [inv_d](std::span<const double> y) {
        double acc = 0.0;
        for (double yi : y) acc += std::sin(yi);
        return inv_d * acc;
    };
    phi0.gradient = [inv_d](std::span<const double> y, std::span<double> out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = inv_d * std::cos(y[i]);
    };
    phi0.hessian = [inv_d](std::span<const double> y, std::span<double> out) {
        const std::size_t n = y.size();
        for (double& o : out) o = 0.0;
        for (std::size_t i = 0; i < n; ++i) out[i * n + i] = -inv_d * std::sin(y[i]);
    };
    problem.mckean.push_back(std::move(phi0));
    for (std::size_t k = 0; k < d; ++k) {
        ScalarField zero;
        zero.value = [](std::span<const double>) { return 0.0; };
        zero.gradient = [](std::span<const double>, std::span<double> out) {
            for (double& o : out) o = 0.0;
        };
        zero.hessian = [](std::span<const double>, std::span<double> out) {
            for (double& o : out) o = 0.0;
        };
        problem.mckean.push_back(std::move(zero));
    }

    problem.driver = [](double, std::span<const double> y, double, std::span<const double>,
                        double w) {
        double cos_sum = 0.0;
        for (double yi : y) cos_sum += std::cos(yi);
        return 0.5 * cos_sum + w;
    };
    problem.driver_functional = [](std::span<const double> y, double u) {
        double sin_sum = 0.0;
        for (double yi : y) sin_sum += std::sin(yi);
        return sin_sum * std::exp(-u * u);
    };
}

} // namespace

ToyProblem make_toy_sb(int dimension) {
    if (dimension < 1) throw ConfigError("toy model: dimension must be positive");
    ToyProblem toy;
    fill_toy_dynamics(toy.problem, dimension);
    toy.problem.terminal = [](std::span<const double> y) {
        double acc = 0.0;
        for (double yi : y) acc += std::cos(yi);
        return acc;
    };
    toy.problem.validate();

    toy.exact.forward_test_function = toy.problem.terminal;
    toy.exact.forward_observable = [dimension](double t) {
        return static_cast<double>(dimension) * std::exp(-0.5 * t);
    };
    toy.exact.forward_mode = ForwardErrorMode::per_level_max;
    toy.exact.u = [](double, std::span<const double> y) {
        double acc = 0.0;
        for (double yi : y) acc += std::cos(yi);
        return acc;
    };
    toy.exact.v = [](double, std::span<const double> y, std::span<double> out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = -std::sin(y[i]);
    };
    toy.exact.v_defined_before = std::numeric_limits<double>::infinity();
    return toy;
}

ToyProblem make_toy_lb(int dimension, double K) {
    if (dimension < 1) throw ConfigError("toy model: dimension must be positive");
    if (!(K > 0.0)) throw ConfigError("toy model: K must be positive");
    ToyProblem toy;
    fill_toy_dynamics(toy.problem, dimension);

    const double inv_root_d = 1.0 / std::sqrt(static_cast<double>(dimension));
    toy.problem.terminal = [inv_root_d, K](std::span<const double> y) {
        double projected = 0.0;
        for (double yi : y) projected += yi;
        return triangular_bump(inv_root_d * projected, K);
    };
    toy.problem.validate();

    toy.exact.forward_test_function = toy.problem.terminal;
    // (1.X_t)/sqrt(d) is standard normal scaled by sqrt(t), so the exact
    // observable is E[tri_K(sqrt(t) G)] = U(1 - t, 0).
    toy.exact.forward_observable = [K](double t) {
        if (t <= 0.0) return K;
        return lb_profile(1.0 - t, 0.0, K);
    };
    toy.exact.forward_mode = ForwardErrorMode::terminal_only;

    // u(t,x) = U(t, (1.x)/sqrt(d)) + (1.cos(x)) (1 - exp((t-1)/2)). The second
    // term integrates the cos part of the driver along the Brownian flow.
    toy.exact.u = [inv_root_d, K](double t, std::span<const double> y) {
        double projected = 0.0;
        double cos_sum = 0.0;
        for (double yi : y) {
            projected += yi;
            cos_sum += std::cos(yi);
        }
        return lb_profile(t, inv_root_d * projected, K) +
               cos_sum * (1.0 - std::exp(0.5 * (t - 1.0)));
    };
    toy.exact.v = [inv_root_d, K](double t, std::span<const double> y, std::span<double> out) {
        double projected = 0.0;
        for (double yi : y) projected += yi;
        const double slope = lb_profile_dy(t, inv_root_d * projected, K);
        const double decay = 1.0 - std::exp(0.5 * (t - 1.0));
        for (std::size_t i = 0; i < y.size(); ++i)
            out[i] = inv_root_d * slope - std::sin(y[i]) * decay;
    };
    toy.exact.v_defined_before = 1.0;
    return toy;
}

} // namespace mkvcub
