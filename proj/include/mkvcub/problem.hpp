#pragma once

#include <functional>
#include <span>
#include <vector>

namespace mkvcub {

/// Read-only view of a discrete measure (weighted support points in R^d).
struct DiscreteMeasureView {
    int dimension = 0;
    std::span<const double> states;   // size() x dimension, row-major
    std::span<const double> weights;  // size()

    std::size_t size() const { return weights.size(); }
    std::span<const double> state(std::size_t i) const {
        return {states.data() + i * static_cast<std::size_t>(dimension),
                static_cast<std::size_t>(dimension)};
    }
    /// <measure, g>, summed in ascending index order.
    template <class Fn>
    double integrate(Fn&& g) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < size(); ++i) acc += weights[i] * g(state(i));
        return acc;
    }
};

/// Scalar function of a state, with optional derivative oracles. Missing
/// oracles fall back to central finite differences where derivatives are
/// needed.
struct ScalarField {
    std::function<double(std::span<const double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> gradient;  // d values
    std::function<void(std::span<const double>, std::span<double>)> hessian;   // d*d row-major

    bool has_gradient() const { return static_cast<bool>(gradient); }
    bool has_hessian() const { return static_cast<bool>(hessian); }
};

/// Central finite differences with step cbrt(eps) * max(1, |y_i|).
namespace fd {
double step(double y);
double partial(const std::function<double(std::span<const double>)>& g,
               std::span<const double> y, int axis, std::vector<double>& scratch);
void gradient(const std::function<double(std::span<const double>)>& g,
              std::span<const double> y, std::span<double> out, std::vector<double>& scratch);
void hessian(const std::function<double(std::span<const double>)>& g,
             std::span<const double> y, std::span<double> out, std::vector<double>& scratch);
} // namespace fd

/// Coefficient evaluated at (t, y, w) where w is the current value of the
/// coefficient's own McKean functional; writes a d-vector.
using CoefficientFn =
    std::function<void(double, std::span<const double>, double, std::span<double>)>;
/// d x d Jacobian in row-major order (row = output component, col = state axis).
using JacobianFn =
    std::function<void(double, std::span<const double>, double, std::span<double>)>;
/// Coefficient receiving the whole discrete measure (general law dependence).
using MeasureCoefficientFn = std::function<void(double, std::span<const double>,
                                                const DiscreteMeasureView&, std::span<double>)>;

/// A decoupled MKV-FBSDE instance:
///   dX = sum_i V_i(t, X, <mu_t, phi_i>) dB^i     (B^0 = t)
///   dY = -f(t, X, Y, Z, <mu_t, phi_f(., u(t,.))>) dt + Z dB
///   X_0 = x, Y_T = phi(X_T)
/// Coefficient callables must be pure; definitions are immutable once built
/// and safe to share across threads.
struct ProblemDefinition {
    int dimension = 0;
    double horizon = 0.0;
    std::vector<double> initial_state;

    CoefficientFn drift;                    // V_0
    std::vector<CoefficientFn> diffusion;   // V_1 .. V_d
    std::vector<ScalarField> mckean;        // phi_0 .. phi_d

    // f(t, y, y', z, w)
    std::function<double(double, std::span<const double>, double, std::span<const double>, double)>
        driver;
    // phi_f(y, y')
    std::function<double(std::span<const double>, double)> driver_functional;
    // phi(y)
    std::function<double(std::span<const double>)> terminal;

    /// Jacobians d(V_k)/dy, k = 1..d. Optional; required (or finite-difference
    /// approximated) only when the diffusion depends on the state.
    std::vector<JacobianFn> diffusion_jacobians;
    bool diffusion_state_dependent = true;

    /// General-law-dependence mode: when measure_drift is set, the scalar-w
    /// drift/diffusion above are unused, coefficients read the level measure
    /// directly, and the tree construction enforces q = 1.
    MeasureCoefficientFn measure_drift;
    std::vector<MeasureCoefficientFn> measure_diffusion;

    bool measure_mode() const { return static_cast<bool>(measure_drift); }
    void validate() const;
};

/// Scratch buffers for drift correction in hot loops.
struct DriftWorkspace {
    std::vector<double> column;    // V_j(t, y, w_j)
    std::vector<double> jacobian;  // d x d
    std::vector<double> fd_scratch;
};

/// Stratonovich-corrected drift
///   Vbar_0 = V_0 - 1/2 sum_j (DV_j) V_j,
/// all coefficients evaluated at (t, y, w[i]) with one scalar per coefficient.
/// Exact short-circuit to V_0 when the diffusion does not depend on the state.
void corrected_drift(const ProblemDefinition& problem, double t, std::span<const double> y,
                     std::span<const double> w, std::span<double> out, DriftWorkspace& ws);

/// Convenience overload that allocates its own workspace.
std::vector<double> corrected_drift(const ProblemDefinition& problem, double t,
                                    std::span<const double> y, std::span<const double> w);

enum class ForwardErrorMode { per_level_max, terminal_only };

/// Closed-form reference solution of a test problem.
struct ExactSolution {
    /// E[g(X_t)] for the study's test function g.
    std::function<double(double)> forward_observable;
    std::function<double(std::span<const double>)> forward_test_function;
    ForwardErrorMode forward_mode = ForwardErrorMode::per_level_max;

    std::function<double(double, std::span<const double>)> u;
    std::function<void(double, std::span<const double>, std::span<double>)> v;
    /// v is defined for t < v_defined_before (the gradient may blow up at T).
    double v_defined_before = 0.0;
};

struct ToyProblem {
    ProblemDefinition problem;
    ExactSolution exact;
};

/// Smooth-boundary toy model on [0,1]:
///   dX = E[sin(X)] dt + dB,  X_0 = 0
///   -dY = (1.cos(X)/2 + E[(1.sin(X)) exp(-Y^2)]) dt - Z.dB,  Y_T = 1.cos(X_T)
/// Exact: X = B, u(t,x) = 1.cos(x), v(t,x) = -sin(x),
///        E[1.cos(X_t)] = d exp(-t/2).
ToyProblem make_toy_sb(int dimension);

/// Lipschitz-boundary variant: same dynamics and driver, terminal condition
/// phi(x) = tri_K((1.x)/sqrt(d)) with tri_K the triangular bump of half-width
/// K and peak K.
ToyProblem make_toy_lb(int dimension, double K);

/// Standard normal CDF via erfc, full double precision.
double normal_cdf(double x);
/// Triangular bump max(0, K - |y|).
double triangular_bump(double y, double K);
/// U(t, y) = E[tri_K(y + sqrt(1-t) G)], G standard normal; closed form.
double lb_profile(double t, double y, double K);
/// dU/dy in closed form: 2 F(-y/s) - F(-(K+y)/s) - F((K-y)/s), s = sqrt(1-t).
double lb_profile_dy(double t, double y, double K);

} // namespace mkvcub
