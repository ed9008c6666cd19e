#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mkvcub {

/// Continuous piecewise-linear path omega: [0,1] -> R^d given by its knots.
/// Knot times are strictly increasing with omega(0) = 0 and last time 1.
struct PiecewisePath {
    int dimension = 0;
    std::vector<double> knot_times;   // strictly increasing, first 0, last 1
    std::vector<double> knot_points;  // knot_count x dimension, row-major

    std::size_t knot_count() const { return knot_times.size(); }
    std::span<const double> point(std::size_t knot) const {
        return {knot_points.data() + knot * static_cast<std::size_t>(dimension),
                static_cast<std::size_t>(dimension)};
    }
    std::span<const double> endpoint() const { return point(knot_count() - 1); }

    /// Throws ConfigError if the knot structure is malformed.
    void validate() const;
};

/// Single-segment path t -> slope * t.
PiecewisePath straight_path(int dimension, std::span<const double> slope);

/// Weighted family of bounded-variation paths whose iterated Stratonovich
/// integrals match the Wiener-measure expectations up to `degree`.
struct CubatureFormula {
    int dimension = 0;
    int degree = 0;
    std::vector<PiecewisePath> paths;
    std::vector<double> weights;

    std::size_t path_count() const { return paths.size(); }
    /// Structural checks: positive weights summing to 1 (1e-14), matching
    /// dimensions, valid paths. Moment matching is verify_formula's job.
    void validate_shape() const;
};

/// Built-in constructions.
///   degree 3, any d:  2d axis-aligned straight paths +-sqrt(d) e_l, weights 1/(2d)
///   degree 5, d = 1:  slopes {-sqrt(3), 0, sqrt(3)}, weights {1/6, 2/3, 1/6}
/// Other combinations are not built in; load published tables with
/// load_cubature instead.
CubatureFormula make_cubature(int dimension, int degree);

/// Expectation of the iterated Stratonovich integral of `word` (letters in
/// 1..d) over the simplex at t = 1 under the Wiener measure. Nonzero exactly
/// for words that concatenate equal pairs (j1 j1 j2 j2 ...), where it equals
/// 1 / (2^n n!) with n = length / 2.
double wiener_stratonovich_moment(std::span<const int> word);

/// Iterated integral of `word` along a piecewise-linear path over the
/// simplex {0 < t_1 < ... < t_l < 1}, in closed form per linear segment.
double iterated_path_integral(const PiecewisePath& path, std::span<const int> word);

struct MomentIdentity {
    std::vector<int> word;
    double cubature_side = 0.0;
    double wiener_side = 0.0;
    bool pass = false;

    double error() const;
    std::string word_label() const;  // e.g. "(1,2,1)"
};

struct VerificationReport {
    int dimension = 0;
    int degree = 0;
    double tolerance = 0.0;
    std::vector<MomentIdentity> identities;

    bool all_pass() const;
    const MomentIdentity* first_failure() const;  // nullptr when clean
};

/// Check every moment identity for words over {1..d} of length <= degree.
/// degree = 0 means "the formula's own degree".
VerificationReport verify_formula(const CubatureFormula& formula, int degree = 0,
                                  double tolerance = 1e-12);

/// JSON table format:
/// { "dimension": d, "degree": m, "weights": [...],
///   "paths": [ [ [time, c1, ..., cd], ... knots ], ... ] }
/// The loader is bit-exact on round-trip and rejects records that fail either
/// the structural checks or the moment identities (naming the first violated
/// one).
nlohmann::json formula_to_json(const CubatureFormula& formula);
CubatureFormula load_cubature(const nlohmann::json& record);
/// Structural decoding only (shape checks, no moment verification); the
/// building block of load_cubature and of the check command.
CubatureFormula parse_cubature_record(const nlohmann::json& record);

/// View of a cubature path rescaled to the interval [start, start + length]:
/// s -> sqrt(length) * base((s - start) / length).
struct ScaledPath {
    const PiecewisePath* base = nullptr;
    double start = 0.0;
    double length = 0.0;
};

struct PathIncrements {
    std::vector<double> endpoint;       // integral of d(scaled path) = sqrt(h) base(1)
    std::vector<double> time_weighted;  // integral of (s - start) d(scaled path)
};

/// Both integrals in closed form from the base knots.
PathIncrements path_increment_integrals(const ScaledPath& path);

} // namespace mkvcub
