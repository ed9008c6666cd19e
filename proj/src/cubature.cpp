#include "mkvcub/cubature.hpp"

#include "mkvcub/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mkvcub {

void PiecewisePath::validate() const {
    if (dimension < 1) throw ConfigError("path: dimension must be positive");
    if (knot_count() < 2) throw ConfigError("path: need at least 2 knots");
    if (knot_points.size() != knot_count() * static_cast<std::size_t>(dimension))
        throw ConfigError("path: knot point array has wrong size");
    if (knot_times.front() != 0.0) throw ConfigError("path: first knot time must be 0");
    if (knot_times.back() != 1.0) throw ConfigError("path: last knot time must be 1");
    for (std::size_t i = 1; i < knot_count(); ++i) {
        if (!(knot_times[i] > knot_times[i - 1]))
            throw ConfigError("path: knot times must be strictly increasing");
    }
    for (int c = 0; c < dimension; ++c) {
        if (knot_points[static_cast<std::size_t>(c)] != 0.0)
            throw ConfigError("path: path must start at the origin");
    }
}

PiecewisePath straight_path(int dimension, std::span<const double> slope) {
    PiecewisePath path;
    path.dimension = dimension;
    path.knot_times = {0.0, 1.0};
    path.knot_points.assign(2 * static_cast<std::size_t>(dimension), 0.0);
    for (int c = 0; c < dimension; ++c)
        path.knot_points[static_cast<std::size_t>(dimension + c)] = slope[static_cast<std::size_t>(c)];
    return path;
}

void CubatureFormula::validate_shape() const {
    if (dimension < 1) throw ConfigError("cubature: dimension must be positive");
    if (degree < 1) throw ConfigError("cubature: degree must be positive");
    if (paths.empty()) throw ConfigError("cubature: no paths");
    if (weights.size() != paths.size())
        throw ConfigError("cubature: weight count does not match path count");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw ConfigError("cubature: weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-14)
        throw ConfigError("cubature: weights sum to " + std::to_string(sum) + ", expected 1");
    for (const auto& path : paths) {
        path.validate();
        if (path.dimension != dimension)
            throw ConfigError("cubature: path dimension mismatch");
    }
}

CubatureFormula make_cubature(int dimension, int degree) {
    if (dimension < 1) throw ConfigError("make_cubature: dimension must be positive");
    CubatureFormula formula;
    formula.dimension = dimension;
    formula.degree = degree;
    if (degree == 3) {
        // 2d straight paths +-sqrt(d) e_l with weights 1/(2d).
        const double scale = std::sqrt(static_cast<double>(dimension));
        std::vector<double> slope(static_cast<std::size_t>(dimension), 0.0);
        for (int axis = 0; axis < dimension; ++axis) {
            for (double sign : {1.0, -1.0}) {
                std::fill(slope.begin(), slope.end(), 0.0);
                slope[static_cast<std::size_t>(axis)] = sign * scale;
                formula.paths.push_back(straight_path(dimension, slope));
                formula.weights.push_back(1.0 / (2.0 * dimension));
            }
        }
    } else if (degree == 5 && dimension == 1) {
        // Gauss points of the standard normal: endpoints -sqrt(3), 0, sqrt(3).
        const double root3 = std::sqrt(3.0);
        for (double slope : {-root3, 0.0, root3}) {
            formula.paths.push_back(straight_path(1, std::span<const double>(&slope, 1)));
        }
        formula.weights = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    } else {
        throw ConfigError("make_cubature: unsupported formula (dimension " +
                          std::to_string(dimension) + ", degree " + std::to_string(degree) +
                          "); published tables can be supplied through load_cubature");
    }
    formula.validate_shape();
    return formula;
}

double wiener_stratonovich_moment(std::span<const int> word) {
    const std::size_t len = word.size();
    if (len == 0) return 1.0;
    if (len % 2 != 0) return 0.0;
    const std::size_t pairs = len / 2;
    for (std::size_t p = 0; p < pairs; ++p) {
        if (word[2 * p] != word[2 * p + 1]) return 0.0;
    }
    double value = 1.0;
    for (std::size_t p = 1; p <= pairs; ++p) value /= 2.0 * static_cast<double>(p);
    return value;
}

namespace {

// Polynomial in the local segment coordinate (tau - tau_a), low degree first.
using Poly = std::vector<double>;

double poly_eval(const Poly& p, double x) {
    double acc = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
    return acc;
}

// Antiderivative scaled by `slope`, anchored so the result vanishes at the
// segment start.
Poly poly_integrate(const Poly& p, double slope) {
    Poly out(p.size() + 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) out[i + 1] = slope * p[i] / static_cast<double>(i + 1);
    return out;
}

} // namespace

double iterated_path_integral(const PiecewisePath& path, std::span<const int> word) {
    for (int letter : word) {
        if (letter < 1 || letter > path.dimension)
            throw ConfigError("iterated_path_integral: word letter out of range");
    }
    const std::size_t segments = path.knot_count() - 1;
    // One polynomial per segment for the current prefix integral; the empty
    // prefix is the constant 1.
    std::vector<Poly> current(segments, Poly{1.0});
    for (int letter : word) {
        std::vector<Poly> next(segments);
        double carry = 0.0;  // value accumulated across earlier segments
        for (std::size_t seg = 0; seg < segments; ++seg) {
            const double ta = path.knot_times[seg];
            const double tb = path.knot_times[seg + 1];
            const double pa = path.knot_points[seg * static_cast<std::size_t>(path.dimension) +
                                               static_cast<std::size_t>(letter - 1)];
            const double pb = path.knot_points[(seg + 1) * static_cast<std::size_t>(path.dimension) +
                                               static_cast<std::size_t>(letter - 1)];
            const double slope = (pb - pa) / (tb - ta);
            Poly integrated = poly_integrate(current[seg], slope);
            integrated[0] = carry;
            carry = poly_eval(integrated, tb - ta);
            next[seg] = std::move(integrated);
        }
        current = std::move(next);
    }
    const std::size_t last = segments - 1;
    return poly_eval(current[last], path.knot_times[segments] - path.knot_times[last]);
}

double MomentIdentity::error() const { return std::abs(cubature_side - wiener_side); }

std::string MomentIdentity::word_label() const {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (i) out << ',';
        out << word[i];
    }
    out << ')';
    return out.str();
}

bool VerificationReport::all_pass() const {
    return std::all_of(identities.begin(), identities.end(),
                       [](const MomentIdentity& m) { return m.pass; });
}

const MomentIdentity* VerificationReport::first_failure() const {
    for (const auto& identity : identities)
        if (!identity.pass) return &identity;
    return nullptr;
}

VerificationReport verify_formula(const CubatureFormula& formula, int degree, double tolerance) {
    formula.validate_shape();
    if (degree <= 0) degree = formula.degree;

    VerificationReport report;
    report.dimension = formula.dimension;
    report.degree = degree;
    report.tolerance = tolerance;

    // Enumerate words over {1..d} of length 1..degree in lexicographic order.
    std::vector<int> word;
    for (int length = 1; length <= degree; ++length) {
        word.assign(static_cast<std::size_t>(length), 1);
        while (true) {
            MomentIdentity identity;
            identity.word = word;
            double cubature_side = 0.0;
            for (std::size_t j = 0; j < formula.path_count(); ++j)
                cubature_side += formula.weights[j] * iterated_path_integral(formula.paths[j], word);
            identity.cubature_side = cubature_side;
            identity.wiener_side = wiener_stratonovich_moment(word);
            identity.pass = identity.error() <= tolerance;
            report.identities.push_back(std::move(identity));

            // next word
            int pos = length - 1;
            while (pos >= 0 && word[static_cast<std::size_t>(pos)] == formula.dimension) {
                word[static_cast<std::size_t>(pos)] = 1;
                --pos;
            }
            if (pos < 0) break;
            ++word[static_cast<std::size_t>(pos)];
        }
    }
    return report;
}

nlohmann::json formula_to_json(const CubatureFormula& formula) {
    nlohmann::json record;
    record["dimension"] = formula.dimension;
    record["degree"] = formula.degree;
    record["weights"] = formula.weights;
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& path : formula.paths) {
        nlohmann::json knots = nlohmann::json::array();
        for (std::size_t knot = 0; knot < path.knot_count(); ++knot) {
            nlohmann::json row = nlohmann::json::array();
            row.push_back(path.knot_times[knot]);
            for (int c = 0; c < path.dimension; ++c)
                row.push_back(path.knot_points[knot * static_cast<std::size_t>(path.dimension) +
                                               static_cast<std::size_t>(c)]);
            knots.push_back(std::move(row));
        }
        paths.push_back(std::move(knots));
    }
    record["paths"] = std::move(paths);
    return record;
}

CubatureFormula parse_cubature_record(const nlohmann::json& record) {
    CubatureFormula formula;
    try {
        formula.dimension = record.at("dimension").get<int>();
        formula.degree = record.at("degree").get<int>();
        formula.weights = record.at("weights").get<std::vector<double>>();
        for (const auto& knots : record.at("paths")) {
            PiecewisePath path;
            path.dimension = formula.dimension;
            for (const auto& row : knots) {
                if (!row.is_array() || row.size() != static_cast<std::size_t>(formula.dimension) + 1)
                    throw ConfigError("load_cubature: knot rows must be [time, c1..cd]");
                path.knot_times.push_back(row.at(0).get<double>());
                for (int c = 0; c < formula.dimension; ++c)
                    path.knot_points.push_back(row.at(static_cast<std::size_t>(c) + 1).get<double>());
            }
            formula.paths.push_back(std::move(path));
        }
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError(std::string("load_cubature: malformed record: ") + err.what());
    }
    formula.validate_shape();
    return formula;
}

CubatureFormula load_cubature(const nlohmann::json& record) {
    CubatureFormula formula = parse_cubature_record(record);
    const VerificationReport report = verify_formula(formula);
    if (const MomentIdentity* failure = report.first_failure()) {
        char buffer[160];
        std::snprintf(buffer, sizeof(buffer),
                      "load_cubature: moment identity %s violated (formula %.17g, Wiener %.17g)",
                      failure->word_label().c_str(), failure->cubature_side, failure->wiener_side);
        throw ConfigError(buffer);
    }
    return formula;
}

PathIncrements path_increment_integrals(const ScaledPath& path) {
    const PiecewisePath& base = *path.base;
    const int d = base.dimension;
    const double root_h = std::sqrt(path.length);

    PathIncrements result;
    result.endpoint.assign(static_cast<std::size_t>(d), 0.0);
    result.time_weighted.assign(static_cast<std::size_t>(d), 0.0);
    for (int c = 0; c < d; ++c)
        result.endpoint[static_cast<std::size_t>(c)] = root_h * base.endpoint()[static_cast<std::size_t>(c)];

    // integral of (s - start) d(scaled path) = h^{3/2} * integral of tau d(base),
    // and per linear segment the latter is slope * (tb^2 - ta^2) / 2.
    const double h32 = path.length * root_h;
    for (std::size_t seg = 0; seg + 1 < base.knot_count(); ++seg) {
        const double ta = base.knot_times[seg];
        const double tb = base.knot_times[seg + 1];
        for (int c = 0; c < d; ++c) {
            const double pa = base.knot_points[seg * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            const double pb = base.knot_points[(seg + 1) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            const double slope = (pb - pa) / (tb - ta);
            result.time_weighted[static_cast<std::size_t>(c)] += h32 * slope * 0.5 * (tb * tb - ta * ta);
        }
    }
    return result;
}

} // namespace mkvcub
