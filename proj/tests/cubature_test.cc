#include "mkvcub/cubature.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "mkvcub/errors.hpp"

namespace mkvcub {
namespace {

// Oracle: k-th moment of the standard normal, (k-1)!! for even k, 0 for odd.
double gaussian_moment(int k) {
    if (k % 2 == 1) return 0.0;
    double value = 1.0;
    for (int i = k - 1; i > 1; i -= 2) value *= i;
    return value;
}

// Oracle: endpoint moments of a formula, sum_j lambda_j (omega_j^axis(1))^k.
double endpoint_moment(const CubatureFormula& formula, int axis, int k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < formula.path_count(); ++j)
        acc += formula.weights[j] * std::pow(formula.paths[j].endpoint()[axis], k);
    return acc;
}

TEST(MakeCubature, DimensionOneDegreeThree) {
    const CubatureFormula formula = make_cubature(1, 3);
    ASSERT_EQ(formula.path_count(), 2u);
    EXPECT_DOUBLE_EQ(formula.weights[0], 0.5);
    EXPECT_DOUBLE_EQ(formula.weights[1], 0.5);
    // paths {+t, -t}
    EXPECT_DOUBLE_EQ(formula.paths[0].endpoint()[0], 1.0);
    EXPECT_DOUBLE_EQ(formula.paths[1].endpoint()[0], -1.0);
    EXPECT_TRUE(verify_formula(formula).all_pass());
}

TEST(MakeCubature, DimensionTwoDegreeThree) {
    const CubatureFormula formula = make_cubature(2, 3);
    ASSERT_EQ(formula.path_count(), 4u);
    const double root2 = std::sqrt(2.0);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_DOUBLE_EQ(formula.weights[j], 0.25);
        const auto end = formula.paths[j].endpoint();
        EXPECT_NEAR(std::abs(end[0]) + std::abs(end[1]), root2, 1e-15);
    }
    // Covariance identity by direct summation.
    for (int i = 0; i < 2; ++i) {
        for (int l = 0; l < 2; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < 4; ++j)
                acc += formula.weights[j] * formula.paths[j].endpoint()[i] *
                       formula.paths[j].endpoint()[l];
            EXPECT_NEAR(acc, i == l ? 1.0 : 0.0, 1e-12);
        }
    }
    EXPECT_TRUE(verify_formula(formula).all_pass());
}

TEST(MakeCubature, DimensionOneDegreeFive) {
    const CubatureFormula formula = make_cubature(1, 5);
    ASSERT_EQ(formula.path_count(), 3u);
    const double root3 = std::sqrt(3.0);
    EXPECT_NEAR(formula.paths[0].endpoint()[0], -root3, 1e-15);
    EXPECT_NEAR(formula.paths[1].endpoint()[0], 0.0, 1e-15);
    EXPECT_NEAR(formula.paths[2].endpoint()[0], root3, 1e-15);
    EXPECT_DOUBLE_EQ(formula.weights[0], 1.0 / 6.0);
    EXPECT_DOUBLE_EQ(formula.weights[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(formula.weights[2], 1.0 / 6.0);

    // Gauss-Hermite oracle: endpoint moments reproduce Gaussian moments up to
    // degree 5; the fourth moment is 3.
    for (int k = 1; k <= 5; ++k)
        EXPECT_NEAR(endpoint_moment(formula, 0, k), gaussian_moment(k), 1e-12) << "moment " << k;
    EXPECT_NEAR(endpoint_moment(formula, 0, 4), 3.0, 1e-12);
    EXPECT_TRUE(verify_formula(formula).all_pass());
}

TEST(MakeCubature, WeightInvariants) {
    for (int d : {1, 2, 3, 4}) {
        const CubatureFormula formula = make_cubature(d, 3);
        double sum = 0.0;
        for (double w : formula.weights) {
            EXPECT_GT(w, 0.0);
            sum += w;
        }
        EXPECT_NEAR(sum, 1.0, 1e-14);
    }
}

TEST(MakeCubature, UnsupportedCombinationNamesTableLoader) {
    try {
        make_cubature(2, 5);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& err) {
        EXPECT_NE(std::string(err.what()).find("load_cubature"), std::string::npos);
    }
    EXPECT_THROW(make_cubature(1, 7), ConfigError);
    EXPECT_THROW(make_cubature(0, 3), ConfigError);
}

TEST(WienerMoments, PairRule) {
    const std::vector<int> w11 = {1, 1};
    const std::vector<int> w12 = {1, 2};
    const std::vector<int> w1122 = {1, 1, 2, 2};
    const std::vector<int> w1221 = {1, 2, 2, 1};
    const std::vector<int> w111 = {1, 1, 1};
    EXPECT_DOUBLE_EQ(wiener_stratonovich_moment(w11), 0.5);
    EXPECT_DOUBLE_EQ(wiener_stratonovich_moment(w12), 0.0);
    EXPECT_DOUBLE_EQ(wiener_stratonovich_moment(w1122), 0.125);
    EXPECT_DOUBLE_EQ(wiener_stratonovich_moment(w1221), 0.0);
    EXPECT_DOUBLE_EQ(wiener_stratonovich_moment(w111), 0.0);
}

TEST(WienerMoments, MatchesGaussianMomentsInDimensionOne) {
    // In d = 1 the iterated Stratonovich integral of the length-l word is
    // B^l / l!, so its expectation must be E[B^l] / l!.
    for (int l = 1; l <= 8; ++l) {
        const std::vector<int> word(static_cast<std::size_t>(l), 1);
        double factorial = 1.0;
        for (int i = 2; i <= l; ++i) factorial *= i;
        EXPECT_NEAR(wiener_stratonovich_moment(word), gaussian_moment(l) / factorial, 1e-15)
            << "word length " << l;
    }
}

TEST(PathIntegrals, LinearPathClosedForm) {
    // For a straight path with slope v, the word integral is prod v_i / l!.
    const std::vector<double> slope = {0.7, -1.3};
    const PiecewisePath path = straight_path(2, slope);
    const std::vector<std::vector<int>> words = {{1}, {2}, {1, 2}, {2, 2, 1}, {1, 1, 2, 2}};
    for (const auto& word : words) {
        double expected = 1.0;
        double factorial = 1.0;
        for (std::size_t i = 0; i < word.size(); ++i) {
            expected *= slope[static_cast<std::size_t>(word[i] - 1)];
            factorial *= static_cast<double>(i + 1);
        }
        EXPECT_NEAR(iterated_path_integral(path, word), expected / factorial, 1e-14);
    }
}

TEST(PathIntegrals, TwoSegmentPathHandComputed) {
    // omega: 0 -> 1 on [0, 1/2], then flat. Level-1 integral is the endpoint;
    // the (1,1) integral is endpoint^2/2 by the chain rule.
    PiecewisePath path;
    path.dimension = 1;
    path.knot_times = {0.0, 0.5, 1.0};
    path.knot_points = {0.0, 1.0, 1.0};
    const std::vector<int> w1 = {1};
    const std::vector<int> w11 = {1, 1};
    EXPECT_NEAR(iterated_path_integral(path, w1), 1.0, 1e-15);
    EXPECT_NEAR(iterated_path_integral(path, w11), 0.5, 1e-15);
}

TEST(VerifyFormula, DegreeThreeFailsAtDegreeFive) {
    const CubatureFormula formula = make_cubature(1, 3);
    const VerificationReport report = verify_formula(formula, 5);
    EXPECT_FALSE(report.all_pass());
    const MomentIdentity* failure = report.first_failure();
    ASSERT_NE(failure, nullptr);
    EXPECT_GE(failure->word.size(), 4u);
    // (1,1,1,1): path side gives 1/4! = 1/24, Wiener side 1/8.
    for (const auto& identity : report.identities) {
        if (identity.word == std::vector<int>{1, 1, 1, 1}) {
            EXPECT_NEAR(identity.cubature_side, 1.0 / 24.0, 1e-15);
            EXPECT_NEAR(identity.wiener_side, 0.125, 1e-15);
            EXPECT_FALSE(identity.pass);
        }
    }
}

TEST(VerifyFormula, ReportCarriesAllWords) {
    const VerificationReport report = verify_formula(make_cubature(2, 3));
    // 2 + 4 + 8 words of length <= 3 over {1,2}
    EXPECT_EQ(report.identities.size(), 14u);
    EXPECT_TRUE(report.all_pass());
    EXPECT_EQ(report.first_failure(), nullptr);
}

TEST(LoadCubature, RoundTrip) {
    const CubatureFormula original = make_cubature(1, 3);
    const CubatureFormula loaded = load_cubature(formula_to_json(original));
    EXPECT_EQ(loaded.dimension, original.dimension);
    EXPECT_EQ(loaded.degree, original.degree);
    EXPECT_EQ(loaded.weights, original.weights);
    ASSERT_EQ(loaded.path_count(), original.path_count());
    for (std::size_t j = 0; j < original.path_count(); ++j) {
        EXPECT_EQ(loaded.paths[j].knot_times, original.paths[j].knot_times);
        EXPECT_EQ(loaded.paths[j].knot_points, original.paths[j].knot_points);
    }
}

TEST(LoadCubature, RejectsBadWeightSum) {
    nlohmann::json record = formula_to_json(make_cubature(1, 3));
    record["weights"] = {0.6, 0.6};
    try {
        load_cubature(record);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& err) {
        EXPECT_NE(std::string(err.what()).find("sum"), std::string::npos);
    }
}

TEST(LoadCubature, RejectsBrokenSecondMoment) {
    // Scale the paths so the second moment is 0.9 instead of 1.
    nlohmann::json record = formula_to_json(make_cubature(1, 3));
    const double scale = std::sqrt(0.9);
    record["paths"] = {{{0.0, 0.0}, {1.0, scale}}, {{0.0, 0.0}, {1.0, -scale}}};
    try {
        load_cubature(record);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& err) {
        EXPECT_NE(std::string(err.what()).find("moment identity"), std::string::npos);
        EXPECT_NE(std::string(err.what()).find("(1,1)"), std::string::npos);
    }
}

TEST(ScaledPaths, IncrementIntegralsClosedForm) {
    const CubatureFormula formula = make_cubature(1, 3);
    const double delta = 0.37;
    const ScaledPath plus{&formula.paths[0], 0.0, delta};
    const PathIncrements inc = path_increment_integrals(plus);
    const double root = std::sqrt(delta);
    EXPECT_NEAR(inc.endpoint[0], root, 1e-15);
    EXPECT_NEAR(inc.time_weighted[0], root * delta / 2.0, 1e-15);

    const ScaledPath minus{&formula.paths[1], 0.0, delta};
    const PathIncrements neg = path_increment_integrals(minus);
    EXPECT_NEAR(neg.endpoint[0], -inc.endpoint[0], 1e-15);
    EXPECT_NEAR(neg.time_weighted[0], -inc.time_weighted[0], 1e-15);
}

TEST(ScaledPaths, ZeroSlopePathHasZeroIncrements) {
    const CubatureFormula formula = make_cubature(1, 5);
    const ScaledPath zero{&formula.paths[1], 0.2, 0.4};
    const PathIncrements inc = path_increment_integrals(zero);
    EXPECT_DOUBLE_EQ(inc.endpoint[0], 0.0);
    EXPECT_DOUBLE_EQ(inc.time_weighted[0], 0.0);
}

TEST(ScaledPaths, ScalingCovariance) {
    // endpoint scales like sqrt(h) * base(1); the time-weighted integral like
    // h^{3/2} * integral of tau d(base), independent of the start time.
    PiecewisePath base;
    base.dimension = 2;
    base.knot_times = {0.0, 0.25, 1.0};
    base.knot_points = {0.0, 0.0, 0.5, -1.0, 2.0, 0.25};
    base.validate();

    std::vector<double> base_tau_integral(2, 0.0);
    for (std::size_t seg = 0; seg < 2; ++seg) {
        const double ta = base.knot_times[seg];
        const double tb = base.knot_times[seg + 1];
        for (int c = 0; c < 2; ++c) {
            const double slope = (base.knot_points[(seg + 1) * 2 + c] - base.knot_points[seg * 2 + c]) /
                                 (tb - ta);
            base_tau_integral[c] += slope * (tb * tb - ta * ta) / 2.0;
        }
    }
    for (double start : {0.0, 0.7}) {
        for (double h : {0.5, 0.125}) {
            const PathIncrements inc = path_increment_integrals({&base, start, h});
            for (int c = 0; c < 2; ++c) {
                EXPECT_NEAR(inc.endpoint[c], std::sqrt(h) * base.endpoint()[c], 1e-15);
                EXPECT_NEAR(inc.time_weighted[c], h * std::sqrt(h) * base_tau_integral[c], 1e-15);
            }
        }
    }
}

TEST(Paths, ValidationRejectsMalformedKnots) {
    PiecewisePath path;
    path.dimension = 1;
    path.knot_times = {0.0, 0.5};  // must end at 1
    path.knot_points = {0.0, 1.0};
    EXPECT_THROW(path.validate(), ConfigError);
    path.knot_times = {0.0, 1.0};
    path.knot_points = {0.5, 1.0};  // must start at the origin
    EXPECT_THROW(path.validate(), ConfigError);
}

} // namespace
} // namespace mkvcub
