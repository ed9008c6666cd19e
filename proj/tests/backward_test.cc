#include "mkvcub/backward.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mkvcub/errors.hpp"

namespace mkvcub {
namespace {

ProblemDefinition brownian_with_driver(
    std::function<double(double, std::span<const double>, double, std::span<const double>, double)>
        driver,
    std::function<double(std::span<const double>)> terminal) {
    ProblemDefinition problem;
    problem.dimension = 1;
    problem.horizon = 1.0;
    problem.initial_state = {0.0};
    problem.drift = [](double, std::span<const double>, double, std::span<double> out) {
        out[0] = 0.0;
    };
    problem.diffusion.push_back(
        [](double, std::span<const double>, double, std::span<double> out) { out[0] = 1.0; });
    problem.diffusion_state_dependent = false;
    for (int i = 0; i < 2; ++i) {
        ScalarField zero;
        zero.value = [](std::span<const double>) { return 0.0; };
        problem.mckean.push_back(std::move(zero));
    }
    problem.driver = std::move(driver);
    problem.driver_functional = [](std::span<const double>, double) { return 0.0; };
    problem.terminal = std::move(terminal);
    return problem;
}

constexpr auto zero_driver = [](double, std::span<const double>, double, std::span<const double>,
                                double) { return 0.0; };

TEST(DriverMcKean, NormalizedWeightsGiveOne) {
    const ToyProblem toy = make_toy_sb(1);
    ProblemDefinition constant = toy.problem;
    constant.driver_functional = [](std::span<const double>, double) { return 1.0; };
    const CubatureTree tree =
        build_tree(constant, make_cubature(1, 3), make_grid(1.0, 4, 1.0), 1);
    std::vector<double> u(tree.levels[4].size(), 0.0);
    EXPECT_NEAR(driver_mckean(constant, level_measure(tree, 4), u), 1.0, 1e-12);
}

TEST(DriverMcKean, ToySbTerminalLevelMatchesEnumeration) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 3, 1.0), 1);
    const Level& leaves = tree.levels[3];
    std::vector<double> u(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) u[i] = std::cos(leaves.states[i]);
    double expected = 0.0;
    for (std::size_t i = 0; i < leaves.size(); ++i)
        expected += leaves.weights[i] * std::sin(leaves.states[i]) * std::exp(-u[i] * u[i]);
    EXPECT_NEAR(driver_mckean(toy.problem, level_measure(tree, 3), u), expected, 1e-15);
}

TEST(DriverMcKean, OddFunctionalOnSymmetricMeasureVanishes) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 5, 1.0), 1);
    const Level& leaves = tree.levels[5];
    std::vector<double> u(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) u[i] = std::cos(leaves.states[i]);  // even
    EXPECT_NEAR(driver_mckean(toy.problem, level_measure(tree, 5), u), 0.0, 1e-12);
}

TEST(DriverMcKean, MisalignedValuesRejected) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 2, 1.0), 1);
    std::vector<double> u(3, 0.0);  // level 2 has 4 nodes
    EXPECT_THROW(driver_mckean(toy.problem, level_measure(tree, 2), u), ConfigError);
}

TEST(FirstOrder, ConstantTerminalNoDriver) {
    const ProblemDefinition problem =
        brownian_with_driver(zero_driver, [](std::span<const double>) { return 2.5; });
    const CubatureTree tree = build_tree(problem, make_cubature(1, 3), make_grid(1.0, 4, 1.0), 1);
    const BackwardField field = solve_first_order(tree, problem);
    for (int k = 0; k <= 4; ++k) {
        for (double value : field.u[static_cast<std::size_t>(k)]) EXPECT_DOUBLE_EQ(value, 2.5);
        if (k < 4)
            for (double value : field.v[static_cast<std::size_t>(k)]) EXPECT_NEAR(value, 0.0, 1e-13);
    }
}

TEST(FirstOrder, LinearTerminalReproducesIdentity) {
    // f = 0, phi(x) = x on the pure Brownian tree: u = x, v = 1 everywhere.
    const ProblemDefinition problem =
        brownian_with_driver(zero_driver, [](std::span<const double> y) { return y[0]; });
    const CubatureTree tree = build_tree(problem, make_cubature(1, 3), make_grid(1.0, 5, 1.0), 1);
    const BackwardField field = solve_first_order(tree, problem);
    for (int k = 0; k < 5; ++k) {
        const Level& level = tree.levels[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < level.size(); ++i) {
            EXPECT_NEAR(field.u[static_cast<std::size_t>(k)][i], level.states[i], 1e-13);
            EXPECT_NEAR(field.v[static_cast<std::size_t>(k)][i], 1.0, 1e-12);
        }
    }
}

TEST(FirstOrder, RootEqualsTerminalAverageWithoutDriver) {
    const ToyProblem toy = make_toy_sb(1);
    ProblemDefinition no_driver = toy.problem;
    no_driver.driver = zero_driver;
    no_driver.driver_functional = [](std::span<const double>, double) { return 0.0; };
    const CubatureTree tree =
        build_tree(no_driver, make_cubature(1, 3), make_grid(1.0, 6, 1.0), 1);
    const BackwardField field = solve_first_order(tree, no_driver);
    const double average = level_measure(tree, 6).integrate(no_driver.terminal);
    EXPECT_NEAR(field.u[0][0], average, 1e-12);
}

TEST(FirstOrder, TerminalLevelIsExactlyPhi) {
    const ToyProblem toy = make_toy_sb(2);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(2, 3), make_grid(1.0, 3, 1.0), 1);
    const BackwardField field = solve_first_order(tree, toy.problem);
    const Level& leaves = tree.levels[3];
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const std::span<const double> x{leaves.states.data() + i * 2, 2};
        EXPECT_EQ(field.u[3][i], toy.problem.terminal(x));
    }
    for (double value : field.v[3]) EXPECT_EQ(value, 0.0);
}

TEST(FirstOrder, AgreesWithEnumerationOracle) {
    // Toy SB and LB, d = 1 and 2: the sweep must reproduce the direct nested
    // summation at every node.
    struct Case {
        ToyProblem toy;
        int dimension;
        int N;
        double gamma;
    };
    std::vector<Case> cases;
    cases.push_back({make_toy_sb(1), 1, 3, 1.0});
    cases.push_back({make_toy_lb(1, 0.6), 1, 3, 2.0});
    cases.push_back({make_toy_sb(2), 2, 2, 1.0});
    cases.push_back({make_toy_sb(1), 1, 7, 1.0});
    for (auto& test_case : cases) {
        const CubatureFormula formula = make_cubature(test_case.dimension, 3);
        const TimeGrid grid = make_grid(1.0, test_case.N, test_case.gamma);
        const CubatureTree tree = build_tree(test_case.toy.problem, formula, grid, 1);
        const BackwardField sweep = solve_first_order(tree, test_case.toy.problem);
        const BackwardField oracle = enumerate_oracle(tree, test_case.toy.problem);
        for (int k = 0; k <= test_case.N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            ASSERT_EQ(sweep.u[ks].size(), oracle.u[ks].size());
            for (std::size_t i = 0; i < sweep.u[ks].size(); ++i)
                EXPECT_NEAR(sweep.u[ks][i], oracle.u[ks][i], 1e-12)
                    << "level " << k << " node " << i;
            for (std::size_t i = 0; i < sweep.v[ks].size(); ++i)
                EXPECT_NEAR(sweep.v[ks][i], oracle.v[ks][i], 1e-12);
            EXPECT_NEAR(sweep.f_bar[ks], oracle.f_bar[ks], 1e-12);
        }
    }
}

TEST(FirstOrder, ZeroDriverOracleAgreementIsExact) {
    const ProblemDefinition problem = brownian_with_driver(
        zero_driver, [](std::span<const double> y) { return std::cos(y[0]); });
    const CubatureTree tree = build_tree(problem, make_cubature(1, 3), make_grid(1.0, 4, 1.0), 1);
    const BackwardField sweep = solve_first_order(tree, problem);
    const BackwardField oracle = enumerate_oracle(tree, problem);
    for (int k = 0; k <= 4; ++k)
        for (std::size_t i = 0; i < sweep.u[static_cast<std::size_t>(k)].size(); ++i)
            EXPECT_DOUBLE_EQ(sweep.u[static_cast<std::size_t>(k)][i],
                             oracle.u[static_cast<std::size_t>(k)][i]);
}

TEST(EnumerateOracle, GuardsAgainstLargeOrRecombinedTrees) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureFormula formula = make_cubature(1, 3);
    const CubatureTree big =
        build_tree(toy.problem, formula, make_grid(1.0, 13, 1.0), 1);  // 2^13 > 4096
    EXPECT_THROW(enumerate_oracle(big, toy.problem), ConfigError);

    TreeOptions options;
    options.recombine = true;
    const CubatureTree merged =
        build_tree(toy.problem, formula, make_grid(1.0, 4, 1.0), 1, options);
    EXPECT_THROW(enumerate_oracle(merged, toy.problem), ConfigError);
}

TEST(SecondOrder, ZetaWeightsForStraightPaths) {
    // m = 3 straight paths give zeta = +-1/sqrt(dt).
    const CubatureFormula formula = make_cubature(1, 3);
    const double dt = 0.2;
    for (std::size_t j = 0; j < 2; ++j) {
        const ScaledPath path{&formula.paths[j], 0.4, dt};
        const PathIncrements inc = path_increment_integrals(path);
        const double zeta = 4.0 * inc.endpoint[0] / dt - 6.0 * inc.time_weighted[0] / (dt * dt);
        EXPECT_NEAR(zeta, (j == 0 ? 1.0 : -1.0) / std::sqrt(dt), 1e-13);
    }
}

TEST(SecondOrder, CollapsesToFirstOrderWithoutDriver) {
    const ProblemDefinition problem = brownian_with_driver(
        zero_driver, [](std::span<const double> y) { return std::cos(y[0]); });
    const CubatureTree tree = build_tree(problem, make_cubature(1, 3), make_grid(1.0, 5, 1.0), 1);
    const BackwardField first = solve_first_order(tree, problem);
    const BackwardField second = solve_second_order(tree, problem);
    for (int k = 0; k <= 5; ++k)
        for (std::size_t i = 0; i < first.u[static_cast<std::size_t>(k)].size(); ++i)
            EXPECT_NEAR(first.u[static_cast<std::size_t>(k)][i],
                        second.u[static_cast<std::size_t>(k)][i], 1e-14);
}

TEST(SecondOrder, LevelBelowTerminalCopiesFirstOrder) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 5), make_grid(1.0, 4, 1.0), 2);
    const BackwardField first = solve_first_order(tree, toy.problem);
    const BackwardField second = solve_second_order(tree, toy.problem);
    ASSERT_EQ(first.u[3].size(), second.u[3].size());
    for (std::size_t i = 0; i < first.u[3].size(); ++i) {
        EXPECT_EQ(first.u[3][i], second.u[3][i]);
        EXPECT_EQ(first.v[3][i], second.v[3][i]);
    }
}

TEST(SecondOrder, RejectsSingleStepGrids) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 1, 1.0), 1);
    EXPECT_THROW(solve_second_order(tree, toy.problem), ConfigError);
}

TEST(SecondOrder, DifferenceToFirstOrderShrinksWithN) {
    // max |u2 - u1| over interior levels decreases with N on the smooth toy.
    const ToyProblem toy = make_toy_sb(1);
    const CubatureFormula formula = make_cubature(1, 5);
    double previous = 0.0;
    for (int step = 0; step < 3; ++step) {
        const int N = 4 << step;
        const CubatureTree tree = build_tree(toy.problem, formula, make_grid(1.0, N, 1.0), 2);
        const BackwardField first = solve_first_order(tree, toy.problem);
        const BackwardField second = solve_second_order(tree, toy.problem);
        double diff = 0.0;
        for (int k = 0; k <= N - 2; ++k)
            for (std::size_t i = 0; i < first.u[static_cast<std::size_t>(k)].size(); ++i)
                diff = std::max(diff, std::abs(first.u[static_cast<std::size_t>(k)][i] -
                                               second.u[static_cast<std::size_t>(k)][i]));
        if (step > 0) EXPECT_LT(diff, previous);
        previous = diff;
    }
}

TEST(TerminalGradientOverride, FirstOrderInteriorUnchanged) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 4, 1.0), 1);
    const BackwardField plain = solve_first_order(tree, toy.problem);
    BackwardOptions options;
    options.terminal_v = [](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -std::sin(x[i]);
    };
    const BackwardField seeded = solve_first_order(tree, toy.problem, options);
    for (int k = 0; k < 4; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        for (std::size_t i = 0; i < plain.u[ks].size(); ++i) {
            EXPECT_EQ(plain.u[ks][i], seeded.u[ks][i]);
            EXPECT_EQ(plain.v[ks][i], seeded.v[ks][i]);
        }
    }
    // Level N carries the override itself.
    const Level& leaves = tree.levels[4];
    for (std::size_t i = 0; i < leaves.size(); ++i)
        EXPECT_DOUBLE_EQ(seeded.v[4][i], -std::sin(leaves.states[i]));
}

TEST(TerminalGradientOverride, SecondOrderSkipsBootstrapAndStaysAccurate) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 5), make_grid(1.0, 16, 1.0), 2);
    BackwardOptions options;
    options.terminal_v = [](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -std::sin(x[i]);
    };
    const BackwardField seeded = solve_second_order(tree, toy.problem, options);
    const BackwardField plain = solve_second_order(tree, toy.problem);
    // Both approximate u(0, 0) = 1.
    EXPECT_NEAR(seeded.u[0][0], 1.0, 5e-4);
    EXPECT_NEAR(plain.u[0][0], 1.0, 5e-4);
}

TEST(BackwardSweeps, DeterministicAcrossJobs) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 7, 1.0), 1);
    BackwardOptions serial;
    serial.jobs = 1;
    BackwardOptions threaded;
    threaded.jobs = 3;
    const BackwardField a = solve_first_order(tree, toy.problem, serial);
    const BackwardField b = solve_first_order(tree, toy.problem, threaded);
    for (int k = 0; k <= 7; ++k) {
        EXPECT_EQ(a.u[static_cast<std::size_t>(k)], b.u[static_cast<std::size_t>(k)]);
        EXPECT_EQ(a.v[static_cast<std::size_t>(k)], b.v[static_cast<std::size_t>(k)]);
    }
}

TEST(BackwardSweeps, ObserverSeesEveryLevelWithoutKeepingTheField) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 4, 1.0), 1);
    BackwardOptions options;
    options.keep_field = false;
    std::vector<int> seen;
    std::vector<double> root_u;
    const BackwardField field = solve_first_order(
        tree, toy.problem, options,
        [&](int level, std::span<const double> u, std::span<const double>) {
            seen.push_back(level);
            if (level == 0) root_u.assign(u.begin(), u.end());
        });
    EXPECT_TRUE(field.u.empty());
    ASSERT_EQ(seen.size(), 5u);
    EXPECT_EQ(seen.front(), 4);
    EXPECT_EQ(seen.back(), 0);
    // Root value matches the kept-field run.
    const BackwardField kept = solve_first_order(tree, toy.problem);
    ASSERT_EQ(root_u.size(), 1u);
    EXPECT_EQ(root_u[0], kept.u[0][0]);
}

TEST(BackwardSweeps, RecombinedTreeMatchesPlainTree) {
    // Same toy, same N: node tables differ but the root value must agree to
    // rounding since both sweeps evaluate the same recursion.
    const ToyProblem toy = make_toy_sb(1);
    const CubatureFormula formula = make_cubature(1, 3);
    const TimeGrid grid = make_grid(1.0, 9, 1.0);
    TreeOptions merged_options;
    merged_options.recombine = true;
    const CubatureTree plain = build_tree(toy.problem, formula, grid, 1);
    const CubatureTree merged = build_tree(toy.problem, formula, grid, 1, merged_options);
    const BackwardField plain_field = solve_first_order(plain, toy.problem);
    const BackwardField merged_field = solve_first_order(merged, toy.problem);
    EXPECT_NEAR(plain_field.u[0][0], merged_field.u[0][0], 1e-11);
    EXPECT_NEAR(plain_field.v[0][0], merged_field.v[0][0], 1e-10);
}

TEST(FieldCsv, HasHeaderAndOneRowPerNode) {
    const ToyProblem toy = make_toy_sb(1);
    const CubatureTree tree =
        build_tree(toy.problem, make_cubature(1, 3), make_grid(1.0, 3, 1.0), 1);
    const BackwardField field = solve_first_order(tree, toy.problem);
    std::ostringstream out;
    write_field_csv(tree, field, out);
    const std::string text = out.str();
    EXPECT_EQ(text.find("level,node,u,v0"), 0u);
    std::size_t rows = 0;
    for (char c : text)
        if (c == '\n') ++rows;
    EXPECT_EQ(rows, 1u + tree.total_nodes());
}

} // namespace
} // namespace mkvcub
