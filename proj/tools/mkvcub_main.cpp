// Batch front-end: solve one instance, run convergence studies, or verify
// cubature tables. Exit codes: 0 success, 2 configuration error, 3 numerical
// failure, 4 node-budget breach; cubature-check exits 1 when an identity
// fails.

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mkvcub/cubature.hpp"
#include "mkvcub/errors.hpp"
#include "mkvcub/study.hpp"

namespace {

using mkvcub::RunConfig;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mkvcub::ConfigError("cannot open file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& err) {
        throw mkvcub::ConfigError("cannot parse " + path + ": " + err.what());
    }
}

struct CommonOptions {
    CLI::Option* problem = nullptr;
    CLI::Option* dim = nullptr;
    CLI::Option* K = nullptr;
    CLI::Option* scheme = nullptr;
    CLI::Option* m = nullptr;
    CLI::Option* q = nullptr;
    CLI::Option* gamma = nullptr;
    CLI::Option* N = nullptr;
    CLI::Option* substeps = nullptr;
    CLI::Option* recombine = nullptr;
    CLI::Option* out = nullptr;
    CLI::Option* jobs = nullptr;
    CLI::Option* config = nullptr;
    std::string scheme_name;
    std::string config_path;
};

CommonOptions add_run_options(CLI::App* cmd, RunConfig& config) {
    CommonOptions opts;
    opts.problem = cmd->add_option("--problem", config.problem, "built-in problem (toy-sb, toy-lb)");
    opts.dim = cmd->add_option("--dim", config.dimension, "state dimension");
    opts.K = cmd->add_option("--K", config.K, "half-width of the toy-lb terminal bump");
    opts.scheme_name = to_string(config.scheme);
    opts.scheme = cmd->add_option("--scheme", opts.scheme_name,
                                  "forward-only, first-order or second-order");
    opts.m = cmd->add_option("--m", config.m, "cubature degree");
    opts.q = cmd->add_option("--q", config.q, "McKean expansion order");
    opts.gamma = cmd->add_option("--gamma", config.gamma, "grid refinement exponent");
    opts.N = cmd->add_option("--N", config.N_list, "step counts (comma separated)")
                 ->delimiter(',');
    opts.substeps = cmd->add_option("--substeps", config.substeps, "RK4 steps per path segment");
    opts.recombine = cmd->add_flag("--recombine", config.recombine, "merge equal tree nodes");
    opts.out = cmd->add_option("--out", config.out_prefix, "output path prefix");
    opts.jobs = cmd->add_option("--jobs", config.jobs, "worker threads (0 = all cores)");
    opts.config = cmd->add_option("--config", opts.config_path, "JSON config file");
    return opts;
}

// Config-file values fill every field the command line left untouched;
// explicit flags always win.
void apply_config_file(RunConfig& config, const CommonOptions& opts) {
    if (opts.config->count() == 0) return;
    const nlohmann::json file = read_json_file(opts.config_path);
    try {
        if (opts.problem->count() == 0 && file.contains("problem"))
            config.problem = file["problem"].get<std::string>();
        if (opts.dim->count() == 0 && file.contains("dimension"))
            config.dimension = file["dimension"].get<int>();
        if (opts.K->count() == 0 && file.contains("K")) config.K = file["K"].get<double>();
        if (file.contains("horizon")) config.horizon = file["horizon"].get<double>();
        if (opts.scheme->count() == 0 && file.contains("scheme"))
            config.scheme = mkvcub::scheme_from_string(file["scheme"].get<std::string>());
        if (opts.m->count() == 0 && file.contains("m")) config.m = file["m"].get<int>();
        if (opts.q->count() == 0 && file.contains("q")) config.q = file["q"].get<int>();
        if (opts.gamma->count() == 0 && file.contains("gamma"))
            config.gamma = file["gamma"].get<double>();
        if (opts.N->count() == 0 && file.contains("N"))
            config.N_list = file["N"].get<std::vector<int>>();
        if (opts.substeps->count() == 0 && file.contains("substeps"))
            config.substeps = file["substeps"].get<int>();
        if (opts.recombine->count() == 0 && file.contains("recombine"))
            config.recombine = file["recombine"].get<bool>();
        if (opts.out->count() == 0 && file.contains("out"))
            config.out_prefix = file["out"].get<std::string>();
        if (opts.jobs->count() == 0 && file.contains("jobs")) config.jobs = file["jobs"].get<int>();
        if (file.contains("node_budget"))
            config.node_budget = file["node_budget"].get<std::size_t>();
        if (file.contains("merge_tolerance"))
            config.merge_tolerance = file["merge_tolerance"].get<double>();
        if (file.contains("tail")) config.slope_tail = file["tail"].get<int>();
    } catch (const nlohmann::json::exception& err) {
        throw mkvcub::ConfigError(std::string("bad config file value: ") + err.what());
    }
}

void finalize_config(RunConfig& config, CommonOptions& opts) {
    apply_config_file(config, opts);
    if (opts.scheme->count() > 0) config.scheme = mkvcub::scheme_from_string(opts.scheme_name);
}

std::size_t env_node_budget() {
    if (const char* env = std::getenv("MKVCUB_NODE_BUDGET")) {
        char* end = nullptr;
        const unsigned long long value = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0' || value == 0)
            throw mkvcub::ConfigError("MKVCUB_NODE_BUDGET must be a positive integer");
        return static_cast<std::size_t>(value);
    }
    return std::size_t{1} << 22;
}

int cmd_solve(const RunConfig& config) {
    const mkvcub::SolveResult result = mkvcub::run_solve(config);
    std::printf("solve: %s d=%d scheme=%s N=%d nodes=%zu", config.problem.c_str(),
                config.dimension, to_string(config.scheme).c_str(), config.N_list.front(),
                result.nodes);
    if (config.scheme != mkvcub::Scheme::forward_only)
        std::printf(" u(0,x0)=%.12g", result.root_u);
    std::printf("\n nodes -> %s_nodes.csv\n", config.out_prefix.c_str());
    if (config.scheme != mkvcub::Scheme::forward_only)
        std::printf(" field -> %s_field.csv\n", config.out_prefix.c_str());
    return 0;
}

int cmd_converge(const RunConfig& config) {
    const mkvcub::ConvergenceReport report = mkvcub::run_convergence_study(config);
    for (const auto& row : report.rows)
        std::printf("N=%6d forward=%.6e E_u=%.6e E_v=%.6e E_v*sqrt=%.6e nodes=%zu (%.2fs)\n",
                    row.N, row.forward_err, row.e_u, row.e_v, row.e_v_weighted, row.nodes,
                    row.seconds);
    std::printf("slopes: forward=%.4g E_u=%.4g E_v=%.4g E_v_weighted=%.4g (tail %d)\n",
                report.slope_forward, report.slope_e_u, report.slope_e_v,
                report.slope_e_v_weighted, config.slope_tail);

    {
        std::ofstream out(config.out_prefix + "_report.csv", std::ios::binary);
        if (!out) throw mkvcub::ConfigError("cannot open " + config.out_prefix + "_report.csv");
        write_report_csv(report, out);
    }
    {
        std::ofstream out(config.out_prefix + "_summary.json", std::ios::binary);
        if (!out) throw mkvcub::ConfigError("cannot open " + config.out_prefix + "_summary.json");
        out << report_summary_json(config, report).dump(2) << '\n';
    }
    std::printf(" report -> %s_report.csv\n summary -> %s_summary.json\n",
                config.out_prefix.c_str(), config.out_prefix.c_str());
    return 0;
}

int cmd_cubature_check(int dimension, int degree, const std::string& table_path) {
    mkvcub::CubatureFormula formula;
    if (!table_path.empty()) {
        formula = mkvcub::parse_cubature_record(read_json_file(table_path));
    } else {
        formula = mkvcub::make_cubature(dimension, degree);
    }
    const mkvcub::VerificationReport report = mkvcub::verify_formula(formula);
    std::printf("cubature d=%d m=%d: %zu paths, %zu identities, tolerance %g\n",
                formula.dimension, formula.degree, formula.path_count(),
                report.identities.size(), report.tolerance);
    for (const auto& identity : report.identities) {
        std::printf("  %-12s formula=% .17g wiener=% .17g |diff|=%.3e %s\n",
                    identity.word_label().c_str(), identity.cubature_side, identity.wiener_side,
                    identity.error(), identity.pass ? "pass" : "FAIL");
    }
    if (!report.all_pass()) {
        std::printf("FAIL: %zu identit%s violated, first %s\n",
                    static_cast<std::size_t>(std::count_if(
                        report.identities.begin(), report.identities.end(),
                        [](const mkvcub::MomentIdentity& m) { return !m.pass; })),
                    report.all_pass() ? "y" : "ies", report.first_failure()->word_label().c_str());
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic cubature-tree solver for decoupled McKean-Vlasov FBSDE"};
    app.require_subcommand(1);

    RunConfig solve_config, converge_config;
    CLI::App* solve = app.add_subcommand("solve", "build one tree, run a scheme, export CSV");
    CommonOptions solve_opts = add_run_options(solve, solve_config);
    CLI::App* converge = app.add_subcommand("converge", "error functionals over an N sweep");
    CommonOptions converge_opts = add_run_options(converge, converge_config);

    CLI::App* check = app.add_subcommand("cubature-check", "verify cubature moment identities");
    int check_dim = 1;
    int check_degree = 3;
    std::string check_table;
    check->add_option("--dim", check_dim, "dimension of the built-in formula");
    check->add_option("--m", check_degree, "degree of the built-in formula");
    check->add_option("--table", check_table, "JSON formula table to verify instead");

    try {
        const std::size_t default_budget = env_node_budget();
        solve_config.node_budget = default_budget;
        converge_config.node_budget = default_budget;

        app.parse(argc, argv);

        if (solve->parsed()) {
            finalize_config(solve_config, solve_opts);
            return cmd_solve(solve_config);
        }
        if (converge->parsed()) {
            finalize_config(converge_config, converge_opts);
            return cmd_converge(converge_config);
        }
        if (check->parsed()) return cmd_cubature_check(check_dim, check_degree, check_table);
        return 2;
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    } catch (const mkvcub::BudgetError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 4;
    } catch (const mkvcub::NumericalError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    } catch (const mkvcub::ConfigError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    }
}
