// Command-line front end: environment generation, single runs, seeded run
// grids, trace reports and invariant self-checks. All randomness flows from
// explicit seeds; identical invocations produce identical files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "espo/analysis.hpp"
#include "espo/baselines.hpp"
#include "espo/espo.hpp"
#include "espo/generators.hpp"
#include "espo/io.hpp"
#include "espo/oracle.hpp"

namespace {

using namespace espo;

std::string trace_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

GridCell parse_cell(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos)
        throw std::invalid_argument("cell must be \"row,col\": " + text);
    GridCell cell;
    cell.row = std::stoi(text.substr(0, comma));
    cell.col = std::stoi(text.substr(comma + 1));
    return cell;
}

std::string algorithm_of(const nlohmann::json& doc, const std::string& cli_algo) {
    std::string algo = cli_algo;
    if (doc.contains("algorithm")) {
        const std::string from_config = doc["algorithm"].get<std::string>();
        if (!algo.empty() && algo != from_config)
            throw std::invalid_argument("config field \"algorithm\" (" + from_config +
                                        ") disagrees with --algo (" + algo + ")");
        algo = from_config;
    }
    if (algo.empty())
        throw std::invalid_argument("no algorithm given: pass --algo or a config \"algorithm\" field");
    if (algo != "espo" && algo != "pcrpo" && algo != "crpo")
        throw std::invalid_argument("unknown algorithm \"" + algo + "\"");
    return algo;
}

RunResult run_algorithm(const TabularCmdp& cmdp, const nlohmann::json& config_doc,
                        const std::string& algo, std::optional<std::uint64_t> seed_override) {
    if (algo == "espo") {
        EspoConfig config = read_espo_config(config_doc);
        if (seed_override) config.seed = *seed_override;
        return espo_run(cmdp, config);
    }
    const BaselineAlgorithm kind =
        (algo == "crpo") ? BaselineAlgorithm::Crpo : BaselineAlgorithm::Pcrpo;
    BaselineConfig config = read_baseline_config(config_doc, kind);
    if (seed_override) config.seed = *seed_override;
    return kind == BaselineAlgorithm::Crpo ? crpo_run(cmdp, config) : pcrpo_run(cmdp, config);
}

// Trace-level report quantities, derived from CSV rows alone (plus the
// oracle value of the environment). For sampled traces these use the
// recorded estimates; pass a policies sidecar for exact re-evaluation.
struct TraceReport {
    std::string stem;
    std::vector<IterationRecord> trace;
    Eigen::VectorXd gap;
    Eigen::VectorXd violation;
    double weighted_gap = std::numeric_limits<double>::quiet_NaN();
    bool has_weighted = false;
    OscillationReport oscillation;
    bool reached = false;
    int first_hit_iteration = -1;
    long long first_hit_cum = 0;
};

TraceReport analyze_trace(const std::string& path, const std::string& policies_path,
                          const TabularCmdp& cmdp, const ConstrainedOptimum& optimum,
                          double budget, double eps1, double eps2) {
    TraceReport rep;
    rep.stem = trace_stem(path);
    rep.trace = read_trace_csv_file(path);
    const std::size_t n = rep.trace.size();
    rep.gap.resize(n);
    rep.violation.resize(n);

    RunResult shim;
    shim.trace = rep.trace;
    shim.budget = budget;
    shim.num_states = cmdp.num_states;
    shim.num_actions = cmdp.num_actions;
    if (!policies_path.empty()) {
        read_policies_csv_file(policies_path, cmdp.num_states, cmdp.num_actions, shim);
        shim.eval_mode = EvalMode::Sampled;
        for (std::size_t t = 0; t < n; ++t) {
            const ValueBundle bundle = exact_policy_values(cmdp, SoftmaxPolicy(shim.snapshots[t]));
            rep.gap(t) = optimum.optimal_reward_value - bundle.v_reward_rho;
            rep.violation(t) = std::max(0.0, bundle.v_cost_rho - budget);
        }
    } else {
        for (std::size_t t = 0; t < n; ++t) {
            rep.gap(t) = optimum.optimal_reward_value - rep.trace[t].v_bar_r;
            rep.violation(t) = std::max(0.0, rep.trace[t].v_bar_c - budget);
        }
    }

    const auto weights = weighted_output_distribution(rep.trace);
    if (weights) {
        rep.has_weighted = true;
        rep.weighted_gap = weights->dot(rep.gap);
    }
    rep.oscillation = oscillation_report(shim);

    for (std::size_t t = 0; t < n; ++t) {
        if (rep.gap(t) <= eps1 && rep.violation(t) <= eps2) {
            rep.reached = true;
            rep.first_hit_iteration = static_cast<int>(t);
            rep.first_hit_cum = t == 0 ? 0 : rep.trace[t - 1].cumulative_transitions;
            break;
        }
    }
    return rep;
}

int cmd_generate_env(const std::string& type, std::uint64_t seed, int states, int actions,
                     int branching, double quantile, double discount, int width, int height,
                     const std::string& hazards_arg, const std::string& goal_arg, double budget,
                     const std::string& out_path) {
    TabularCmdp cmdp;
    if (type == "random") {
        cmdp = make_random_cmdp(seed, states, actions, branching, quantile, discount);
    } else if (type == "gridworld") {
        std::set<GridCell> hazards;
        std::stringstream ss(hazards_arg);
        std::string token;
        while (std::getline(ss, token, ';'))
            if (!token.empty()) hazards.insert(parse_cell(token));
        cmdp = make_gridworld(width, height, hazards, parse_cell(goal_arg), budget, discount);
    } else {
        throw std::invalid_argument("--type must be \"random\" or \"gridworld\"");
    }
    const auto violations = validate(cmdp);
    if (!violations.empty())
        throw std::runtime_error("generated instance failed validation: " + violations[0].what);
    write_cmdp_file(out_path, cmdp);
    std::cout << "wrote " << out_path << " (" << cmdp.num_states << " states, "
              << cmdp.num_actions << " actions, budget " << format_double(cmdp.budget) << ")\n";
    return 0;
}

int cmd_run(const std::string& algo_flag, const std::string& env_path,
            const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_path, const std::string& policies_path) {
    const TabularCmdp cmdp = read_cmdp_file(env_path);
    const nlohmann::json config_doc = read_json_file(config_path);
    const std::string algo = algorithm_of(config_doc, algo_flag);
    const RunResult result = run_algorithm(cmdp, config_doc, algo, seed);
    write_trace_csv_file(out_path, result.trace);
    if (!policies_path.empty()) write_policies_csv_file(policies_path, result);
    for (const auto& warning : result.warnings) std::cerr << "warning: " << warning << "\n";
    std::cout << "wrote " << out_path << " (" << result.trace.size() << " iterations)\n";
    return 0;
}

int cmd_grid(const std::string& env_path, const std::vector<std::string>& config_paths,
             const std::vector<std::uint64_t>& seeds, const std::string& out_dir, int jobs) {
    const TabularCmdp cmdp = read_cmdp_file(env_path);
    std::filesystem::create_directories(out_dir);

    struct Job {
        std::string config_path;
        std::string algo;
        nlohmann::json doc;
        std::uint64_t seed;
        std::string out_path;
    };
    std::vector<Job> grid;
    for (const auto& config_path : config_paths) {
        nlohmann::json doc = read_json_file(config_path);
        const std::string algo = algorithm_of(doc, "");
        for (const auto seed : seeds) {
            const std::string out_path = out_dir + "/trace_" + trace_stem(config_path) + "_seed" +
                                         std::to_string(seed) + ".csv";
            grid.push_back({config_path, algo, doc, seed, out_path});
        }
    }

    // Independent jobs; each writes only its own file.
    std::atomic<std::size_t> next{0};
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(grid.size())));
    std::vector<std::future<void>> pool;
    for (int w = 0; w < workers; ++w) {
        pool.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1)) {
                const Job& job = grid[i];
                const RunResult result = run_algorithm(cmdp, job.doc, job.algo, job.seed);
                write_trace_csv_file(job.out_path, result.trace);
            }
        }));
    }
    for (auto& f : pool) f.get();

    const std::string manifest_path = out_dir + "/manifest.csv";
    std::ofstream manifest(manifest_path);
    if (!manifest) throw std::runtime_error("cannot open for writing: " + manifest_path);
    manifest << "config,seed,algorithm,trace\n";
    for (const Job& job : grid)
        manifest << job.config_path << ',' << job.seed << ',' << job.algo << ',' << job.out_path
                 << "\n";
    std::cout << "wrote " << grid.size() << " traces and " << manifest_path << "\n";
    return 0;
}

int cmd_report(const std::string& env_path, const std::vector<std::string>& trace_paths,
               const std::vector<std::string>& policies_paths, const std::string& crpo_trace,
               double eps1, double eps2, std::optional<double> budget_flag,
               const std::string& out_dir, bool svg) {
    const TabularCmdp cmdp = read_cmdp_file(env_path);
    const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
    const double budget = budget_flag.value_or(cmdp.budget);
    if (!policies_paths.empty() && policies_paths.size() != trace_paths.size())
        throw std::invalid_argument("--policies must match --traces one to one");
    std::filesystem::create_directories(out_dir);

    std::vector<IterationRecord> crpo;
    if (!crpo_trace.empty()) crpo = read_trace_csv_file(crpo_trace);

    std::vector<TraceReport> reports;
    for (std::size_t i = 0; i < trace_paths.size(); ++i) {
        const std::string policies = policies_paths.empty() ? "" : policies_paths[i];
        reports.push_back(
            analyze_trace(trace_paths[i], policies, cmdp, optimum, budget, eps1, eps2));
    }

    for (const auto& rep : reports) {
        const std::string gap_path = out_dir + "/gap_" + rep.stem + ".csv";
        std::ofstream out(gap_path);
        if (!out) throw std::runtime_error("cannot open for writing: " + gap_path);
        out << "t,gap,violation\n";
        for (Eigen::Index t = 0; t < rep.gap.size(); ++t)
            out << t << ',' << format_double(rep.gap(t)) << ',' << format_double(rep.violation(t))
                << "\n";
        if (svg)
            write_svg_chart(out_dir + "/gap_" + rep.stem + ".svg", {rep.gap, rep.violation},
                            {"gap", "violation"}, rep.stem);
    }

    {
        std::ofstream out(out_dir + "/summary.csv");
        out << "trace,iterations,oracle_reward_value,oracle_cost_value,oracle_feasible,"
               "weighted_gap,last_gap,last_violation,b_r,b_soft_no,b_soft_conf,"
               "b_c,t_in,re_entry,b_r_crpo,first_hit_iteration,first_hit_cum_transitions,reached,"
               "total_transitions\n";
        long long b_r_crpo = 0;
        for (const auto& rec : crpo) b_r_crpo += rec.mode == UpdateMode::Reward ? 1 : 0;
        for (const auto& rep : reports) {
            const auto& osc = rep.oscillation;
            out << rep.stem << ',' << rep.trace.size() << ','
                << format_double(optimum.optimal_reward_value) << ','
                << format_double(optimum.optimal_cost_value) << ','
                << (optimum.feasible ? 1 : 0) << ','
                << (rep.has_weighted ? format_double(rep.weighted_gap)
                                     : std::string("no_reward_iterations"))
                << ',' << format_double(rep.gap.size() ? rep.gap(rep.gap.size() - 1) : 0.0) << ','
                << format_double(rep.violation.size() ? rep.violation(rep.violation.size() - 1)
                                                      : 0.0)
                << ',' << osc.b_r << ',' << osc.b_soft_no << ',' << osc.b_soft_conf << ','
                << osc.b_c << ',' << (osc.t_in ? std::to_string(*osc.t_in) : std::string("none"))
                << ',' << osc.re_entry_count << ',' << (crpo.empty() ? 0 : b_r_crpo) << ','
                << rep.first_hit_iteration << ',' << rep.first_hit_cum << ','
                << (rep.reached ? 1 : 0) << ','
                << (rep.trace.empty() ? 0 : rep.trace.back().cumulative_transitions) << "\n";
        }
    }

    // Rate fit over distinct trace lengths, when enough horizons are present.
    std::map<long long, double> gap_by_horizon;
    for (const auto& rep : reports)
        if (rep.has_weighted) gap_by_horizon[static_cast<long long>(rep.trace.size())] = rep.weighted_gap;
    if (gap_by_horizon.size() >= 4 &&
        gap_by_horizon.rbegin()->first >= 4 * gap_by_horizon.begin()->first) {
        const RateFit fit = rate_fit(gap_by_horizon);
        std::ofstream out(out_dir + "/rate.csv");
        out << "slope,intercept,clamped\n"
            << format_double(fit.slope) << ',' << format_double(fit.intercept) << ','
            << (fit.clamped ? 1 : 0) << "\n";
    }
    std::cout << "wrote reports for " << reports.size() << " trace(s) to " << out_dir << "\n";
    return 0;
}

bool check(const char* name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    return ok;
}

/// Compact self-check of the core invariants, runnable in the field.
int cmd_verify(std::uint64_t seed) {
    bool all = true;
    const TabularCmdp cmdp = make_random_cmdp(seed, 6, 3, 3, 0.5);
    all &= check("generated instance validates", validate(cmdp).empty());

    const SoftmaxPolicy uniform = SoftmaxPolicy::uniform(6, 3);
    const ValueBundle bundle = exact_policy_values(cmdp, uniform);
    double consistency = 0.0;
    for (int s = 0; s < 6; ++s) {
        consistency = std::max(consistency,
                               std::abs(uniform.probs().row(s).dot(bundle.q_reward.row(s)) -
                                        bundle.v_reward(s)));
        consistency = std::max(consistency,
                               std::abs(uniform.probs().row(s).dot(bundle.adv_cost.row(s))));
    }
    all &= check("V = sum_a pi Q and sum_a pi A = 0", consistency < 1e-8);
    all &= check("visitation sums to 1", std::abs(bundle.visitation.sum() - 1.0) < 1e-8);

    const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
    Rng rng(seed ^ 0xabcdefULL);
    bool lp_dominates = true;
    for (int i = 0; i < 50; ++i) {
        Eigen::MatrixXd logits(6, 3);
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 3; ++a) logits(s, a) = 4.0 * (rng.uniform01() - 0.5);
        const ValueBundle vb = exact_policy_values(cmdp, SoftmaxPolicy(logits));
        if (vb.v_cost_rho <= cmdp.budget + 1e-6)
            lp_dominates = lp_dominates && vb.v_reward_rho <= optimum.optimal_reward_value + 1e-6;
    }
    all &= check("LP optimum dominates feasible policies", lp_dominates);

    // Multiplicative and additive NPG forms agree.
    bool forms_agree = true;
    for (int i = 0; i < 20; ++i) {
        Eigen::MatrixXd logits(6, 3), q_r(6, 3), q_c(6, 3);
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 3; ++a) {
                logits(s, a) = 2.0 * (rng.uniform01() - 0.5);
                q_r(s, a) = 5.0 * rng.uniform01();
                q_c(s, a) = 5.0 * rng.uniform01();
            }
        const SoftmaxPolicy pi(logits);
        const SoftmaxPolicy next =
            npg_update(pi, q_r, q_c, UpdateMode::SoftNoConflict, {0.3, 0.7}, 0.2, 0.8);
        const Eigen::MatrixXd exponent = (0.2 / 0.2) * (0.3 * q_r - 0.7 * q_c);
        for (int s = 0; s < 6; ++s) {
            Eigen::VectorXd mult = (pi.probs().row(s).array() *
                                    (exponent.row(s).array() - exponent.row(s).maxCoeff()).exp())
                                       .transpose();
            mult /= mult.sum();
            forms_agree =
                forms_agree && (mult.transpose() - next.probs().row(s)).cwiseAbs().maxCoeff() < 1e-10;
        }
    }
    all &= check("NPG multiplicative form matches logit form", forms_agree);

    EspoConfig config;
    config.iterations = 40;
    config.eval_mode = EvalMode::Exact;
    config.h_plus0 = 0.5;
    config.seed = seed;
    const RunResult run = espo_run(cmdp, config);
    bool modes_consistent = true;
    for (const auto& rec : run.trace) {
        const ConstraintRegion region =
            classify_mode(rec.v_bar_c, run.budget, rec.h_plus, rec.h_minus);
        const bool is_cost = rec.mode == UpdateMode::Cost;
        const bool is_reward = rec.mode == UpdateMode::Reward;
        modes_consistent = modes_consistent &&
                           (region == ConstraintRegion::Cost) == is_cost &&
                           (region == ConstraintRegion::Reward) == is_reward;
    }
    all &= check("trace modes reconstruct from recorded scalars", modes_consistent);

    const QEstimate est_a = estimate_q(cmdp, uniform, 20000, seed);
    const QEstimate est_b = estimate_q(cmdp, uniform, 20000, seed);
    all &= check("estimation is deterministic in the seed",
                 est_a.q_bar_r == est_b.q_bar_r && est_a.q_bar_c == est_b.q_bar_c);
    all &= check("transition accounting is exact",
                 est_a.transitions_consumed ==
                     static_cast<long long>(6) * 3 * est_a.rollouts_per_pair * est_a.horizon);

    std::cout << (all ? "all checks passed" : "some checks FAILED") << "\n";
    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular lab for three-mode safe policy optimization with "
                 "conflict-driven sample-size control"};
    app.require_subcommand(1);

    // generate-env
    auto* gen = app.add_subcommand("generate-env", "write an environment file");
    std::string gen_type = "random", gen_out, gen_hazards, gen_goal = "0,0";
    std::uint64_t gen_seed = 0;
    int gen_states = 10, gen_actions = 5, gen_branching = 5, gen_width = 4, gen_height = 4;
    double gen_quantile = 0.5, gen_discount = 0.9, gen_budget = 1.0;
    gen->add_option("--type", gen_type, "random | gridworld");
    gen->add_option("--seed", gen_seed, "generator seed (random type)");
    gen->add_option("--states", gen_states, "number of states (random type)");
    gen->add_option("--actions", gen_actions, "number of actions (random type)");
    gen->add_option("--branching", gen_branching, "successors per state-action (random type)");
    gen->add_option("--budget-quantile", gen_quantile,
                    "budget position between extreme cost values (random type)");
    gen->add_option("--discount", gen_discount, "discount factor");
    gen->add_option("--width", gen_width, "grid width (gridworld type)");
    gen->add_option("--height", gen_height, "grid height (gridworld type)");
    gen->add_option("--hazards", gen_hazards, "semicolon-separated cells, e.g. \"1,1;2,0\"");
    gen->add_option("--goal", gen_goal, "goal cell \"row,col\"");
    gen->add_option("--budget", gen_budget, "cost budget (gridworld type)");
    gen->add_option("--out", gen_out, "output file")->required();

    // run
    auto* run = app.add_subcommand("run", "run one algorithm on one instance");
    std::string run_algo, run_env, run_config, run_out, run_policies;
    std::optional<std::uint64_t> run_seed;
    run->add_option("--algo", run_algo, "espo | pcrpo | crpo");
    run->add_option("--env", run_env, "environment file")->required();
    run->add_option("--config", run_config, "run configuration file")->required();
    run->add_option("--seed", run_seed, "seed override");
    run->add_option("--out", run_out, "trace CSV path")->required();
    run->add_option("--policies", run_policies, "optional logit-snapshot sidecar path");

    // grid
    auto* grid = app.add_subcommand("grid", "run a config x seed matrix in parallel");
    std::string grid_env, grid_out_dir = "grid_out";
    std::vector<std::string> grid_configs;
    std::vector<std::uint64_t> grid_seeds;
    int grid_jobs = 4;
    grid->add_option("--env", grid_env, "environment file")->required();
    grid->add_option("--configs", grid_configs, "configuration files")->required();
    grid->add_option("--seeds", grid_seeds, "seeds")->required();
    grid->add_option("--out-dir", grid_out_dir, "output directory");
    grid->add_option("--jobs", grid_jobs, "parallel workers");

    // report
    auto* report = app.add_subcommand("report", "derive gap/oscillation/efficiency reports");
    std::string rep_env, rep_crpo, rep_out_dir = "report_out";
    std::vector<std::string> rep_traces, rep_policies;
    double rep_eps1 = 0.1, rep_eps2 = 0.05;
    std::optional<double> rep_budget;
    bool rep_svg = false;
    report->add_option("--env", rep_env, "environment file")->required();
    report->add_option("--traces", rep_traces, "trace CSV files")->required();
    report->add_option("--policies", rep_policies, "matching logit-snapshot sidecars");
    report->add_option("--crpo-trace", rep_crpo, "matched CRPO trace for the comparison column");
    report->add_option("--eps1", rep_eps1, "gap accuracy for first-hit accounting");
    report->add_option("--eps2", rep_eps2, "violation accuracy for first-hit accounting");
    report->add_option("--budget", rep_budget, "budget override (defaults to the instance's)");
    report->add_option("--out-dir", rep_out_dir, "output directory");
    report->add_flag("--svg", rep_svg, "also write SVG line charts");

    // verify
    auto* verify = app.add_subcommand("verify", "run the invariant self-checks");
    std::uint64_t verify_seed = 2024;
    verify->add_option("--seed", verify_seed, "seed for the randomized checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return cmd_generate_env(gen_type, gen_seed, gen_states, gen_actions, gen_branching,
                                    gen_quantile, gen_discount, gen_width, gen_height, gen_hazards,
                                    gen_goal, gen_budget, gen_out);
        if (run->parsed())
            return cmd_run(run_algo, run_env, run_config, run_seed, run_out, run_policies);
        if (grid->parsed()) return cmd_grid(grid_env, grid_configs, grid_seeds, grid_out_dir, grid_jobs);
        if (report->parsed())
            return cmd_report(rep_env, rep_traces, rep_policies, rep_crpo, rep_eps1, rep_eps2,
                              rep_budget, rep_out_dir, rep_svg);
        if (verify->parsed()) return cmd_verify(verify_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
