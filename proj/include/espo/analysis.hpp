#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "espo/espo.hpp"
#include "espo/oracle.hpp"
#include "espo/policy_values.hpp"

namespace espo {

/// Per-iteration suboptimality against the constrained optimum, plus the
/// weighted-expectation gap over the output distribution. When the instance
/// is infeasible the reference is the cost-minimizing solution and
/// `reference_is_cost_min` is set.
struct GapReport {
    Eigen::VectorXd gap;        // V_r(opt) - V_r(pi_t), exact
    Eigen::VectorXd violation;  // max(0, V_c(pi_t) - b), exact
    double weighted_gap = std::numeric_limits<double>::quiet_NaN();
    bool has_weighted = false;  // false iff the run never left COST mode
    double final_gap = 0.0;
    double final_violation = 0.0;
    bool reference_is_cost_min = false;
};

/// Mode-set cardinalities and boundary-crossing statistics of a run,
/// optionally matched against a CRPO run on the same instance.
struct OscillationReport {
    long long b_r = 0;
    long long b_soft_no = 0;
    long long b_soft_conf = 0;
    long long b_c = 0;
    std::optional<int> t_in;  // first non-COST iteration
    long long re_entry_count = 0;
    long long b_r_crpo = 0;
    bool stays_after_entry = false;      // re_entry_count == 0 given t_in exists
    bool at_least_crpo_reward = false;   // |B_r| + |B_soft| >= |B_r^CRPO|
};

/// First-hit sample accounting for one run at accuracy (eps1, eps2).
struct FirstHit {
    bool reached = false;
    int iteration = -1;
    long long cumulative_transitions = 0;
    long long total_transitions = 0;
    double eps_pi = std::numeric_limits<double>::quiet_NaN();
};

struct EfficiencyReport {
    std::vector<FirstHit> hits;  // one per input run, same order
    // First-hit ratio of run 0 over run 1 (the adaptive-vs-fixed pairing);
    // NaN unless both runs reached the accuracy targets.
    double pair_ratio = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// Exact (V_r(rho), V_c(rho)) for the iterate at trace position t. Uses the
/// logit snapshot when available; otherwise falls back to the recorded
/// estimates, which are exact only in exact-eval mode.
inline std::pair<double, double> exact_iterate_values(const RunResult& run, const TabularCmdp& cmdp,
                                                      std::size_t t) {
    // Dense snapshots (thinning 1) index directly; sparse ones need a scan.
    if (t < run.snapshot_iterations.size() &&
        run.snapshot_iterations[t] == static_cast<int>(t)) {
        const ValueBundle bundle = exact_policy_values(cmdp, SoftmaxPolicy(run.snapshots[t]));
        return {bundle.v_reward_rho, bundle.v_cost_rho};
    }
    for (std::size_t i = 0; i < run.snapshot_iterations.size(); ++i) {
        if (run.snapshot_iterations[i] == static_cast<int>(t)) {
            const ValueBundle bundle = exact_policy_values(cmdp, SoftmaxPolicy(run.snapshots[i]));
            return {bundle.v_reward_rho, bundle.v_cost_rho};
        }
    }
    if (run.eval_mode != EvalMode::Exact)
        throw std::invalid_argument(
            "exact per-iterate values need snapshots (or an exact-eval run)");
    return {run.trace[t].v_bar_r, run.trace[t].v_bar_c};
}

}  // namespace detail

/// Exact gap and violation series of a run. Requires per-iteration
/// snapshots unless the run evaluated exactly, in which case the recorded
/// values already are the exact ones.
inline GapReport gap_series(const RunResult& run, const TabularCmdp& cmdp,
                            const ConstrainedOptimum& optimum) {
    GapReport report;
    report.reference_is_cost_min = !optimum.feasible;
    const double reference = optimum.optimal_reward_value;
    const std::size_t n = run.trace.size();
    report.gap.resize(n);
    report.violation.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto [v_r, v_c] = detail::exact_iterate_values(run, cmdp, t);
        report.gap(t) = reference - v_r;
        report.violation(t) = std::max(0.0, v_c - run.budget);
    }

    const auto weights = weighted_output_distribution(run.trace);
    if (weights) {
        report.has_weighted = true;
        report.weighted_gap = weights->dot(report.gap);
    }

    const ValueBundle final_bundle = exact_policy_values(cmdp, SoftmaxPolicy(run.final_logits));
    report.final_gap = reference - final_bundle.v_reward_rho;
    report.final_violation = std::max(0.0, final_bundle.v_cost_rho - run.budget);
    return report;
}

/// Mode partition and Prop-style oscillation checks. `crpo` may be null
/// when no matched baseline run exists.
inline OscillationReport oscillation_report(const RunResult& espo_run,
                                            const RunResult* crpo = nullptr) {
    OscillationReport report;
    for (std::size_t t = 0; t < espo_run.trace.size(); ++t) {
        switch (espo_run.trace[t].mode) {
            case UpdateMode::Reward: ++report.b_r; break;
            case UpdateMode::SoftNoConflict: ++report.b_soft_no; break;
            case UpdateMode::SoftConflict: ++report.b_soft_conf; break;
            case UpdateMode::Cost:
                if (report.t_in) ++report.re_entry_count;
                break;
        }
        if (!report.t_in && espo_run.trace[t].mode != UpdateMode::Cost)
            report.t_in = static_cast<int>(t);
        report.b_c += espo_run.trace[t].mode == UpdateMode::Cost ? 1 : 0;
    }
    report.stays_after_entry = report.t_in.has_value() && report.re_entry_count == 0;

    if (crpo) {
        if (crpo->num_states != espo_run.num_states || crpo->num_actions != espo_run.num_actions ||
            crpo->budget != espo_run.budget)
            throw std::invalid_argument("oscillation comparison across mismatched instances");
        for (const auto& rec : crpo->trace)
            report.b_r_crpo += rec.mode == UpdateMode::Reward ? 1 : 0;
        report.at_least_crpo_reward =
            report.b_r + report.b_soft_no + report.b_soft_conf >= report.b_r_crpo;
    }
    return report;
}

/// Aggregate evaluation error of a sampled run against exact Q tables,
/// weighting each iteration's table error by the same coefficients as the
/// output distribution (1 on pure rows, y on soft rows). Needs stored
/// estimates and snapshots.
inline double evaluation_error_aggregate(const RunResult& run, const TabularCmdp& cmdp) {
    if (run.estimates_q_r.size() != run.trace.size() ||
        run.snapshot_iterations.size() != run.trace.size())
        throw std::invalid_argument("evaluation error needs full snapshots and stored estimates");
    double total = 0.0;
    for (std::size_t t = 0; t < run.trace.size(); ++t) {
        const ValueBundle bundle = exact_policy_values(cmdp, SoftmaxPolicy(run.snapshots[t]));
        const double err_r = (bundle.q_reward - run.estimates_q_r[t]).norm();
        const double err_c = (bundle.q_cost - run.estimates_q_c[t]).norm();
        switch (run.trace[t].mode) {
            case UpdateMode::Reward: total += err_r; break;
            case UpdateMode::Cost: total += err_c; break;
            default: {
                const double y_r = std::isnan(run.trace[t].y_r) ? 0.0 : run.trace[t].y_r;
                const double y_c = std::isnan(run.trace[t].y_c) ? 0.0 : run.trace[t].y_c;
                total += y_r * err_r + y_c * err_c;
                break;
            }
        }
    }
    return total;
}

/// Cumulative transitions needed by each run to first reach gap <= eps1 and
/// violation <= eps2 (both exact). Runs that never do are flagged.
inline EfficiencyReport efficiency_report(const std::vector<const RunResult*>& runs,
                                          const TabularCmdp& cmdp,
                                          const ConstrainedOptimum& optimum, double eps1,
                                          double eps2) {
    if (runs.size() < 1) throw std::invalid_argument("efficiency report needs at least one run");
    EfficiencyReport report;
    for (const RunResult* run : runs) {
        FirstHit hit;
        hit.total_transitions = run->trace.empty() ? run->bootstrap_transitions
                                                   : run->trace.back().cumulative_transitions;
        const GapReport gaps = gap_series(*run, cmdp, optimum);
        for (std::size_t t = 0; t < run->trace.size(); ++t) {
            if (gaps.gap(t) <= eps1 && gaps.violation(t) <= eps2) {
                hit.reached = true;
                hit.iteration = static_cast<int>(t);
                // Samples spent up to (not including) this iterate's update.
                hit.cumulative_transitions = t == 0 ? run->bootstrap_transitions
                                                    : run->trace[t - 1].cumulative_transitions;
                break;
            }
        }
        if (run->eval_mode == EvalMode::Sampled && !run->estimates_q_r.empty() &&
            run->snapshot_iterations.size() == run->trace.size())
            hit.eps_pi = evaluation_error_aggregate(*run, cmdp);
        report.hits.push_back(hit);
    }
    if (report.hits.size() >= 2 && report.hits[0].reached && report.hits[1].reached &&
        report.hits[1].cumulative_transitions > 0)
        report.pair_ratio = static_cast<double>(report.hits[0].cumulative_transitions) /
                            static_cast<double>(report.hits[1].cumulative_transitions);
    return report;
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    bool clamped = false;  // some gap was <= 0 and clamped to 1e-12
};

/// Least-squares slope of log(gap) against log(T). Demands at least four
/// horizons spanning two octaves.
inline RateFit rate_fit(const std::map<long long, double>& gap_at_horizon) {
    if (gap_at_horizon.size() < 4)
        throw std::invalid_argument("rate fit needs at least 4 horizons");
    const double t_min = static_cast<double>(gap_at_horizon.begin()->first);
    const double t_max = static_cast<double>(gap_at_horizon.rbegin()->first);
    if (t_max < 4.0 * t_min)
        throw std::invalid_argument("rate fit needs horizons spanning at least 2 octaves");

    RateFit fit;
    const std::size_t n = gap_at_horizon.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [horizon, gap] : gap_at_horizon) {
        double g = gap;
        if (g <= 0.0) {
            g = 1e-12;
            fit.clamped = true;
        }
        const double x = std::log(static_cast<double>(horizon));
        const double y = std::log(g);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

}  // namespace espo
