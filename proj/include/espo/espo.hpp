#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "espo/estimation.hpp"
#include "espo/gradients.hpp"
#include "espo/npg.hpp"
#include "espo/policy_values.hpp"
#include "espo/rng.hpp"
#include "espo/softmax_policy.hpp"
#include "espo/tabular_cmdp.hpp"

namespace espo {

enum class EvalMode { Sampled, Exact };

inline const char* to_string(EvalMode mode) {
    return mode == EvalMode::Sampled ? "sampled" : "exact";
}

/// Run configuration. Slack values h+/h- bound the soft region around the
/// budget; zeta+/zeta- scale the evaluation budget under gradient conflict
/// and alignment; each of the four quantities optionally shrinks by q/T per
/// iteration. `confidence_delta` is recorded for reporting only.
struct EspoConfig {
    int iterations = 100;                 // T
    double learning_rate = 0.01;          // eta
    long long base_sample_size = 100000;  // X, in simulator transitions
    double zeta_plus0 = 0.0;              // >= 0, conflict branch
    double zeta_minus0 = 0.0;             // in (-1, 0], alignment branch
    double h_plus0 = 0.0;                 // >= 0, may be +infinity
    double h_minus0 = 0.0;                // <= 0, may be -infinity
    bool decay_h_plus = false;
    bool decay_h_minus = false;
    bool decay_zeta_plus = false;
    bool decay_zeta_minus = false;
    double x_r = 0.5;  // soft-mode reward weight; x_c = 1 - x_r
    double budget = std::numeric_limits<double>::quiet_NaN();  // NaN -> use the instance budget
    std::uint64_t seed = 0;
    EvalMode eval_mode = EvalMode::Sampled;
    double confidence_delta = 0.1;
    int snapshot_every = 1;  // 0 disables logit snapshots
    // Swaps which soft branch uses the projected vs. the weighted update
    // (the sample-size branching is unaffected). Off by default.
    bool alt_soft_pairing = false;
    bool store_estimates = false;  // keep per-iteration Q tables for error analysis

    void check() const {
        if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
        if (!(zeta_minus0 > -1.0 && zeta_minus0 <= 0.0))
            throw std::invalid_argument("zeta_minus must be in (-1, 0]");
        if (!(zeta_plus0 >= 0.0)) throw std::invalid_argument("zeta_plus must be >= 0");
        if (!(h_plus0 >= 0.0)) throw std::invalid_argument("h_plus must be >= 0");
        if (!(h_minus0 <= 0.0)) throw std::invalid_argument("h_minus must be <= 0");
        if (!(x_r >= 0.0 && x_r <= 1.0)) throw std::invalid_argument("x_r must be in [0, 1]");
        if (!(confidence_delta > 0.0 && confidence_delta < 1.0))
            throw std::invalid_argument("confidence_delta must be in (0, 1)");
        if (base_sample_size < 1) throw std::invalid_argument("base_sample_size must be >= 1");
    }
};

/// One row of the run trace. Field set matches the trace CSV schema exactly.
struct IterationRecord {
    int t = 0;
    UpdateMode mode = UpdateMode::Reward;
    long long sample_size_used = 0;  // X_t chosen for this step's evaluation
    double v_bar_r = 0.0;
    double v_bar_c = 0.0;
    double h_plus = 0.0;
    double h_minus = 0.0;
    double zeta_plus = 0.0;
    double zeta_minus = 0.0;
    double grad_dot = 0.0;
    double grad_norm_r = 0.0;
    double grad_norm_c = 0.0;
    double y_r = std::numeric_limits<double>::quiet_NaN();  // soft rows only
    double y_c = std::numeric_limits<double>::quiet_NaN();
    long long cumulative_transitions = 0;
};

/// Full run output: the trace, optional logit snapshots of the pre-update
/// policy at each recorded iteration, and the final policy.
struct RunResult {
    std::vector<IterationRecord> trace;
    std::vector<int> snapshot_iterations;
    std::vector<Eigen::MatrixXd> snapshots;
    Eigen::MatrixXd final_logits;
    EvalMode eval_mode = EvalMode::Sampled;
    long long bootstrap_transitions = 0;
    double budget = 0.0;
    double x_r = 0.5;
    int num_states = 0;
    int num_actions = 0;
    std::vector<std::string> warnings;
    // Per-iteration Q tables, kept only when store_estimates is set.
    std::vector<Eigen::MatrixXd> estimates_q_r;
    std::vector<Eigen::MatrixXd> estimates_q_c;
};

enum class ConstraintRegion { Cost, Soft, Reward };

/// Region gate on the estimated cost value: COST above b + h+, REWARD below
/// b + h-, SOFT on the closed band in between.
inline ConstraintRegion classify_mode(double v_bar_c, double budget, double h_plus,
                                      double h_minus) {
    if (v_bar_c > budget + h_plus) return ConstraintRegion::Cost;
    if (v_bar_c < budget + h_minus) return ConstraintRegion::Reward;
    return ConstraintRegion::Soft;
}

struct SlackState {
    double h_plus = 0.0;
    double h_minus = 0.0;
    double zeta_plus = 0.0;
    double zeta_minus = 0.0;
};

/// Geometric shrink q <- q - q/T for every enabled quantity; infinite
/// slacks pass through unchanged.
inline SlackState decay_slack_and_penalty(const SlackState& state, int horizon_T, bool decay_h_plus,
                                          bool decay_h_minus, bool decay_zeta_plus,
                                          bool decay_zeta_minus) {
    if (horizon_T < 1) throw std::invalid_argument("decay horizon must be >= 1");
    auto shrink = [horizon_T](double q, bool enabled) {
        if (!enabled || std::isinf(q)) return q;
        return q - q / horizon_T;
    };
    return {shrink(state.h_plus, decay_h_plus), shrink(state.h_minus, decay_h_minus),
            shrink(state.zeta_plus, decay_zeta_plus), shrink(state.zeta_minus, decay_zeta_minus)};
}

/// Next evaluation budget from the fixed base: X_{t+1} = round(X + X zeta).
/// Non-compounding by construction.
inline long long adjust_sample_size(long long base_sample_size, double zeta) {
    return std::llround(static_cast<double>(base_sample_size) * (1.0 + zeta));
}

/// Mutable loop state threaded through espo_step.
struct EspoState {
    SoftmaxPolicy policy;
    Eigen::MatrixXd q_bar_r;  // evaluation of `policy` (sampled or exact)
    Eigen::MatrixXd q_bar_c;
    SlackState slacks;
    long long cumulative_transitions = 0;
    int t = 0;
};

namespace detail {

inline Eigen::VectorXd exact_visitation(const TabularCmdp& cmdp, const SoftmaxPolicy& policy) {
    const Eigen::MatrixXd p_pi = policy_transition_matrix(cmdp, policy);
    const Eigen::MatrixXd system_t =
        (Eigen::MatrixXd::Identity(cmdp.num_states, cmdp.num_states) - cmdp.discount * p_pi)
            .transpose();
    return Eigen::PartialPivLU<Eigen::MatrixXd>(system_t)
        .solve((1.0 - cmdp.discount) * cmdp.initial_dist);
}

/// Evaluates `policy` into (q_bar_r, q_bar_c): Monte-Carlo tables in sampled
/// mode (consuming budget), exact Q tables in exact mode (consuming none).
inline long long evaluate_policy(const TabularCmdp& cmdp, const SoftmaxPolicy& policy,
                                 const EspoConfig& config, long long budget, int eval_index,
                                 Eigen::MatrixXd& q_bar_r, Eigen::MatrixXd& q_bar_c) {
    if (config.eval_mode == EvalMode::Exact) {
        const ValueBundle bundle = exact_policy_values(cmdp, policy);
        q_bar_r = bundle.q_reward;
        q_bar_c = bundle.q_cost;
        return 0;
    }
    const QEstimate est = estimate_q(cmdp, policy, budget,
                                     substream_seed(config.seed, 0x5eed0000ULL + eval_index));
    q_bar_r = est.q_bar_r;
    q_bar_c = est.q_bar_c;
    return est.transitions_consumed;
}

inline long long min_viable_budget(const TabularCmdp& cmdp) {
    return static_cast<long long>(cmdp.num_states) * cmdp.num_actions *
           truncation_horizon(cmdp.discount, cmdp.v_max);
}

}  // namespace detail

/// One iteration: decay the slacks, gate on the current estimated cost
/// value, update the policy in the selected mode, pick the next evaluation
/// budget by the conflict branch, and evaluate the new policy with it.
inline IterationRecord espo_step(EspoState& state, const TabularCmdp& cmdp,
                                 const EspoConfig& config, RunResult* sink = nullptr) {
    const double budget = std::isnan(config.budget) ? cmdp.budget : config.budget;
    state.slacks =
        decay_slack_and_penalty(state.slacks, config.iterations, config.decay_h_plus,
                                config.decay_h_minus, config.decay_zeta_plus,
                                config.decay_zeta_minus);

    IterationRecord rec;
    rec.t = state.t;
    rec.h_plus = state.slacks.h_plus;
    rec.h_minus = state.slacks.h_minus;
    rec.zeta_plus = state.slacks.zeta_plus;
    rec.zeta_minus = state.slacks.zeta_minus;

    const Eigen::VectorXd rho = cmdp.initial_dist;
    rec.v_bar_r = rho.dot((state.policy.probs().array() * state.q_bar_r.array()).rowwise().sum().matrix());
    rec.v_bar_c = rho.dot((state.policy.probs().array() * state.q_bar_c.array()).rowwise().sum().matrix());

    const Eigen::VectorXd visitation = detail::exact_visitation(cmdp, state.policy);
    const GradientPair grads =
        gradient_pair_from_q(cmdp, state.policy, state.q_bar_r, state.q_bar_c, visitation);
    rec.grad_dot = grads.dot;
    rec.grad_norm_r = grads.norm_reward;
    rec.grad_norm_c = grads.norm_cost;

    const ConstraintRegion region =
        classify_mode(rec.v_bar_c, budget, state.slacks.h_plus, state.slacks.h_minus);

    UpdateMode mode;
    NpgWeights weights;
    bool conflict_branch = false;
    const double x_r = config.x_r;
    const double x_c = 1.0 - config.x_r;
    if (region == ConstraintRegion::Cost) {
        mode = UpdateMode::Cost;
    } else if (region == ConstraintRegion::Reward) {
        mode = UpdateMode::Reward;
    } else if (grads.degenerate || !grads.conflict) {
        // Aligned (or degenerate) gradients: weighted combination.
        mode = UpdateMode::SoftNoConflict;
        weights = {x_r, x_c};
        rec.y_r = x_r;
        rec.y_c = x_c;
    } else {
        mode = UpdateMode::SoftConflict;
        conflict_branch = true;
        const Eigen::MatrixXd projected =
            project_conflicting(grads.g_reward, grads.g_cost_descent, x_r, x_c);
        const double scale = std::max(grads.norm_reward, grads.norm_cost);
        if (projected.norm() <= 1e-12 * scale) {
            // Fully cancelling pair (antiparallel): the projected direction
            // vanishes and the policy stays put.
            weights = {0.0, 0.0};
        } else {
            const SpanDecomposition dec =
                decompose_in_span(projected, grads.g_reward, grads.g_cost_descent);
            if (dec.degenerate) {
                // Nearly collinear gradients: the span weights are not
                // identifiable, fall back to pure cost descent.
                weights = {0.0, 1.0};
                if (sink)
                    sink->warnings.push_back("iteration " + std::to_string(state.t) +
                                             ": collinear conflicting gradients, cost-only update");
            } else {
                weights = {dec.y_r, dec.y_c};
            }
        }
        rec.y_r = weights.w_reward;
        rec.y_c = weights.w_cost;
    }

    UpdateMode update_rule = mode;
    if (config.alt_soft_pairing) {
        if (mode == UpdateMode::SoftConflict) update_rule = UpdateMode::SoftNoConflict;
        if (mode == UpdateMode::SoftNoConflict) update_rule = UpdateMode::SoftConflict;
    }
    NpgWeights update_weights = weights;
    if (config.alt_soft_pairing && mode == UpdateMode::SoftConflict)
        update_weights = {x_r, x_c};  // weighted rule under conflict
    if (config.alt_soft_pairing && mode == UpdateMode::SoftNoConflict) {
        // Projected rule despite alignment; with an acute angle the
        // decomposition is always well posed unless a gradient vanishes.
        if (!grads.degenerate) {
            const Eigen::MatrixXd projected =
                project_conflicting(grads.g_reward, grads.g_cost_descent, x_r, x_c);
            const SpanDecomposition dec =
                decompose_in_span(projected, grads.g_reward, grads.g_cost_descent);
            update_weights = dec.degenerate ? NpgWeights{x_r, x_c} : NpgWeights{dec.y_r, dec.y_c};
        }
        update_rule = UpdateMode::SoftConflict;  // exponent form y_r Q_r - y_c Q_c
    }

    state.policy = npg_update(state.policy, state.q_bar_r, state.q_bar_c, update_rule,
                              update_weights, config.learning_rate, cmdp.discount);

    // Sample-size branch: increase under conflict, decrease otherwise.
    const double zeta = conflict_branch ? state.slacks.zeta_plus : state.slacks.zeta_minus;
    long long next_budget = adjust_sample_size(config.base_sample_size, zeta);
    if (config.eval_mode == EvalMode::Sampled) {
        const long long min_budget = detail::min_viable_budget(cmdp);
        if (next_budget < min_budget) {
            next_budget = min_budget;
            if (sink)
                sink->warnings.push_back("iteration " + std::to_string(state.t) +
                                         ": sample budget clamped to minimum " +
                                         std::to_string(min_budget));
        }
    }
    rec.sample_size_used = next_budget;

    state.cumulative_transitions += detail::evaluate_policy(
        cmdp, state.policy, config, next_budget, state.t + 1, state.q_bar_r, state.q_bar_c);
    rec.cumulative_transitions = state.cumulative_transitions;
    rec.mode = mode;
    state.t += 1;
    return rec;
}

/// Runs T iterations from the uniform policy, after one bootstrap
/// evaluation with the base budget. Deterministic given the config seed.
inline RunResult espo_run(const TabularCmdp& cmdp, const EspoConfig& config) {
    config.check();
    require_valid(cmdp);

    RunResult result;
    result.eval_mode = config.eval_mode;
    result.budget = std::isnan(config.budget) ? cmdp.budget : config.budget;
    result.x_r = config.x_r;
    result.num_states = cmdp.num_states;
    result.num_actions = cmdp.num_actions;

    EspoState state{SoftmaxPolicy::uniform(cmdp.num_states, cmdp.num_actions),
                    Eigen::MatrixXd(), Eigen::MatrixXd(),
                    {config.h_plus0, config.h_minus0, config.zeta_plus0, config.zeta_minus0},
                    0, 0};
    if (config.iterations == 0) {
        result.final_logits = state.policy.logits();
        return result;
    }

    long long bootstrap_budget = config.base_sample_size;
    if (config.eval_mode == EvalMode::Sampled) {
        const long long min_budget = detail::min_viable_budget(cmdp);
        if (bootstrap_budget < min_budget) {
            bootstrap_budget = min_budget;
            result.warnings.push_back("bootstrap sample budget clamped to minimum " +
                                      std::to_string(min_budget));
        }
    }
    result.bootstrap_transitions = detail::evaluate_policy(cmdp, state.policy, config,
                                                           bootstrap_budget, 0, state.q_bar_r,
                                                           state.q_bar_c);
    state.cumulative_transitions = result.bootstrap_transitions;

    result.trace.reserve(config.iterations);
    for (int t = 0; t < config.iterations; ++t) {
        if (config.snapshot_every > 0 && t % config.snapshot_every == 0) {
            result.snapshot_iterations.push_back(t);
            result.snapshots.push_back(state.policy.logits());
        }
        if (config.store_estimates) {
            result.estimates_q_r.push_back(state.q_bar_r);
            result.estimates_q_c.push_back(state.q_bar_c);
        }
        result.trace.push_back(espo_step(state, cmdp, config, &result));
    }
    result.final_logits = state.policy.logits();
    return result;
}

/// Distribution over iterations defining the theoretical output policy:
/// weight 1 on REWARD rows, the recorded y_r on soft rows, 0 on COST rows.
/// Empty when the run never left COST mode.
inline std::optional<Eigen::VectorXd> weighted_output_distribution(
    const std::vector<IterationRecord>& trace) {
    Eigen::VectorXd weights(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        switch (trace[i].mode) {
            case UpdateMode::Reward: weights(i) = 1.0; break;
            case UpdateMode::Cost: weights(i) = 0.0; break;
            default: weights(i) = std::isnan(trace[i].y_r) ? 0.0 : trace[i].y_r; break;
        }
    }
    const double total = weights.sum();
    if (total <= 0.0) return std::nullopt;
    return Eigen::VectorXd(weights / total);
}

}  // namespace espo
