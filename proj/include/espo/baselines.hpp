#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "espo/espo.hpp"

namespace espo {

enum class BaselineAlgorithm { Crpo, Pcrpo };

/// Baseline configuration on the shared policy/evaluation substrate.
/// CRPO keeps a two-mode gate with tolerance `eta_tol`; PCRPO is the full
/// three-mode scheme with the sample-size manipulation disabled.
struct BaselineConfig {
    BaselineAlgorithm algorithm = BaselineAlgorithm::Crpo;
    int iterations = 100;
    double learning_rate = 0.01;
    long long sample_size = 100000;  // fixed X
    double eta_tol = 0.0;            // CRPO violation tolerance
    double h_plus0 = 0.0;            // PCRPO slacks
    double h_minus0 = 0.0;
    bool decay_h_plus = false;
    bool decay_h_minus = false;
    double x_r = 0.5;
    double budget = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    EvalMode eval_mode = EvalMode::Sampled;
    int snapshot_every = 1;
    bool store_estimates = false;

    void check() const {
        if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
        if (!(eta_tol >= 0.0)) throw std::invalid_argument("eta_tol must be >= 0");
        if (sample_size < 1) throw std::invalid_argument("sample_size must be >= 1");
        if (!(x_r >= 0.0 && x_r <= 1.0)) throw std::invalid_argument("x_r must be in [0, 1]");
    }
};

/// CRPO: evaluate with a fixed budget every iteration; descend the cost
/// whenever the estimated violation exceeds eta_tol, otherwise ascend the
/// reward. Produces a two-mode trace on the same record schema.
inline RunResult crpo_run(const TabularCmdp& cmdp, const BaselineConfig& config) {
    config.check();
    require_valid(cmdp);
    const double budget = std::isnan(config.budget) ? cmdp.budget : config.budget;

    RunResult result;
    result.eval_mode = config.eval_mode;
    result.budget = budget;
    result.x_r = config.x_r;
    result.num_states = cmdp.num_states;
    result.num_actions = cmdp.num_actions;

    SoftmaxPolicy policy = SoftmaxPolicy::uniform(cmdp.num_states, cmdp.num_actions);
    if (config.iterations == 0) {
        result.final_logits = policy.logits();
        return result;
    }

    EspoConfig eval_config;  // reused only for the evaluation plumbing
    eval_config.seed = config.seed;
    eval_config.eval_mode = config.eval_mode;

    long long fixed_budget = config.sample_size;
    if (config.eval_mode == EvalMode::Sampled)
        fixed_budget = std::max(fixed_budget, detail::min_viable_budget(cmdp));
    if (fixed_budget != config.sample_size)
        result.warnings.push_back("sample budget clamped to minimum " +
                                  std::to_string(fixed_budget));

    // Evaluate-then-update each iteration; cumulative consumption after T
    // iterations is exactly T evaluations.
    Eigen::MatrixXd q_bar_r;
    Eigen::MatrixXd q_bar_c;
    long long cumulative = 0;
    const Eigen::VectorXd& rho = cmdp.initial_dist;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < config.iterations; ++t) {
        if (config.snapshot_every > 0 && t % config.snapshot_every == 0) {
            result.snapshot_iterations.push_back(t);
            result.snapshots.push_back(policy.logits());
        }
        cumulative += detail::evaluate_policy(cmdp, policy, eval_config, fixed_budget, t,
                                              q_bar_r, q_bar_c);
        if (config.store_estimates) {
            result.estimates_q_r.push_back(q_bar_r);
            result.estimates_q_c.push_back(q_bar_c);
        }

        IterationRecord rec;
        rec.t = t;
        rec.h_plus = config.eta_tol;
        rec.h_minus = -std::numeric_limits<double>::infinity();
        rec.zeta_plus = 0.0;
        rec.zeta_minus = 0.0;
        rec.v_bar_r = rho.dot((policy.probs().array() * q_bar_r.array()).rowwise().sum().matrix());
        rec.v_bar_c = rho.dot((policy.probs().array() * q_bar_c.array()).rowwise().sum().matrix());
        rec.grad_dot = nan;
        rec.grad_norm_r = nan;
        rec.grad_norm_c = nan;

        rec.mode = (rec.v_bar_c > budget + config.eta_tol) ? UpdateMode::Cost : UpdateMode::Reward;
        policy = npg_update(policy, q_bar_r, q_bar_c, rec.mode, NpgWeights{}, config.learning_rate,
                            cmdp.discount);

        rec.sample_size_used = fixed_budget;
        rec.cumulative_transitions = cumulative;
        result.trace.push_back(rec);
    }
    result.final_logits = policy.logits();
    return result;
}

/// PCRPO: the three-mode scheme with X_t pinned to the base size. Realized
/// by the main loop with both sample-size penalties set to zero, which is
/// the defining difference.
inline RunResult pcrpo_run(const TabularCmdp& cmdp, const BaselineConfig& config) {
    config.check();
    EspoConfig espo_config;
    espo_config.iterations = config.iterations;
    espo_config.learning_rate = config.learning_rate;
    espo_config.base_sample_size = config.sample_size;
    espo_config.zeta_plus0 = 0.0;
    espo_config.zeta_minus0 = 0.0;
    espo_config.h_plus0 = config.h_plus0;
    espo_config.h_minus0 = config.h_minus0;
    espo_config.decay_h_plus = config.decay_h_plus;
    espo_config.decay_h_minus = config.decay_h_minus;
    espo_config.x_r = config.x_r;
    espo_config.budget = config.budget;
    espo_config.seed = config.seed;
    espo_config.eval_mode = config.eval_mode;
    espo_config.snapshot_every = config.snapshot_every;
    espo_config.store_estimates = config.store_estimates;
    return espo_run(cmdp, espo_config);
}

}  // namespace espo
