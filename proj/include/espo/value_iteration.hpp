#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "espo/tabular_cmdp.hpp"

namespace espo {

enum class Objective { Reward, Cost };
enum class OptSense { Max, Min };

struct ValueIterationResult {
    double value_rho = 0.0;
    Eigen::VectorXd values;
    std::vector<int> greedy_policy;
};

/// Bellman optimality iteration on one objective, run to a 1e-10 sup-norm
/// fixed point. Used for budget calibration and as an oracle cross-check.
inline ValueIterationResult value_iteration(const TabularCmdp& cmdp, Objective objective,
                                            OptSense sense) {
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    const Eigen::MatrixXd& table = (objective == Objective::Reward) ? cmdp.reward : cmdp.cost;
    const double gamma = cmdp.discount;

    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    Eigen::VectorXd v_next(S);
    Eigen::MatrixXd q(S, A);
    // Contraction with modulus gamma: stop once successive iterates are
    // within 1e-10 * (1 - gamma), which bounds the true fixed-point error
    // by 1e-10 * gamma.
    const double tol = 1e-10 * (1.0 - gamma);
    const int max_iters = 10'000'000;
    for (int it = 0; it < max_iters; ++it) {
        for (int a = 0; a < A; ++a) q.col(a) = table.col(a) + gamma * cmdp.transitions[a] * v;
        if (sense == OptSense::Max)
            v_next = q.rowwise().maxCoeff();
        else
            v_next = q.rowwise().minCoeff();
        const double diff = (v_next - v).cwiseAbs().maxCoeff();
        v.swap(v_next);
        if (diff <= tol) break;
        if (it + 1 == max_iters) throw std::runtime_error("value iteration failed to converge");
    }

    ValueIterationResult out;
    out.values = v;
    out.greedy_policy.resize(S);
    for (int a = 0; a < A; ++a) q.col(a) = table.col(a) + gamma * cmdp.transitions[a] * v;
    for (int s = 0; s < S; ++s) {
        int best = 0;
        for (int a = 1; a < A; ++a) {
            const bool better = (sense == OptSense::Max) ? q(s, a) > q(s, best) : q(s, a) < q(s, best);
            if (better) best = a;
        }
        out.greedy_policy[s] = best;
    }
    out.value_rho = cmdp.initial_dist.dot(v);
    return out;
}

}  // namespace espo
