#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "espo/softmax_policy.hpp"
#include "espo/tabular_cmdp.hpp"

namespace espo {

/// Exact evaluation of one policy on one instance: state values, Q tables,
/// advantages, the discounted visitation distribution and the scalar values
/// under the initial distribution.
struct ValueBundle {
    Eigen::VectorXd v_reward;    // V_r(s)
    Eigen::VectorXd v_cost;      // V_c(s)
    Eigen::MatrixXd q_reward;    // Q_r(s, a)
    Eigen::MatrixXd q_cost;      // Q_c(s, a)
    Eigen::MatrixXd adv_reward;  // Q_r - V_r
    Eigen::MatrixXd adv_cost;    // Q_c - V_c
    Eigen::VectorXd visitation;  // discounted state visitation from initial_dist
    double v_reward_rho = 0.0;
    double v_cost_rho = 0.0;
};

/// Policy-averaged transition matrix P_pi(s, s') = sum_a pi(a|s) P_a(s, s').
inline Eigen::MatrixXd policy_transition_matrix(const TabularCmdp& cmdp,
                                                const SoftmaxPolicy& policy) {
    const int S = cmdp.num_states;
    Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
    for (int a = 0; a < cmdp.num_actions; ++a)
        p_pi += policy.probs().col(a).asDiagonal() * cmdp.transitions[a];
    return p_pi;
}

/// Solves the two Bellman systems (I - gamma P_pi) V = r_pi and the adjoint
/// visitation system directly; everything else is assembled from V.
inline ValueBundle exact_policy_values(const TabularCmdp& cmdp, const SoftmaxPolicy& policy) {
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    if (policy.num_states() != S || policy.num_actions() != A)
        throw std::invalid_argument("policy shape does not match instance");

    const Eigen::MatrixXd p_pi = policy_transition_matrix(cmdp, policy);
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(S, S) - cmdp.discount * p_pi;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);

    ValueBundle out;
    const Eigen::VectorXd r_pi = (policy.probs().array() * cmdp.reward.array()).rowwise().sum();
    const Eigen::VectorXd c_pi = (policy.probs().array() * cmdp.cost.array()).rowwise().sum();
    out.v_reward = lu.solve(r_pi);
    out.v_cost = lu.solve(c_pi);
    if (!out.v_reward.allFinite() || !out.v_cost.allFinite())
        throw std::runtime_error("Bellman solve produced non-finite values");

    // d_rho^T = (1 - gamma) rho^T (I - gamma P_pi)^{-1}
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_t(system.transpose());
    out.visitation = lu_t.solve((1.0 - cmdp.discount) * cmdp.initial_dist);

    out.q_reward.resize(S, A);
    out.q_cost.resize(S, A);
    for (int a = 0; a < A; ++a) {
        out.q_reward.col(a) = cmdp.reward.col(a) + cmdp.discount * cmdp.transitions[a] * out.v_reward;
        out.q_cost.col(a) = cmdp.cost.col(a) + cmdp.discount * cmdp.transitions[a] * out.v_cost;
    }
    out.adv_reward = out.q_reward.colwise() - out.v_reward;
    out.adv_cost = out.q_cost.colwise() - out.v_cost;
    out.v_reward_rho = cmdp.initial_dist.dot(out.v_reward);
    out.v_cost_rho = cmdp.initial_dist.dot(out.v_cost);
    return out;
}

}  // namespace espo
