#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "espo/simplex.hpp"
#include "espo/softmax_policy.hpp"
#include "espo/tabular_cmdp.hpp"
#include "espo/value_iteration.hpp"

namespace espo {

/// Exact constrained optimum computed over discounted occupancy measures.
/// When the instance is infeasible (budget below the cost-minimizing value)
/// `feasible` is false and the attached solution minimizes the cost value
/// instead, so callers can report the minimal attainable violation.
struct ConstrainedOptimum {
    double optimal_reward_value = 0.0;  // V_r at the returned occupancy
    double optimal_cost_value = 0.0;    // V_c at the returned occupancy
    Eigen::MatrixXd occupancy;          // d(s, a), sums to 1
    Eigen::MatrixXd policy;             // pi(a|s); uniform where the marginal vanishes
    bool feasible = true;
};

namespace detail {

/// Equality rows of the occupancy polytope:
/// sum_a d(s',a) - gamma sum_{s,a} P(s,a,s') d(s,a) = (1-gamma) rho(s').
/// Variables are d flattened as s * A + a, plus `extra_cols` appended slots.
inline void fill_flow_rows(const TabularCmdp& cmdp, Eigen::MatrixXd& a_mat, Eigen::VectorXd& b_vec,
                           int extra_cols) {
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    a_mat.setZero(S + (extra_cols > 0 ? 1 : 0), S * A + extra_cols);
    b_vec.setZero(a_mat.rows());
    for (int sp = 0; sp < S; ++sp) {
        for (int a = 0; a < A; ++a) {
            a_mat(sp, sp * A + a) += 1.0;
            for (int s = 0; s < S; ++s)
                a_mat(sp, s * A + a) -= cmdp.discount * cmdp.transitions[a](s, sp);
        }
        b_vec(sp) = (1.0 - cmdp.discount) * cmdp.initial_dist(sp);
    }
}

inline ConstrainedOptimum optimum_from_occupancy(const TabularCmdp& cmdp,
                                                 const Eigen::VectorXd& x, bool feasible) {
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    ConstrainedOptimum out;
    out.feasible = feasible;
    out.occupancy.resize(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) out.occupancy(s, a) = std::max(x(s * A + a), 0.0);
    out.policy.resize(S, A);
    for (int s = 0; s < S; ++s) {
        const double marginal = out.occupancy.row(s).sum();
        if (marginal > 1e-12)
            out.policy.row(s) = out.occupancy.row(s) / marginal;
        else
            out.policy.row(s).setConstant(1.0 / A);
    }
    const double scale = 1.0 / (1.0 - cmdp.discount);
    out.optimal_reward_value = scale * (out.occupancy.array() * cmdp.reward.array()).sum();
    out.optimal_cost_value = scale * (out.occupancy.array() * cmdp.cost.array()).sum();
    return out;
}

}  // namespace detail

/// Maximizes the reward value over occupancy measures subject to the budget.
/// LP failures are surfaced as exceptions; they are not silently retried.
inline ConstrainedOptimum solve_constrained_optimum(const TabularCmdp& cmdp) {
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    SimplexSolver solver;

    // Feasibility probe: minimize the cost value over the flow polytope.
    {
        Eigen::MatrixXd a_mat;
        Eigen::VectorXd b_vec;
        detail::fill_flow_rows(cmdp, a_mat, b_vec, 0);
        Eigen::VectorXd c_vec(S * A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) c_vec(s * A + a) = cmdp.cost(s, a);
        const LpResult min_cost = solver.solve(a_mat, b_vec, c_vec);
        if (min_cost.status != LpStatus::Optimal)
            throw std::runtime_error("occupancy LP failed on the cost-minimization probe");
        const double min_cost_value = min_cost.objective / (1.0 - cmdp.discount);
        if (min_cost_value > cmdp.budget + 1e-9)
            return detail::optimum_from_occupancy(cmdp, min_cost.x, false);
    }

    // Budgeted program: maximize reward with one slack column on the cost row.
    Eigen::MatrixXd a_mat;
    Eigen::VectorXd b_vec;
    detail::fill_flow_rows(cmdp, a_mat, b_vec, 1);
    const int slack = S * A;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) a_mat(S, s * A + a) = cmdp.cost(s, a);
    a_mat(S, slack) = 1.0;
    b_vec(S) = (1.0 - cmdp.discount) * cmdp.budget;

    Eigen::VectorXd c_vec = Eigen::VectorXd::Zero(S * A + 1);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) c_vec(s * A + a) = -cmdp.reward(s, a);
    const LpResult result = solver.solve(a_mat, b_vec, c_vec);
    if (result.status != LpStatus::Optimal)
        throw std::runtime_error("occupancy LP failed on the budgeted program");
    return detail::optimum_from_occupancy(cmdp, result.x, true);
}

}  // namespace espo
