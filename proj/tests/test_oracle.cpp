#include <cmath>

#include <gtest/gtest.h>

#include "espo/generators.hpp"
#include "espo/oracle.hpp"
#include "espo/policy_values.hpp"
#include "espo/rng.hpp"

namespace {

using namespace espo;

Eigen::MatrixXd logits_from_probs(const Eigen::MatrixXd& probs) {
    return probs.array().max(1e-300).log().matrix();
}

TabularCmdp bandit_instance() {
    TabularCmdp cmdp;
    cmdp.num_states = 1;
    cmdp.num_actions = 2;
    cmdp.transitions = {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
    cmdp.reward.resize(1, 2);
    cmdp.reward << 1.0, 0.0;
    cmdp.cost.resize(1, 2);
    cmdp.cost << 1.0, 0.0;
    cmdp.budget = 0.4;
    cmdp.discount = 0.0;
    cmdp.initial_dist = Eigen::VectorXd::Ones(1);
    return cmdp;
}

TEST(ValueIteration, SingleStateGeometricSeries) {
    TabularCmdp cmdp;
    cmdp.num_states = 1;
    cmdp.num_actions = 1;
    cmdp.transitions = {Eigen::MatrixXd::Ones(1, 1)};
    cmdp.reward = Eigen::MatrixXd::Ones(1, 1);
    cmdp.cost = Eigen::MatrixXd::Zero(1, 1);
    cmdp.budget = 0.0;
    cmdp.discount = 0.9;
    cmdp.initial_dist = Eigen::VectorXd::Ones(1);
    EXPECT_NEAR(value_iteration(cmdp, Objective::Reward, OptSense::Max).value_rho, 10.0, 1e-9);
}

TEST(ValueIteration, AgreesWithLpWhenConstraintVacuous) {
    TabularCmdp cmdp = make_random_cmdp(31, 7, 3, 3, 0.5);
    cmdp.cost.setZero();
    cmdp.budget = 0.0;
    const double vi = value_iteration(cmdp, Objective::Reward, OptSense::Max).value_rho;
    const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
    EXPECT_TRUE(optimum.feasible);
    EXPECT_NEAR(optimum.optimal_reward_value, vi, 1e-6);
}

TEST(ValueIteration, DominatesRandomPoliciesOnGridworld) {
    const TabularCmdp cmdp = make_gridworld(3, 3, {}, {2, 2}, 1.0);
    const double best = value_iteration(cmdp, Objective::Reward, OptSense::Max).value_rho;
    Rng rng(70);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd logits(9, 4);
        for (int s = 0; s < 9; ++s)
            for (int a = 0; a < 4; ++a) logits(s, a) = 4.0 * (rng.uniform01() - 0.5);
        EXPECT_GE(best + 1e-9, exact_policy_values(cmdp, SoftmaxPolicy(logits)).v_reward_rho);
    }
}

TEST(ConstrainedOptimum, BanditMixtureMatchesGridSearch) {
    const TabularCmdp cmdp = bandit_instance();
    const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);

    // Independent oracle: scan the mixing probability at 1e-4 resolution.
    double best_value = -1.0;
    for (int i = 0; i <= 10000; ++i) {
        const double p = i * 1e-4;
        const double cost = p * 1.0;
        if (cost > cmdp.budget + 1e-12) continue;
        best_value = std::max(best_value, p * 1.0);
    }
    EXPECT_NEAR(optimum.optimal_reward_value, best_value, 1e-6);
    EXPECT_NEAR(optimum.optimal_reward_value, 0.4, 1e-9);
    EXPECT_NEAR(optimum.policy(0, 0), 0.4, 1e-9);
    EXPECT_TRUE(optimum.feasible);
}

TEST(ConstrainedOptimum, InfeasibleBudgetReturnsCostMinimizer) {
    TabularCmdp cmdp = make_random_cmdp(12, 6, 3, 3, 0.5);
    const double cost_min = value_iteration(cmdp, Objective::Cost, OptSense::Min).value_rho;
    cmdp.budget = std::max(0.0, cost_min - 0.25);
    const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
    EXPECT_FALSE(optimum.feasible);
    EXPECT_NEAR(optimum.optimal_cost_value, cost_min, 1e-6);
}

TEST(ConstrainedOptimum, OccupancyInvariantsHold) {
    for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
        const TabularCmdp cmdp = make_random_cmdp(seed, 8, 4, 3, 0.35);
        const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
        ASSERT_TRUE(optimum.feasible);
        EXPECT_NEAR(optimum.occupancy.sum(), 1.0, 1e-7);
        EXPECT_GE(optimum.occupancy.minCoeff(), 0.0);
        const double scale = 1.0 / (1.0 - cmdp.discount);
        EXPECT_LE(scale * (optimum.occupancy.array() * cmdp.cost.array()).sum(),
                  cmdp.budget + 1e-7);
        for (int sp = 0; sp < cmdp.num_states; ++sp) {
            double inflow = (1.0 - cmdp.discount) * cmdp.initial_dist(sp);
            for (int s = 0; s < cmdp.num_states; ++s)
                for (int a = 0; a < cmdp.num_actions; ++a)
                    inflow += cmdp.discount * optimum.occupancy(s, a) * cmdp.transitions[a](s, sp);
            EXPECT_NEAR(optimum.occupancy.row(sp).sum(), inflow, 1e-7);
        }
        // Policy extraction rule.
        for (int s = 0; s < cmdp.num_states; ++s) {
            const double marginal = optimum.occupancy.row(s).sum();
            for (int a = 0; a < cmdp.num_actions; ++a) {
                const double expected = marginal > 1e-12 ? optimum.occupancy(s, a) / marginal
                                                         : 1.0 / cmdp.num_actions;
                EXPECT_NEAR(optimum.policy(s, a), expected, 1e-12);
            }
        }
    }
}

TEST(ConstrainedOptimum, ExtractedPolicyReproducesLpValues) {
    const TabularCmdp cmdp = make_random_cmdp(55, 10, 4, 4, 0.45);
    const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
    const ValueBundle bundle =
        exact_policy_values(cmdp, SoftmaxPolicy(logits_from_probs(optimum.policy)));
    EXPECT_NEAR(bundle.v_reward_rho, optimum.optimal_reward_value, 1e-6);
    EXPECT_NEAR(bundle.v_cost_rho, optimum.optimal_cost_value, 1e-6);
}

TEST(ConstrainedOptimum, DominatesRandomFeasiblePolicies) {
    Rng rng(808);
    for (const std::uint64_t seed : {10ULL, 11ULL, 12ULL}) {
        const TabularCmdp cmdp = make_random_cmdp(seed, 6, 3, 3, 0.5);
        const ConstrainedOptimum optimum = solve_constrained_optimum(cmdp);
        const Eigen::MatrixXd anchor = optimum.policy;  // feasible by construction
        int feasible_checked = 0;
        while (feasible_checked < 40) {
            Eigen::MatrixXd probs(6, 3);
            for (int s = 0; s < 6; ++s) {
                double total = 0.0;
                for (int a = 0; a < 3; ++a) {
                    probs(s, a) = rng.exponential();
                    total += probs(s, a);
                }
                probs.row(s) /= total;
            }
            // Blend toward the feasible anchor until the budget holds.
            for (double alpha = 1.0; alpha >= 0.0; alpha -= 0.25) {
                const Eigen::MatrixXd mix = alpha * probs + (1.0 - alpha) * anchor;
                const ValueBundle bundle =
                    exact_policy_values(cmdp, SoftmaxPolicy(logits_from_probs(mix)));
                if (bundle.v_cost_rho <= cmdp.budget + 1e-9) {
                    EXPECT_LE(bundle.v_reward_rho, optimum.optimal_reward_value + 1e-6);
                    ++feasible_checked;
                    break;
                }
            }
        }
    }
}

}  // namespace
