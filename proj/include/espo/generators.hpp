#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "espo/rng.hpp"
#include "espo/tabular_cmdp.hpp"
#include "espo/value_iteration.hpp"

namespace espo {

/// Garnet-style random instance. Each (s, a) transitions to `branching`
/// distinct successors with Dirichlet(1) probabilities; rewards and costs
/// are uniform in [0, 1]. The budget is placed at `budget_quantile` between
/// the cost-minimizing and cost-maximizing policy values so the constraint
/// is nontrivially binding. Deterministic in `seed`.
inline TabularCmdp make_random_cmdp(std::uint64_t seed, int num_states, int num_actions,
                                    int branching, double budget_quantile,
                                    double discount = 0.9) {
    if (num_states <= 0 || num_actions <= 0)
        throw std::invalid_argument("num_states/num_actions must be positive");
    if (branching <= 0 || branching > num_states)
        throw std::invalid_argument("branching must be in [1, num_states]");
    if (!(budget_quantile > 0.0 && budget_quantile <= 1.0))
        throw std::invalid_argument("budget_quantile must be in (0, 1]");
    if (!(discount >= 0.0 && discount < 1.0))
        throw std::invalid_argument("discount must be in [0, 1)");

    Rng rng(seed);
    TabularCmdp cmdp;
    cmdp.num_states = num_states;
    cmdp.num_actions = num_actions;
    cmdp.discount = discount;
    cmdp.v_max = 1.0;
    cmdp.reward.resize(num_states, num_actions);
    cmdp.cost.resize(num_states, num_actions);
    cmdp.transitions.assign(num_actions, Eigen::MatrixXd::Zero(num_states, num_states));
    cmdp.initial_dist = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);

    std::vector<int> indices(num_states);
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            // Partial Fisher-Yates picks `branching` distinct successors.
            for (int i = 0; i < num_states; ++i) indices[i] = i;
            for (int i = 0; i < branching; ++i) {
                const int j = i + static_cast<int>(rng.below(num_states - i));
                std::swap(indices[i], indices[j]);
            }
            double total = 0.0;
            std::vector<double> mass(branching);
            for (int i = 0; i < branching; ++i) {
                mass[i] = rng.exponential();
                total += mass[i];
            }
            for (int i = 0; i < branching; ++i)
                cmdp.transitions[a](s, indices[i]) = mass[i] / total;
            cmdp.reward(s, a) = rng.uniform01();
            cmdp.cost(s, a) = rng.uniform01();
        }
    }

    const double cost_min = value_iteration(cmdp, Objective::Cost, OptSense::Min).value_rho;
    const double cost_max = value_iteration(cmdp, Objective::Cost, OptSense::Max).value_rho;
    cmdp.budget = cost_min + budget_quantile * (cost_max - cost_min);
    return cmdp;
}

struct GridCell {
    int row = 0;
    int col = 0;
    friend bool operator<(const GridCell& a, const GridCell& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    }
    friend bool operator==(const GridCell& a, const GridCell& b) {
        return a.row == b.row && a.col == b.col;
    }
};

/// Four-action gridworld. Moves clamp at walls; with probability 0.1 the
/// agent slips to a uniformly random neighbouring direction. Entering the
/// goal pays reward 1 and the goal absorbs; each step spent on a hazard
/// cell costs 1. Start distribution is a point mass at cell (0, 0).
inline TabularCmdp make_gridworld(int width, int height, const std::set<GridCell>& hazards,
                                  GridCell goal, double budget, double discount = 0.9) {
    if (width < 2 || height < 2) throw std::invalid_argument("grid dimensions must be >= 2");
    auto in_bounds = [&](const GridCell& c) {
        return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
    };
    if (!in_bounds(goal)) throw std::invalid_argument("goal out of bounds");
    for (const auto& h : hazards) {
        if (!in_bounds(h)) throw std::invalid_argument("hazard out of bounds");
        if (h == goal) throw std::invalid_argument("goal must not be a hazard");
    }

    const int S = width * height;
    const int A = 4;  // up, down, left, right
    auto index = [&](int row, int col) { return row * width + col; };
    const int goal_index = index(goal.row, goal.col);

    auto move = [&](int s, int a) {
        int row = s / width;
        int col = s % width;
        switch (a) {
            case 0: row = std::max(row - 1, 0); break;
            case 1: row = std::min(row + 1, height - 1); break;
            case 2: col = std::max(col - 1, 0); break;
            default: col = std::min(col + 1, width - 1); break;
        }
        return index(row, col);
    };

    TabularCmdp cmdp;
    cmdp.num_states = S;
    cmdp.num_actions = A;
    cmdp.discount = discount;
    cmdp.budget = budget;
    cmdp.v_max = 1.0;
    cmdp.transitions.assign(A, Eigen::MatrixXd::Zero(S, S));
    cmdp.reward = Eigen::MatrixXd::Zero(S, A);
    cmdp.cost = Eigen::MatrixXd::Zero(S, A);
    cmdp.initial_dist = Eigen::VectorXd::Zero(S);
    cmdp.initial_dist(index(0, 0)) = 1.0;

    for (int s = 0; s < S; ++s) {
        const bool hazard = hazards.count({s / width, s % width}) > 0;
        for (int a = 0; a < A; ++a) {
            if (s == goal_index) {
                cmdp.transitions[a](s, s) = 1.0;  // absorbing, no further reward
                continue;
            }
            cmdp.transitions[a](s, move(s, a)) += 0.9;
            for (int slip = 0; slip < A; ++slip)
                cmdp.transitions[a](s, move(s, slip)) += 0.1 / A;
            cmdp.reward(s, a) = cmdp.transitions[a](s, goal_index);
            if (hazard) cmdp.cost(s, a) = 1.0;
        }
    }
    return cmdp;
}

}  // namespace espo
