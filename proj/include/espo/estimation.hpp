#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "espo/rng.hpp"
#include "espo/softmax_policy.hpp"
#include "espo/tabular_cmdp.hpp"

namespace espo {

/// Monte-Carlo Q estimates for one policy, with exact accounting of the
/// simulator transitions consumed. Sampling costs across algorithms are
/// always compared in this currency.
struct QEstimate {
    Eigen::MatrixXd q_bar_r;
    Eigen::MatrixXd q_bar_c;
    int rollouts_per_pair = 0;
    int horizon = 0;
    long long transitions_consumed = 0;  // == S * A * rollouts_per_pair * horizon
    std::uint64_t rng_seed_used = 0;
};

/// Truncation horizon that caps the discarded tail of the discounted sum at
/// `tail_bound` (absolute, given rewards in [0, v_max]).
inline int truncation_horizon(double discount, double v_max, double tail_bound = 0.01) {
    if (discount <= 0.0) return 1;
    const double ratio = tail_bound * (1.0 - discount) / v_max;
    if (ratio >= 1.0) return 1;
    return std::max(1, static_cast<int>(std::ceil(std::log(ratio) / std::log(discount))));
}

/// Generative-model evaluation: for every (s, a), runs
/// m = floor(sample_budget / (S A H)) truncated rollouts of horizon H
/// started at that pair and averages the discounted reward and cost sums.
/// Each pair draws from its own substream of `seed`, so the result does not
/// depend on evaluation order. Budget left over below one full rollout per
/// pair is discarded.
inline QEstimate estimate_q(const TabularCmdp& cmdp, const SoftmaxPolicy& policy,
                            long long sample_budget, std::uint64_t seed,
                            double tail_bound = 0.01) {
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    const int H = truncation_horizon(cmdp.discount, cmdp.v_max, tail_bound);
    const long long per_rollout_cost = static_cast<long long>(S) * A * H;
    const long long m = sample_budget / per_rollout_cost;
    if (m < 1)
        throw std::invalid_argument("sample budget below one rollout per state-action pair");

    QEstimate est;
    est.q_bar_r = Eigen::MatrixXd::Zero(S, A);
    est.q_bar_c = Eigen::MatrixXd::Zero(S, A);
    est.rollouts_per_pair = static_cast<int>(m);
    est.horizon = H;
    est.transitions_consumed = per_rollout_cost * m;
    est.rng_seed_used = seed;

    for (int s0 = 0; s0 < S; ++s0) {
        for (int a0 = 0; a0 < A; ++a0) {
            Rng rng(substream_seed(seed, static_cast<std::uint64_t>(s0) * A + a0));
            double sum_r = 0.0;
            double sum_c = 0.0;
            for (long long rollout = 0; rollout < m; ++rollout) {
                int s = s0;
                int a = a0;
                double disc = 1.0;
                for (int k = 0; k < H; ++k) {
                    sum_r += disc * cmdp.reward(s, a);
                    sum_c += disc * cmdp.cost(s, a);
                    disc *= cmdp.discount;
                    s = rng.categorical(cmdp.transitions[a].row(s));
                    a = rng.categorical(policy.probs().row(s));
                }
            }
            est.q_bar_r(s0, a0) = sum_r / static_cast<double>(m);
            est.q_bar_c(s0, a0) = sum_c / static_cast<double>(m);
        }
    }
    return est;
}

/// V(rho) from a Q table: sum_s rho(s) sum_a pi(a|s) Q(s, a), for both
/// objectives.
inline std::pair<double, double> v_from_estimate(const QEstimate& est, const SoftmaxPolicy& policy,
                                                 const Eigen::VectorXd& initial_dist) {
    if (est.q_bar_r.rows() != policy.num_states() || est.q_bar_r.cols() != policy.num_actions() ||
        initial_dist.size() != policy.num_states())
        throw std::invalid_argument("estimate/policy shape mismatch");
    const double v_r =
        initial_dist.dot((policy.probs().array() * est.q_bar_r.array()).rowwise().sum().matrix());
    const double v_c =
        initial_dist.dot((policy.probs().array() * est.q_bar_c.array()).rowwise().sum().matrix());
    return {v_r, v_c};
}

}  // namespace espo
