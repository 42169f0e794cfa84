#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "espo/softmax_policy.hpp"

namespace espo {

/// The four update modes of the optimization scheme. COST descends the cost
/// value, REWARD ascends the reward value, and the two SOFT modes mix both
/// objectives (with projection-derived weights under conflict).
enum class UpdateMode { Cost, SoftConflict, SoftNoConflict, Reward };

inline const char* to_string(UpdateMode mode) {
    switch (mode) {
        case UpdateMode::Cost: return "COST";
        case UpdateMode::SoftConflict: return "SOFT_CONFLICT";
        case UpdateMode::SoftNoConflict: return "SOFT_NO_CONFLICT";
        default: return "REWARD";
    }
}

/// Mixture weights for the NPG exponent. In SOFT_NO_CONFLICT these are
/// (x_r, x_c) with x_r + x_c = 1; in SOFT_CONFLICT they are the span
/// coefficients of the projected gradient. Ignored in the pure modes.
struct NpgWeights {
    double w_reward = 0.0;
    double w_cost = 0.0;
};

/// NPG exponent table for one mode: COST uses -Q_c (descent on cost),
/// REWARD uses +Q_r, and the soft modes use w_r Q_r - w_c Q_c.
inline Eigen::MatrixXd npg_exponent(const Eigen::MatrixXd& q_bar_r, const Eigen::MatrixXd& q_bar_c,
                                    UpdateMode mode, NpgWeights weights) {
    switch (mode) {
        case UpdateMode::Reward: return q_bar_r;
        case UpdateMode::Cost: return -q_bar_c;
        case UpdateMode::SoftNoConflict:
            if (weights.w_reward < 0.0 || weights.w_cost < 0.0 ||
                std::abs(weights.w_reward + weights.w_cost - 1.0) > 1e-9)
                throw std::invalid_argument("soft weights must be a convex combination");
            [[fallthrough]];
        default: return weights.w_reward * q_bar_r - weights.w_cost * q_bar_c;
    }
}

/// One NPG step. Multiplicatively this is
///   pi'(a|s) = pi(a|s) exp(eta G(s,a) / (1 - gamma)) / Z(s);
/// the logits realize it additively as w + eta G / (1 - gamma), which is the
/// same policy because the per-state normalizer absorbs any constant.
inline SoftmaxPolicy npg_update(const SoftmaxPolicy& policy, const Eigen::MatrixXd& q_bar_r,
                                const Eigen::MatrixXd& q_bar_c, UpdateMode mode, NpgWeights weights,
                                double learning_rate, double discount) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    const Eigen::MatrixXd exponent = npg_exponent(q_bar_r, q_bar_c, mode, weights);
    if (!exponent.allFinite()) throw std::invalid_argument("non-finite NPG exponent");
    return SoftmaxPolicy(policy.logits() + (learning_rate / (1.0 - discount)) * exponent);
}

}  // namespace espo
