#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "espo/policy_values.hpp"
#include "espo/softmax_policy.hpp"
#include "espo/tabular_cmdp.hpp"
#include "espo/value_iteration.hpp"

namespace espo {

/// Gradient norms below this are treated as degenerate (no usable direction).
inline constexpr double kDegenerateGradientNorm = 1e-12;

/// Reward-ascent gradient g_r and cost-descent gradient g_c of the scalar
/// values, as logit tables. `conflict` is the sign test on their inner
/// product: dot < 0 means the two improvement directions oppose each other
/// (angle strictly beyond 90 degrees); dot == 0 counts as aligned.
struct GradientPair {
    Eigen::MatrixXd g_reward;        // ascent on V_r(rho)
    Eigen::MatrixXd g_cost_descent;  // descent on V_c(rho), i.e. -grad V_c(rho)
    double norm_reward = 0.0;
    double norm_cost = 0.0;
    double dot = 0.0;
    bool conflict = false;
    bool degenerate = false;  // either norm below kDegenerateGradientNorm
};

/// Softmax policy gradient of V(rho) with respect to the logits:
/// dV/dw(s,a) = d_rho(s) pi(a|s) A(s,a) / (1 - gamma).
/// For Objective::Cost the returned table is negated, so it is the descent
/// direction on the cost value.
inline Eigen::MatrixXd exact_gradient(const TabularCmdp& cmdp, const SoftmaxPolicy& policy,
                                      const ValueBundle& bundle, Objective objective) {
    const Eigen::MatrixXd& adv =
        (objective == Objective::Reward) ? bundle.adv_reward : bundle.adv_cost;
    const double sign = (objective == Objective::Reward) ? 1.0 : -1.0;
    const double scale = sign / (1.0 - cmdp.discount);
    return scale * (bundle.visitation.asDiagonal() * (policy.probs().array() * adv.array()).matrix());
}

/// Gradient pair from arbitrary Q tables (exact Q or sampled estimates) and
/// an exact visitation vector. Advantages are re-centred per state so the
/// result stays in the softmax tangent space even for noisy inputs.
inline GradientPair gradient_pair_from_q(const TabularCmdp& cmdp, const SoftmaxPolicy& policy,
                                         const Eigen::MatrixXd& q_reward,
                                         const Eigen::MatrixXd& q_cost,
                                         const Eigen::VectorXd& visitation) {
    const double scale = 1.0 / (1.0 - cmdp.discount);
    const Eigen::VectorXd v_r = (policy.probs().array() * q_reward.array()).rowwise().sum();
    const Eigen::VectorXd v_c = (policy.probs().array() * q_cost.array()).rowwise().sum();
    const Eigen::MatrixXd adv_r = q_reward.colwise() - v_r;
    const Eigen::MatrixXd adv_c = q_cost.colwise() - v_c;

    GradientPair pair;
    pair.g_reward =
        scale * (visitation.asDiagonal() * (policy.probs().array() * adv_r.array()).matrix());
    pair.g_cost_descent =
        -scale * (visitation.asDiagonal() * (policy.probs().array() * adv_c.array()).matrix());
    pair.norm_reward = pair.g_reward.norm();
    pair.norm_cost = pair.g_cost_descent.norm();
    pair.dot = (pair.g_reward.array() * pair.g_cost_descent.array()).sum();
    pair.degenerate =
        pair.norm_reward < kDegenerateGradientNorm || pair.norm_cost < kDegenerateGradientNorm;
    pair.conflict = !pair.degenerate && pair.dot < 0.0;
    return pair;
}

inline GradientPair exact_gradient_pair(const TabularCmdp& cmdp, const SoftmaxPolicy& policy,
                                        const ValueBundle& bundle) {
    return gradient_pair_from_q(cmdp, policy, bundle.q_reward, bundle.q_cost, bundle.visitation);
}

/// Projects each gradient onto the normal plane of the other and mixes the
/// two parts with weights (x_r, x_c). Only meaningful for conflicting pairs.
inline Eigen::MatrixXd project_conflicting(const Eigen::MatrixXd& g_r, const Eigen::MatrixXd& g_c,
                                           double x_r, double x_c) {
    const double norm_r_sq = g_r.squaredNorm();
    const double norm_c_sq = g_c.squaredNorm();
    if (norm_r_sq < kDegenerateGradientNorm * kDegenerateGradientNorm ||
        norm_c_sq < kDegenerateGradientNorm * kDegenerateGradientNorm)
        throw std::invalid_argument("degenerate gradient in projection");
    const double dot = (g_r.array() * g_c.array()).sum();
    return x_r * (g_r - (dot / norm_c_sq) * g_c) + x_c * (g_c - (dot / norm_r_sq) * g_r);
}

struct SpanDecomposition {
    double y_r = 0.0;
    double y_c = 0.0;
    double residual = 0.0;
    bool degenerate = false;  // g_r, g_c numerically collinear
};

/// Solves y_r g_r + y_c g_c = g in the least-squares sense via the 2x2
/// normal equations. Degenerate when the Gram determinant vanishes relative
/// to the gradient norms (collinear inputs).
inline SpanDecomposition decompose_in_span(const Eigen::MatrixXd& g, const Eigen::MatrixXd& g_r,
                                           const Eigen::MatrixXd& g_c) {
    SpanDecomposition out;
    const double rr = g_r.squaredNorm();
    const double cc = g_c.squaredNorm();
    const double rc = (g_r.array() * g_c.array()).sum();
    const double det = rr * cc - rc * rc;
    if (det < 1e-12 * rr * cc || rr == 0.0 || cc == 0.0) {
        out.degenerate = true;
        return out;
    }
    const double gr = (g.array() * g_r.array()).sum();
    const double gc = (g.array() * g_c.array()).sum();
    out.y_r = (cc * gr - rc * gc) / det;
    out.y_c = (rr * gc - rc * gr) / det;
    out.residual = (g - out.y_r * g_r - out.y_c * g_c).norm();
    return out;
}

}  // namespace espo
