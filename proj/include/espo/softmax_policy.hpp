#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace espo {

/// Tabular softmax policy: pi(a|s) = exp(w(s,a)) / sum_a' exp(w(s,a')).
/// Immutable after construction; updates produce new policies.
class SoftmaxPolicy {
  public:
    explicit SoftmaxPolicy(Eigen::MatrixXd logits) : logits_(std::move(logits)) {
        if (!logits_.allFinite()) throw std::invalid_argument("non-finite logit");
        probs_.resizeLike(logits_);
        for (Eigen::Index s = 0; s < logits_.rows(); ++s) {
            // Per-state max subtraction keeps exp() in range.
            const double shift = logits_.row(s).maxCoeff();
            probs_.row(s) = (logits_.row(s).array() - shift).exp();
            probs_.row(s) /= probs_.row(s).sum();
        }
    }

    static SoftmaxPolicy uniform(int num_states, int num_actions) {
        return SoftmaxPolicy(Eigen::MatrixXd::Zero(num_states, num_actions));
    }

    int num_states() const { return static_cast<int>(logits_.rows()); }
    int num_actions() const { return static_cast<int>(logits_.cols()); }

    const Eigen::MatrixXd& logits() const { return logits_; }
    const Eigen::MatrixXd& probs() const { return probs_; }
    double prob(int s, int a) const { return probs_(s, a); }

  private:
    Eigen::MatrixXd logits_;
    Eigen::MatrixXd probs_;
};

inline SoftmaxPolicy policy_from_logits(const Eigen::MatrixXd& logits) {
    return SoftmaxPolicy(logits);
}

}  // namespace espo
