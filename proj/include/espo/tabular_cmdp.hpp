#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace espo {

/// Finite CMDP with a single cost constraint.
///
/// Conventions: `transitions[a](s, s')` is the probability of moving from s
/// to s' under action a; `reward(s, a)` and `cost(s, a)` are immediate
/// signals in [0, v_max]; a policy is feasible when its discounted cost
/// value from `initial_dist` is at most `budget`.
struct TabularCmdp {
    int num_states = 0;
    int num_actions = 0;
    std::vector<Eigen::MatrixXd> transitions;  // [a](s, s')
    Eigen::MatrixXd reward;                    // (s, a)
    Eigen::MatrixXd cost;                      // (s, a)
    double budget = 0.0;
    double discount = 0.9;
    Eigen::VectorXd initial_dist;
    double v_max = 1.0;
};

/// One broken instance invariant, with enough context to locate it.
struct CmdpViolation {
    std::string what;
    int state = -1;
    int action = -1;
    double magnitude = 0.0;
};

/// Checks every instance invariant and reports all violations (never throws;
/// an empty result means the instance is well formed).
inline std::vector<CmdpViolation> validate(const TabularCmdp& cmdp) {
    std::vector<CmdpViolation> out;
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    if (S <= 0 || A <= 0) {
        out.push_back({"num_states/num_actions must be positive", -1, -1, 0.0});
        return out;
    }
    if (!(cmdp.v_max > 0.0)) out.push_back({"v_max must be positive", -1, -1, cmdp.v_max});
    if (!(cmdp.discount >= 0.0 && cmdp.discount < 1.0))
        out.push_back({"discount outside [0, 1)", -1, -1, cmdp.discount});
    if (!(cmdp.budget >= 0.0)) out.push_back({"budget must be nonnegative", -1, -1, cmdp.budget});

    if (static_cast<int>(cmdp.transitions.size()) != A ||
        cmdp.reward.rows() != S || cmdp.reward.cols() != A ||
        cmdp.cost.rows() != S || cmdp.cost.cols() != A ||
        cmdp.initial_dist.size() != S) {
        out.push_back({"shape mismatch between fields", -1, -1, 0.0});
        return out;
    }
    for (int a = 0; a < A; ++a) {
        if (cmdp.transitions[a].rows() != S || cmdp.transitions[a].cols() != S) {
            out.push_back({"transition matrix shape mismatch", -1, a, 0.0});
            return out;
        }
    }

    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const double row_sum = cmdp.transitions[a].row(s).sum();
            if (std::abs(row_sum - 1.0) > 1e-9)
                out.push_back({"transition row does not sum to 1", s, a, row_sum - 1.0});
            const double min_p = cmdp.transitions[a].row(s).minCoeff();
            if (min_p < 0.0) out.push_back({"negative transition probability", s, a, min_p});
            if (cmdp.reward(s, a) < 0.0 || cmdp.reward(s, a) > cmdp.v_max)
                out.push_back({"reward out of range", s, a, cmdp.reward(s, a)});
            if (cmdp.cost(s, a) < 0.0 || cmdp.cost(s, a) > cmdp.v_max)
                out.push_back({"cost out of range", s, a, cmdp.cost(s, a)});
        }
    }
    const double rho_sum = cmdp.initial_dist.sum();
    if (std::abs(rho_sum - 1.0) > 1e-9)
        out.push_back({"initial distribution does not sum to 1", -1, -1, rho_sum - 1.0});
    const double rho_min = cmdp.initial_dist.minCoeff();
    if (rho_min < 0.0) out.push_back({"negative initial probability", -1, -1, rho_min});
    return out;
}

inline void require_valid(const TabularCmdp& cmdp) {
    const auto violations = validate(cmdp);
    if (!violations.empty()) {
        std::string msg = "invalid CMDP instance: " + violations.front().what;
        if (violations.front().state >= 0)
            msg += " at state " + std::to_string(violations.front().state);
        throw std::invalid_argument(msg);
    }
}

}  // namespace espo
