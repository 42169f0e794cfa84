#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace espo {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
    LpStatus status = LpStatus::Optimal;
    Eigen::VectorXd x;
    double objective = 0.0;
};

/// Dense two-phase primal simplex for
///     min c'x  subject to  A x = b,  x >= 0.
/// Bland's rule throughout, so it cannot cycle. Intended for the small,
/// well-scaled programs this project produces (hundreds of variables);
/// inequality rows must be given slack variables by the caller.
class SimplexSolver {
  public:
    explicit SimplexSolver(double eps = 1e-9) : eps_(eps) {}

    LpResult solve(Eigen::MatrixXd a, Eigen::VectorXd b, const Eigen::VectorXd& c) const {
        const int m = static_cast<int>(a.rows());
        const int n = static_cast<int>(a.cols());
        if (b.size() != m || c.size() != n) throw std::invalid_argument("LP shape mismatch");

        for (int i = 0; i < m; ++i) {
            if (b(i) < 0.0) {
                a.row(i) = -a.row(i);
                b(i) = -b(i);
            }
        }

        // Phase 1 tableau: [A  I | b], artificial basis, objective = sum of
        // artificials.
        Eigen::MatrixXd tab(m, n + m + 1);
        tab.leftCols(n) = a;
        tab.middleCols(n, m) = Eigen::MatrixXd::Identity(m, m);
        tab.col(n + m) = b;
        std::vector<int> basis(m);
        for (int i = 0; i < m; ++i) basis[i] = n + i;

        Eigen::VectorXd phase1_cost = Eigen::VectorXd::Zero(n + m);
        phase1_cost.tail(m).setOnes();
        if (!run_phase(tab, basis, phase1_cost, n + m))
            throw std::runtime_error("phase-1 LP unbounded (cannot happen)");
        double artificial_value = 0.0;
        for (int i = 0; i < m; ++i)
            if (basis[i] >= n) artificial_value += tab(i, n + m);
        if (artificial_value > 1e-7) return {LpStatus::Infeasible, Eigen::VectorXd::Zero(n), 0.0};

        // Drive leftover zero-valued artificials out of the basis; rows with
        // no structural pivot are redundant constraints.
        std::vector<bool> keep_row(m, true);
        for (int i = 0; i < m; ++i) {
            if (basis[i] < n) continue;
            int pivot_col = -1;
            for (int j = 0; j < n; ++j) {
                if (std::abs(tab(i, j)) > eps_) {
                    pivot_col = j;
                    break;
                }
            }
            if (pivot_col < 0) {
                keep_row[i] = false;
                continue;
            }
            pivot(tab, basis, i, pivot_col);
        }

        // Compact the tableau to surviving rows and structural columns.
        int kept = 0;
        for (int i = 0; i < m; ++i) kept += keep_row[i] ? 1 : 0;
        Eigen::MatrixXd tab2(kept, n + 1);
        std::vector<int> basis2;
        basis2.reserve(kept);
        int r = 0;
        for (int i = 0; i < m; ++i) {
            if (!keep_row[i]) continue;
            tab2.row(r).head(n) = tab.row(i).head(n);
            tab2(r, n) = tab(i, n + m);
            basis2.push_back(basis[i]);
            ++r;
        }

        if (!run_phase(tab2, basis2, c, n)) return {LpStatus::Unbounded, Eigen::VectorXd::Zero(n), 0.0};

        LpResult out;
        out.x = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < kept; ++i) out.x(basis2[i]) = tab2(i, n);
        out.objective = c.dot(out.x);
        return out;
    }

  private:
    double eps_;

    static void pivot(Eigen::MatrixXd& tab, std::vector<int>& basis, int row, int col) {
        tab.row(row) /= tab(row, col);
        for (int i = 0; i < tab.rows(); ++i) {
            if (i == row || tab(i, col) == 0.0) continue;
            tab.row(i) -= tab(i, col) * tab.row(row);
        }
        basis[row] = col;
    }

    /// Runs simplex iterations on the current tableau for the given costs
    /// over the first `num_vars` columns. Returns false iff unbounded.
    bool run_phase(Eigen::MatrixXd& tab, std::vector<int>& basis, const Eigen::VectorXd& cost,
                   int num_vars) const {
        const int m = static_cast<int>(tab.rows());
        const int rhs = static_cast<int>(tab.cols()) - 1;
        while (true) {
            // Reduced costs from the basis multipliers: z_j = c_j - y'A_j.
            Eigen::VectorXd basis_cost(m);
            for (int i = 0; i < m; ++i) basis_cost(i) = cost(basis[i]);
            int entering = -1;
            for (int j = 0; j < num_vars; ++j) {
                const double reduced = cost(j) - basis_cost.dot(tab.col(j));
                if (reduced < -eps_) {
                    entering = j;  // Bland: first eligible index
                    break;
                }
            }
            if (entering < 0) return true;

            int leaving = -1;
            double best_ratio = 0.0;
            for (int i = 0; i < m; ++i) {
                if (tab(i, entering) <= eps_) continue;
                const double ratio = tab(i, rhs) / tab(i, entering);
                if (leaving < 0 || ratio < best_ratio - 1e-12 ||
                    (std::abs(ratio - best_ratio) <= 1e-12 && basis[i] < basis[leaving])) {
                    leaving = i;
                    best_ratio = ratio;
                }
            }
            if (leaving < 0) return false;
            pivot(tab, basis, leaving, entering);
        }
    }
};

}  // namespace espo
