#pragma once

#include <vector>

#include "tsmpc/ocp.hpp"

namespace tsmpc {

struct SolverConfig {
  int max_sqp_iters = 50;        // total Gauss-Newton iterations across AL rounds
  double kkt_tol = 1e-6;
  double constraint_tol = 1e-6;
  double ls_backtrack = 0.5;
  double ls_armijo = 1e-4;       // sufficient-decrease coefficient
  double al_penalty = 10.0;      // initial rho
  double al_growth = 10.0;
  int max_al_iters = 8;
  bool warm_start = true;        // carry multipliers and penalty across solves
};

enum class SolveStatus { Converged, MaxIterations, Diverged, InfeasibleConstraints };

struct SolveResult {
  DecisionTrajectory z;
  SolveStatus status = SolveStatus::MaxIterations;
  bool converged = false;
  double kkt_residual = 0.0;          // max of stationarity, defect, complementarity
  double constraint_violation = 0.0;  // hard and slack-shifted soft rows
  int sqp_iterations = 0;
  int al_iterations = 0;
  double solve_ms = 0.0;
  std::vector<double> merit_history;  // accepted merit values, one per iteration
};

// Zero controls and slacks rolled out from x0 through the stage dynamics.
DecisionTrajectory cold_start(const Program& p, const Eigen::VectorXd& x0);

// Receding-horizon shift: drop stage 0, duplicate the last input, integrate
// one new terminal state.
DecisionTrajectory warm_start_shift(const Program& p, const DecisionTrajectory& prev);

// First-order optimality of a trajectory with zero inequality multipliers:
// max over stages of reduced-gradient norm, dynamics defect and violation.
// Exact KKT residual for programs without inequality rows.
double kkt_residual(const Program& p, const DecisionTrajectory& z);

// Gauss-Newton SQP over the stage-wise program: Riccati backward sweep on
// the defect-aware LQ model, l1-merit line search, PHR augmented Lagrangian
// for the inequality rows. Keeps multipliers between solves for warm starts.
class SolverWorkspace {
 public:
  explicit SolverWorkspace(SolverConfig cfg = {}) : cfg_(cfg) {}

  const SolverConfig& config() const { return cfg_; }
  void reset();

  SolveResult solve(const Program& p, const Eigen::VectorXd& x_init,
                    const DecisionTrajectory* guess = nullptr);

 private:
  SolverConfig cfg_;
  std::vector<Eigen::VectorXd> lam_;
  double rho_ = 0.0;
  int lam_rows_ = -1;
  int lam_stages_ = -1;
};

inline SolveResult solve(const Program& p, const Eigen::VectorXd& x_init,
                         const DecisionTrajectory* guess = nullptr,
                         SolverConfig cfg = {}) {
  SolverWorkspace ws(cfg);
  return ws.solve(p, x_init, guess);
}

}  // namespace tsmpc
