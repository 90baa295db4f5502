#pragma once

#include <string>
#include <vector>

#include "tsmpc/solver.hpp"

namespace tsmpc {

enum class PlantKind { Nominal, Lagged };

struct ClosedLoopConfig {
  double duration = 3.0;
  double control_dt = 0.01;
  PlantKind plant = PlantKind::Nominal;
  double alpha_internal = 15.0;
  SolverConfig solver;
  // Divergence guard: |e_i| beyond factor * |e_i(0)| (floored for near-zero
  // initial errors) or any state entry beyond state_limit aborts the run.
  double guard_error_factor = 10.0;
  double guard_error_floor = 1e-2;
  double guard_state_limit = 1e6;
};

struct TickRecord {
  double t = 0.0;
  State x;                  // plant state at the start of the tick
  Eigen::VectorXd u;        // applied command
  Eigen::VectorXd e;        // stacked task-error channels at x
  double kkt = 0.0;
  double solve_ms = 0.0;
  double violation_max = 0.0;  // hard rows at (x, u)
  bool converged = false;
  int iterations = 0;
};

struct RunLog {
  std::vector<TickRecord> ticks;
  double dt = 0.0;
  bool diverged = false;
  std::string divergence_reason;
  Eigen::VectorXd e0;  // guard reference
};

struct SolveTimeStats {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  int ticks = 0;
  int non_converged = 0;
};

struct RunMetrics {
  Eigen::VectorXd rmse;      // per error channel
  Eigen::VectorXd peak_abs;  // per error channel
  double max_violation = 0.0;
  double smoothness = 0.0;  // sum of ||u_k - u_{k-1}||^2
  SolveTimeStats solve;
};

// Receding-horizon loop: solve, apply u0, step the plant, log, repeat.
// The controller always predicts with the nominal model; the plant may lag.
RunLog run_closed_loop(const OcpSpec& spec, const State& x0, const ClosedLoopConfig& cfg);

RunMetrics compute_metrics(const RunLog& log);

// Earliest time after which |e_ch| stays at or below fraction * |e_ch(0)|.
// Returns infinity when the channel never settles.
double settling_time(const RunLog& log, int channel, double fraction);

struct DecayEnvelope {
  bool pass = false;
  double max_deviation_fraction = 0.0;  // of |e(0)|
};

// Deviation of a logged channel from the analytic first-order response
// e(0) * exp(-alpha (t - t0)).
DecayEnvelope decay_envelope_check(const RunLog& log, int channel, double alpha,
                                   double tol_fraction);

// Log-linear regression of ln|e| against time over the initial decay.
double fit_decay_rate(const RunLog& log, int channel);

}  // namespace tsmpc
