#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsmpc/model.hpp"
#include "tsmpc/task.hpp"

namespace tsmpc {

// Stage cost family for a task term:
//   TrackingLq        : e' Q e                       (cost A)
//   TrackingLqRates   : [e; edot]' Q [e; edot]       (cost B, Q is 2m x 2m)
//   FirstOrderDecay   : (edot + K_e e)' W (edot + K_e e)   (cost C)
// Every program additionally carries the shared effort term mu * u' W_r u.
enum class CostKind { TrackingLq, TrackingLqRates, FirstOrderDecay };

struct TaskCostSpec {
  TaskError task;
  CostKind kind = CostKind::FirstOrderDecay;
  Eigen::MatrixXd weight;      // Q, Q_B or W_s depending on kind
  Eigen::VectorXd decay_gain;  // K_e diagonal, FirstOrderDecay only
};

// Rows h(x) >= 0, imposed through the barrier rows hdot + K_h h >= 0.
// Soft rows get a one-sided slack s with penalty w_i s_i^2; hard rows do not.
struct ConstraintSpec {
  TaskError h;
  Eigen::VectorXd gain;         // K_h per row
  bool hard = true;
  Eigen::VectorXd soft_weight;  // per row, soft only
};

struct InputBounds {
  Eigen::VectorXd lower;  // empty = unbounded
  Eigen::VectorXd upper;
};

struct OcpSpec {
  int horizon = 30;
  double dt = 0.01;
  double mu = 1e-5;
  Eigen::MatrixXd Wr;  // control effort weight, n_q x n_q
  std::vector<TaskCostSpec> costs;
  std::vector<ConstraintSpec> constraints;
  InputBounds bounds;
};

// Weight mapping that makes cost B reproduce cost C:
//   [e; edot]' Q_B [e; edot] == (edot + K_e e)' W_s (edot + K_e e)
inline Eigen::MatrixXd qb_from_decay(const Eigen::MatrixXd& Ws,
                                     const Eigen::VectorXd& Ke) {
  const int m = static_cast<int>(Ws.rows());
  if (Ws.cols() != m || Ke.size() != m)
    throw std::invalid_argument("qb_from_decay: dimension mismatch");
  const Eigen::MatrixXd K = Ke.asDiagonal();
  Eigen::MatrixXd Q(2 * m, 2 * m);
  Q.topLeftCorner(m, m) = K.transpose() * Ws * K;
  Q.topRightCorner(m, m) = K.transpose() * Ws;
  Q.bottomLeftCorner(m, m) = Ws * K;
  Q.bottomRightCorner(m, m) = Ws;
  return Q;
}

inline double stage_cost_A(const TaskError& task, const State& x, const ControlInput& u,
                           const Eigen::MatrixXd& Q, double mu,
                           const Eigen::MatrixXd& Wr) {
  const Eigen::VectorXd e = task_error(task, x);
  return e.dot(Q * e) + mu * u.qddot_cmd.dot(Wr * u.qddot_cmd);
}

inline double stage_cost_B(const TaskError& task, const State& x, const ControlInput& u,
                           const Eigen::MatrixXd& Qb, double mu,
                           const Eigen::MatrixXd& Wr) {
  const Eigen::VectorXd e = task_error(task, x);
  const Eigen::VectorXd edot = error_rate(task, x, u);
  Eigen::VectorXd z(e.size() + edot.size());
  z << e, edot;
  return z.dot(Qb * z) + mu * u.qddot_cmd.dot(Wr * u.qddot_cmd);
}

inline double stage_cost_C(const TaskError& task, const State& x, const ControlInput& u,
                           const Eigen::MatrixXd& Ws, const Eigen::VectorXd& Ke,
                           double mu, const Eigen::MatrixXd& Wr) {
  const Eigen::VectorXd e = task_error(task, x);
  const Eigen::VectorXd s = error_rate(task, x, u) + Ke.asDiagonal() * e;
  return s.dot(Ws * s) + mu * u.qddot_cmd.dot(Wr * u.qddot_cmd);
}

// Assembled stage-wise problem the solver consumes. Per stage the decision
// is (x_k, w_k) with w = [u; s], u the commanded accelerations and s the
// stacked soft-constraint slacks. Dynamics are affine: x+ = A x + B w + c.
struct Program {
  int N = 0;
  int n_q = 0;
  int nx = 0;
  int nu = 0;  // controls
  int ns = 0;  // slacks
  double dt = 0.0;

  struct Residual {
    SmoothVectorFn fn;  // over [x; u], contributes fn' W fn
    Eigen::MatrixXd W;
  };
  struct RowBlock {
    SmoothVectorFn fn;  // over [x; u], sense >= 0
    bool hard = true;
    int slack_offset = -1;        // first slack index, soft only
    Eigen::VectorXd soft_weight;  // per row, soft only
    std::string label;
  };

  std::vector<Residual> residuals;
  Eigen::VectorXd slack_weight;  // size ns, diagonal penalty on s
  std::vector<RowBlock> rows;
  int n_rows = 0;  // total inequality rows per stage

  Eigen::MatrixXd A, B;
  Eigen::VectorXd c;
  Eigen::VectorXd x_init;

  int nw() const { return nu + ns; }

  Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const {
    return A * x + B * w + c;
  }

  // Raw row values at one stage; soft rows are shifted by their slack.
  Eigen::VectorXd ineq_values(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const {
    Eigen::VectorXd g(n_rows);
    int at = 0;
    Eigen::VectorXd xu(nx + nu);
    xu << x, w.head(nu);
    for (const RowBlock& blk : rows) {
      Eigen::VectorXd v = blk.fn(xu);
      if (!blk.hard) v -= w.segment(nu + blk.slack_offset, v.size());
      g.segment(at, v.size()) = v;
      at += static_cast<int>(v.size());
    }
    return g;
  }

  // Largest violation of hard rows only; soft rows absorb theirs by design.
  double max_hard_violation(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const {
    double worst = 0.0;
    Eigen::VectorXd xu(nx + nu);
    xu << x, w.head(nu);
    for (const RowBlock& blk : rows) {
      if (!blk.hard) continue;
      const Eigen::VectorXd v = blk.fn(xu);
      worst = std::max(worst, std::max(0.0, -v.minCoeff()));
    }
    return worst;
  }
};

struct DecisionTrajectory {
  std::vector<Eigen::VectorXd> x;  // N+1 states
  std::vector<Eigen::VectorXd> w;  // N inputs [u; s]

  Eigen::VectorXd controls(int k, int nu) const { return w[k].head(nu); }
};

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& M, const std::string& what) {
  if (M.rows() != M.cols() || !M.isApprox(M.transpose(), 1e-12))
    throw std::invalid_argument(what + ": weight must be symmetric");
}

inline SmoothVectorFn make_bound_rows_fn(int nx, int nu, const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper) {
  std::vector<std::pair<int, double>> lo, hi;
  for (int i = 0; i < lower.size(); ++i)
    if (std::isfinite(lower(i))) lo.emplace_back(i, lower(i));
  for (int i = 0; i < upper.size(); ++i)
    if (std::isfinite(upper(i))) hi.emplace_back(i, upper(i));
  const int m = static_cast<int>(lo.size() + hi.size());
  return SmoothVectorFn::make(
      nx + nu, m,
      [lo, hi, nx](const auto& xu) {
        using S = typename std::decay_t<decltype(xu)>::value_type;
        std::vector<S> r;
        r.reserve(lo.size() + hi.size());
        for (const auto& [i, b] : lo) r.push_back(xu[nx + i] - b);
        for (const auto& [i, b] : hi) r.push_back(b - xu[nx + i]);
        return r;
      },
      "input_bounds");
}

}  // namespace detail

inline Program assemble(const OcpSpec& spec, const State& x0) {
  if (spec.horizon < 1) throw std::invalid_argument("assemble: horizon must be >= 1");
  if (spec.dt <= 0.0) throw std::invalid_argument("assemble: dt must be positive");
  if (x0.q.size() != x0.qdot.size())
    throw std::invalid_argument("assemble: malformed initial state");
  const int n_q = x0.n_q();
  const int nx = 2 * n_q + 1;
  const int nu = n_q;

  Program p;
  p.N = spec.horizon;
  p.n_q = n_q;
  p.nx = nx;
  p.nu = nu;
  p.dt = spec.dt;
  p.x_init = pack(x0);

  p.A = Eigen::MatrixXd::Identity(nx, nx);
  p.A.block(0, n_q, n_q, n_q) = spec.dt * Eigen::MatrixXd::Identity(n_q, n_q);

  for (const TaskCostSpec& tc : spec.costs) {
    if (tc.task.state_dim() != nx)
      throw std::invalid_argument("assemble: task '" + tc.task.label +
                                  "' state dim mismatch");
    const int m = tc.task.dim();
    Program::Residual res;
    switch (tc.kind) {
      case CostKind::TrackingLq:
        detail::require_symmetric(tc.weight, tc.task.label);
        if (tc.weight.rows() != m)
          throw std::invalid_argument("assemble: Q dim mismatch for '" + tc.task.label + "'");
        res.fn = make_error_fn(tc.task, n_q);
        res.W = tc.weight;
        break;
      case CostKind::TrackingLqRates:
        detail::require_symmetric(tc.weight, tc.task.label);
        if (tc.weight.rows() != 2 * m)
          throw std::invalid_argument("assemble: Q_B dim mismatch for '" + tc.task.label +
                                      "'");
        res.fn = make_error_and_rate_fn(tc.task, n_q);
        res.W = tc.weight;
        break;
      case CostKind::FirstOrderDecay:
        detail::require_symmetric(tc.weight, tc.task.label);
        if (tc.weight.rows() != m)
          throw std::invalid_argument("assemble: W_s dim mismatch for '" + tc.task.label +
                                      "'");
        res.fn = make_decay_residual_fn(tc.task, tc.decay_gain, n_q);
        res.W = tc.weight;
        break;
    }
    p.residuals.push_back(std::move(res));
  }

  if (spec.mu < 0.0) throw std::invalid_argument("assemble: mu must be >= 0");
  if (spec.mu > 0.0) {
    Eigen::MatrixXd Wr = spec.Wr.size() == 0
                             ? Eigen::MatrixXd::Identity(nu, nu).eval()
                             : spec.Wr;
    detail::require_symmetric(Wr, "Wr");
    if (Wr.rows() != nu) throw std::invalid_argument("assemble: Wr dim mismatch");
    Program::Residual effort;
    effort.fn = SmoothVectorFn::make(
        nx + nu, nu,
        [nx, nu](const auto& xu) {
          using S = typename std::decay_t<decltype(xu)>::value_type;
          return std::vector<S>(xu.begin() + nx, xu.begin() + nx + nu);
        },
        "control_effort");
    effort.W = spec.mu * Wr;
    p.residuals.push_back(std::move(effort));
  }

  int slack_at = 0;
  int rows_at = 0;
  for (const ConstraintSpec& cs : spec.constraints) {
    if (cs.h.state_dim() != nx)
      throw std::invalid_argument("assemble: constraint '" + cs.h.label +
                                  "' state dim mismatch");
    const int m = cs.h.dim();
    if (cs.gain.size() != m)
      throw std::invalid_argument("assemble: constraint gain dim mismatch for '" +
                                  cs.h.label + "'");
    Program::RowBlock blk;
    blk.fn = make_decay_residual_fn(cs.h, cs.gain, n_q);
    blk.hard = cs.hard;
    blk.label = cs.h.label;
    if (!cs.hard) {
      if (cs.soft_weight.size() != m || (cs.soft_weight.array() <= 0.0).any())
        throw std::invalid_argument("assemble: soft weights must be positive, per row");
      blk.slack_offset = slack_at;
      blk.soft_weight = cs.soft_weight;
      slack_at += m;
    }
    rows_at += m;
    p.rows.push_back(std::move(blk));
  }

  if (spec.bounds.lower.size() != 0 || spec.bounds.upper.size() != 0) {
    Eigen::VectorXd lo = spec.bounds.lower.size() == 0
                             ? Eigen::VectorXd::Constant(
                                   nu, -std::numeric_limits<double>::infinity())
                                   .eval()
                             : spec.bounds.lower;
    Eigen::VectorXd hi = spec.bounds.upper.size() == 0
                             ? Eigen::VectorXd::Constant(
                                   nu, std::numeric_limits<double>::infinity())
                                   .eval()
                             : spec.bounds.upper;
    if (lo.size() != nu || hi.size() != nu)
      throw std::invalid_argument("assemble: bound vectors must have one entry per joint");
    if (((hi - lo).array() <= 0.0).any())
      throw std::invalid_argument("assemble: bounds must satisfy lower < upper");
    Program::RowBlock blk;
    blk.fn = detail::make_bound_rows_fn(nx, nu, lo, hi);
    if (blk.fn.out_dim() > 0) {
      blk.hard = true;
      blk.label = "input_bounds";
      rows_at += blk.fn.out_dim();
      p.rows.push_back(std::move(blk));
    }
  }

  p.ns = slack_at;
  p.n_rows = rows_at;
  p.slack_weight = Eigen::VectorXd::Zero(p.ns);
  for (const Program::RowBlock& blk : p.rows)
    if (!blk.hard)
      p.slack_weight.segment(blk.slack_offset, blk.soft_weight.size()) = blk.soft_weight;

  p.B = Eigen::MatrixXd::Zero(nx, p.nw());
  p.B.block(n_q, 0, n_q, n_q) = spec.dt * Eigen::MatrixXd::Identity(n_q, n_q);
  p.c = Eigen::VectorXd::Zero(nx);
  p.c(2 * n_q) = spec.dt;

  return p;
}

// Objective value (no augmented-Lagrangian terms) of a trajectory.
inline double trajectory_cost(const Program& p, const DecisionTrajectory& z) {
  if (static_cast<int>(z.x.size()) != p.N + 1 || static_cast<int>(z.w.size()) != p.N)
    throw std::invalid_argument("trajectory_cost: trajectory length mismatch");
  double total = 0.0;
  Eigen::VectorXd xu(p.nx + p.nu);
  for (int k = 0; k < p.N; ++k) {
    xu << z.x[k], z.w[k].head(p.nu);
    for (const Program::Residual& res : p.residuals) {
      const Eigen::VectorXd r = res.fn(xu);
      total += r.dot(res.W * r);
    }
    if (p.ns > 0) {
      const Eigen::VectorXd s = z.w[k].tail(p.ns);
      total += s.dot(p.slack_weight.asDiagonal() * s);
    }
  }
  return total;
}

}  // namespace tsmpc
