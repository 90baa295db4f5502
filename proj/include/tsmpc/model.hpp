#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "tsmpc/smooth_fn.hpp"

namespace tsmpc {

// State x = [q; qdot; t]. The clock is part of the state so time-varying
// references become autonomous expressions of x.
struct State {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  double t = 0.0;

  int n_q() const { return static_cast<int>(q.size()); }
  int dim() const { return 2 * n_q() + 1; }
};

struct ControlInput {
  Eigen::VectorXd qddot_cmd;
};

inline void check_same_dof(const State& x, const ControlInput& u) {
  if (x.q.size() != x.qdot.size())
    throw std::invalid_argument("State: q and qdot dimension mismatch");
  if (u.qddot_cmd.size() != x.q.size())
    throw std::invalid_argument("ControlInput: dimension does not match state");
}

inline Eigen::VectorXd pack(const State& x) {
  const int n = x.n_q();
  Eigen::VectorXd z(2 * n + 1);
  z.head(n) = x.q;
  z.segment(n, n) = x.qdot;
  z(2 * n) = x.t;
  return z;
}

inline State unpack(const Eigen::VectorXd& z) {
  if (z.size() % 2 == 0 || z.size() < 3)
    throw std::invalid_argument("unpack: state vector must have odd size >= 3");
  const int n = static_cast<int>((z.size() - 1) / 2);
  State x;
  x.q = z.head(n);
  x.qdot = z.segment(n, n);
  x.t = z(2 * n);
  return x;
}

// xdot = [qdot; qddot_cmd; 1]: commanded acceleration drives a double
// integrator per joint, and the clock advances at unit rate.
inline Eigen::VectorXd continuous_dynamics(const State& x, const ControlInput& u) {
  check_same_dof(x, u);
  const int n = x.n_q();
  Eigen::VectorXd xdot(2 * n + 1);
  xdot.head(n) = x.qdot;
  xdot.segment(n, n) = u.qddot_cmd;
  xdot(2 * n) = 1.0;
  return xdot;
}

// Forward-Euler step of the nominal model; this is also the prediction model
// inside the controller.
inline State step_nominal(const State& x, const ControlInput& u, double dt) {
  check_same_dof(x, u);
  State out;
  out.q = x.q + dt * x.qdot;
  out.qdot = x.qdot + dt * u.qddot_cmd;
  out.t = x.t + dt;
  return out;
}

// Plant-side actuator lag: realized acceleration chases the commanded one
// with rate alpha_internal. The controller never sees this model.
struct ActuatorLag {
  double alpha_internal = 15.0;
  Eigen::VectorXd qddot_actual;  // empty means "at rest", i.e. zero

  void reset(int n_q) { qddot_actual = Eigen::VectorXd::Zero(n_q); }
};

inline State step_plant(const State& x, const ControlInput& u, double dt,
                        ActuatorLag& lag) {
  check_same_dof(x, u);
  const int n = x.n_q();
  if (lag.qddot_actual.size() != n) lag.reset(n);
  lag.qddot_actual += dt * lag.alpha_internal * (u.qddot_cmd - lag.qddot_actual);
  State out;
  out.q = x.q + dt * x.qdot;
  out.qdot = x.qdot + dt * lag.qddot_actual;
  out.t = x.t + dt;
  return out;
}

// Planar arm: prismatic base joint along x, then two unit-length revolute
// links. End-effector position in the vertical plane.
namespace planar_arm {

inline constexpr int kNumJoints = 3;

template <typename S>
std::vector<S> fk(const std::vector<S>& q) {
  using std::cos;
  using std::sin;
  std::vector<S> p(2);
  p[0] = q[0] + cos(q[1]) + cos(q[1] + q[2]);
  p[1] = sin(q[1]) + sin(q[1] + q[2]);
  return p;
}

inline Eigen::Vector2d forward_kinematics(const Eigen::VectorXd& q) {
  if (q.size() != kNumJoints)
    throw std::invalid_argument("planar_arm: expected 3 joint values");
  std::vector<double> qs(q.data(), q.data() + q.size());
  const std::vector<double> p = fk(qs);
  return {p[0], p[1]};
}

// Tool angle relative to the x axis.
template <typename S>
S tool_angle(const std::vector<S>& q) {
  return q[1] + q[2];
}

}  // namespace planar_arm

}  // namespace tsmpc
