#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsmpc/model.hpp"
#include "tsmpc/smooth_fn.hpp"

namespace tsmpc {

// Task-space error map e(x) over the packed state [q; qdot; t].
// Rows are the task channels; e == 0 means the task is satisfied.
struct TaskError {
  std::string label;
  SmoothVectorFn fn;

  int dim() const { return fn.out_dim(); }
  int state_dim() const { return fn.in_dim(); }
};

inline JacobianResult differentiate(const SmoothVectorFn& fn, const Eigen::VectorXd& x) {
  return jacobian(fn, x);
}

namespace detail {

// edot = J_e(x) f_c(x, u), expanded against the integrator-chain structure
// of the dynamics: columns over q pair with qdot, columns over qdot pair
// with u, and the clock column contributes at unit rate. Evaluating the
// Jacobian at scalar type S needs one extra dual level, which is why task
// expressions must support nested duals.
template <typename S>
std::vector<S> rate_values(const SmoothVectorFn& efn, const std::vector<S>& xu, int n_q) {
  const int nx = 2 * n_q + 1;
  const int m = efn.out_dim();
  std::vector<S> x(xu.begin(), xu.begin() + nx);
  std::vector<S> val, jac;
  jacobian_generic<S>(efn, x, val, jac);
  std::vector<S> r(m);
  for (int i = 0; i < m; ++i) {
    S acc = jac[static_cast<size_t>(i) * nx + 2 * n_q];
    for (int j = 0; j < n_q; ++j) acc += jac[static_cast<size_t>(i) * nx + j] * xu[n_q + j];
    for (int j = 0; j < n_q; ++j)
      acc += jac[static_cast<size_t>(i) * nx + n_q + j] * xu[nx + j];
    r[i] = acc;
  }
  return r;
}

}  // namespace detail

// The composed functions below map [x; u] (dim 2*n_q+1 + n_q) to task rows.
// They carry first derivatives only; see SmoothVectorFn::make_first_order.

inline SmoothVectorFn make_error_fn(const TaskError& task, int n_q) {
  const int nx = 2 * n_q + 1;
  SmoothVectorFn efn = task.fn;
  return SmoothVectorFn::make_first_order(
      nx + n_q, task.dim(),
      [efn, nx](const auto& xu) {
        using S = typename std::decay_t<decltype(xu)>::value_type;
        std::vector<S> x(xu.begin(), xu.begin() + nx);
        return efn.eval(x);
      },
      task.label);
}

inline SmoothVectorFn make_rate_fn(const TaskError& task, int n_q) {
  const int nx = 2 * n_q + 1;
  SmoothVectorFn efn = task.fn;
  return SmoothVectorFn::make_first_order(
      nx + n_q, task.dim(),
      [efn, n_q](const auto& xu) { return detail::rate_values(efn, xu, n_q); },
      task.label + "_rate");
}

// r = edot + diag(gain) e. With gain = K_e this is the deviation from the
// first-order error decay edot = -K_e e; with gain = K_h it is the barrier
// row value for h >= 0 constraints.
inline SmoothVectorFn make_decay_residual_fn(const TaskError& task,
                                             const Eigen::VectorXd& gain, int n_q) {
  if (gain.size() != task.dim())
    throw std::invalid_argument("decay residual: gain size must match task dim");
  if ((gain.array() <= 0.0).any())
    throw std::invalid_argument("decay residual: gains must be positive");
  const int nx = 2 * n_q + 1;
  SmoothVectorFn efn = task.fn;
  std::vector<double> g(gain.data(), gain.data() + gain.size());
  return SmoothVectorFn::make_first_order(
      nx + n_q, task.dim(),
      [efn, g, n_q, nx](const auto& xu) {
        using S = typename std::decay_t<decltype(xu)>::value_type;
        std::vector<S> r = detail::rate_values(efn, xu, n_q);
        std::vector<S> x(xu.begin(), xu.begin() + nx);
        const std::vector<S> e = efn.eval(x);
        for (size_t i = 0; i < r.size(); ++i) r[i] += g[i] * e[i];
        return r;
      },
      task.label + "_decay");
}

inline SmoothVectorFn make_error_and_rate_fn(const TaskError& task, int n_q) {
  const int nx = 2 * n_q + 1;
  SmoothVectorFn efn = task.fn;
  return SmoothVectorFn::make_first_order(
      nx + n_q, 2 * task.dim(),
      [efn, n_q, nx](const auto& xu) {
        using S = typename std::decay_t<decltype(xu)>::value_type;
        std::vector<S> x(xu.begin(), xu.begin() + nx);
        std::vector<S> out = efn.eval(x);
        const std::vector<S> rate = detail::rate_values(efn, xu, n_q);
        out.insert(out.end(), rate.begin(), rate.end());
        return out;
      },
      task.label + "_stacked");
}

inline Eigen::VectorXd task_error(const TaskError& task, const State& x) {
  return task.fn(pack(x));
}

inline Eigen::VectorXd error_rate(const TaskError& task, const State& x,
                                  const ControlInput& u) {
  check_same_dof(x, u);
  const int n_q = x.n_q();
  Eigen::VectorXd xu(x.dim() + n_q);
  xu << pack(x), u.qddot_cmd;
  return make_rate_fn(task, n_q)(xu);
}

// Joint box and symmetric velocity limits as 12 barrier-ready rows h(x) >= 0:
// q - lo, hi - q, qdot + vlim, vlim - qdot.
inline TaskError make_joint_limit_task(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                                       double vlim) {
  const std::array<double, 3> lov{lo(0), lo(1), lo(2)};
  const std::array<double, 3> hiv{hi(0), hi(1), hi(2)};
  return TaskError{"joint_limits",
                   SmoothVectorFn::make(
                       7, 12,
                       [lov, hiv, vlim](const auto& x) {
                         using S = typename std::decay_t<decltype(x)>::value_type;
                         std::vector<S> r;
                         r.reserve(12);
                         for (int i = 0; i < 3; ++i) r.push_back(x[i] - lov[i]);
                         for (int i = 0; i < 3; ++i) r.push_back(hiv[i] - x[i]);
                         for (int i = 0; i < 3; ++i) r.push_back(x[3 + i] + vlim);
                         for (int i = 0; i < 3; ++i) r.push_back(vlim - x[3 + i]);
                         return r;
                       },
                       "joint_limits")};
}

// Planar-arm tracking task: end effector follows (cos t, 1.5).
inline TaskError make_tracking_task() {
  const int nx = 2 * planar_arm::kNumJoints + 1;
  return TaskError{
      "ee_tracking",
      SmoothVectorFn::make(nx, 2,
                           [](const auto& x) {
                             using S = typename std::decay_t<decltype(x)>::value_type;
                             using std::cos;
                             std::vector<S> q(x.begin(), x.begin() + 3);
                             std::vector<S> e = planar_arm::fk(q);
                             e[0] = e[0] - cos(x[6]);
                             e[1] = e[1] - 1.5;
                             return e;
                           },
                           "ee_tracking")};
}

}  // namespace tsmpc
