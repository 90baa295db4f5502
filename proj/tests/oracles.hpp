#pragma once

// Independent reference implementations the test suites compare the library
// against. Everything here deliberately takes the dumb-but-obvious route:
// dense factorizations, normal equations, central differences, closed forms.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "tsmpc/ocp.hpp"
#include "tsmpc/solver.hpp"
#include "tsmpc/task.hpp"

namespace oracles {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double base = 1.0,
                                  double spread = 0.5) {
  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = uniform(rng, -1.0, 1.0);
  return base * Eigen::MatrixXd::Identity(n, n) + spread * R * R.transpose();
}

// Central finite differences, one column per input direction.
inline Eigen::MatrixXd central_fd_jacobian(const tsmpc::SmoothVectorFn& fn,
                                           const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::MatrixXd J(fn.out_dim(), fn.in_dim());
  Eigen::VectorXd xp = x, xm = x;
  for (int j = 0; j < fn.in_dim(); ++j) {
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    J.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return J;
}

// Task-space velocity tracking for the planar arm, relative degree one in
// the commanded acceleration: e = J(q) qdot - d/dt (cos t, 1.5).
inline tsmpc::TaskError make_ee_velocity_task() {
  return tsmpc::TaskError{
      "ee_velocity",
      tsmpc::SmoothVectorFn::make(
          7, 2,
          [](const auto& x) {
            using S = typename std::decay_t<decltype(x)>::value_type;
            using std::cos;
            using std::sin;
            const S s2 = sin(x[1]), c2 = cos(x[1]);
            const S s23 = sin(x[1] + x[2]), c23 = cos(x[1] + x[2]);
            std::vector<S> r(2);
            r[0] = x[3] - s2 * x[4] - s23 * (x[4] + x[5]) + sin(x[6]);
            r[1] = c2 * x[4] + c23 * (x[4] + x[5]);
            return r;
          },
          "ee_velocity")};
}

// Closed-form minimizer of
//   min_u (M u + b)' Ws (M u + b) + mu u' Wr u
// for the velocity task above at state x: M = J(q), b collects the drift
// d/dq (J qdot) qdot + d/dt e + Ke e.
inline Eigen::Vector3d instantaneous_qp(const tsmpc::State& x, const Eigen::Matrix2d& Ws,
                                        const Eigen::Vector2d& Ke, double mu,
                                        const Eigen::Matrix3d& Wr) {
  const double s2 = std::sin(x.q(1)), c2 = std::cos(x.q(1));
  const double s23 = std::sin(x.q(1) + x.q(2)), c23 = std::cos(x.q(1) + x.q(2));
  Eigen::Matrix<double, 2, 3> M;
  M << 1.0, -s2 - s23, -s23, 0.0, c2 + c23, c23;

  const double w23 = x.qdot(1) + x.qdot(2);
  Eigen::Vector2d e(x.qdot(0) - s2 * x.qdot(1) - s23 * w23 + std::sin(x.t),
                    c2 * x.qdot(1) + c23 * w23);
  Eigen::Vector2d drift(-c2 * x.qdot(1) * x.qdot(1) - c23 * w23 * w23 + std::cos(x.t),
                        -s2 * x.qdot(1) * x.qdot(1) - s23 * w23 * w23);
  const Eigen::Vector2d b = drift + Ke.asDiagonal() * e;

  const Eigen::Matrix3d A = M.transpose() * Ws * M + mu * Wr;
  return A.ldlt().solve(-M.transpose() * Ws * b);
}

// Gauss-Newton on the stage-wise program with the step taken from a dense
// factorization of the stacked KKT system. Maintains exact dynamic
// feasibility (the dynamics are affine) and backtracks on the plain
// objective. Unconstrained programs only.
struct DenseGnResult {
  tsmpc::DecisionTrajectory z;
  int iterations = 0;
  double last_step = std::numeric_limits<double>::infinity();
};

inline DenseGnResult dense_kkt_gn(const tsmpc::Program& p, const Eigen::VectorXd& x_init,
                                  int max_iters = 300) {
  const int nx = p.nx, nu = p.nu, nw = p.nw(), N = p.N;
  const int NV = (N + 1) * nx + N * nw;
  const int NE = (N + 1) * nx;
  const auto xoff = [&](int k) { return k * (nx + nw); };
  const auto woff = [&](int k) { return k * (nx + nw) + nx; };

  DenseGnResult out;
  out.z = tsmpc::cold_start(p, x_init);

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(NE, NV);
  G.block(0, 0, nx, nx).setIdentity();
  for (int k = 0; k < N; ++k) {
    G.block((k + 1) * nx, xoff(k), nx, nx) = p.A;
    G.block((k + 1) * nx, woff(k), nx, nw) = p.B;
    G.block((k + 1) * nx, xoff(k + 1), nx, nx) =
        -Eigen::MatrixXd::Identity(nx, nx);
  }

  Eigen::VectorXd xu(nx + nu);
  for (int it = 0; it < max_iters; ++it) {
    out.iterations = it + 1;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(NV, NV);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(NV);
    for (int k = 0; k < N; ++k) {
      xu << out.z.x[k], out.z.w[k].head(nu);
      for (const tsmpc::Program::Residual& res : p.residuals) {
        const tsmpc::JacobianResult jr = tsmpc::jacobian(res.fn, xu);
        const Eigen::MatrixXd JW = jr.jacobian.transpose() * (2.0 * res.W);
        const Eigen::MatrixXd Hl = JW * jr.jacobian;
        const Eigen::VectorXd gl = JW * jr.value;
        const int xo = xoff(k), wo = woff(k);
        H.block(xo, xo, nx, nx) += Hl.topLeftCorner(nx, nx);
        H.block(xo, wo, nx, nu) += Hl.topRightCorner(nx, nu);
        H.block(wo, xo, nu, nx) += Hl.bottomLeftCorner(nu, nx);
        H.block(wo, wo, nu, nu) += Hl.bottomRightCorner(nu, nu);
        g.segment(xo, nx) += gl.head(nx);
        g.segment(wo, nu) += gl.tail(nu);
      }
      for (int i = 0; i < p.ns; ++i) {
        H(woff(k) + nu + i, woff(k) + nu + i) += 2.0 * p.slack_weight(i);
        g(woff(k) + nu + i) += 2.0 * p.slack_weight(i) * out.z.w[k](nu + i);
      }
    }

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(NV + NE, NV + NE);
    K.topLeftCorner(NV, NV) = H;
    K.topRightCorner(NV, NE) = G.transpose();
    K.bottomLeftCorner(NE, NV) = G;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(NV + NE);
    rhs.head(NV) = -g;
    const Eigen::VectorXd step = Eigen::FullPivLU<Eigen::MatrixXd>(K).solve(rhs).head(NV);

    double scale = 1.0;
    for (int k = 0; k <= N; ++k) scale = std::max(scale, out.z.x[k].lpNorm<Eigen::Infinity>());
    out.last_step = step.lpNorm<Eigen::Infinity>();
    if (out.last_step <= 1e-12 * scale) return out;

    const double f0 = tsmpc::trajectory_cost(p, out.z);
    const double slope = g.dot(step);
    // Near stationarity the true decrease drops below cost-evaluation
    // rounding, where a plain Armijo test rejects every step; the noise
    // allowance keeps the exact KKT step acceptable there.
    const double noise = 1e-12 * (1.0 + std::abs(f0));
    tsmpc::DecisionTrajectory cand = out.z;
    bool accepted = false;
    for (double t = 1.0; t >= 1e-10; t *= 0.5) {
      for (int k = 0; k <= N; ++k)
        cand.x[k] = out.z.x[k] + t * step.segment(xoff(k), nx);
      for (int k = 0; k < N; ++k)
        cand.w[k] = out.z.w[k] + t * step.segment(woff(k), nw);
      if (tsmpc::trajectory_cost(p, cand) <= f0 + 1e-4 * t * slope + noise) {
        out.z = cand;
        accepted = true;
        break;
      }
    }
    if (!accepted) return out;
  }
  return out;
}

// Plain normal-equations fit over the full six-term quadratic basis.
inline Eigen::Matrix<double, 6, 1> normal_equations_surface(
    const std::vector<Eigen::Vector3d>& pts) {
  Eigen::MatrixXd Phi(static_cast<int>(pts.size()), 6);
  Eigen::VectorXd z(static_cast<int>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    const double px = pts[i].x(), py = pts[i].y();
    Phi.row(static_cast<int>(i)) << 1.0, px, py, px * py, px * px, py * py;
    z(static_cast<int>(i)) = pts[i].z();
  }
  return (Phi.transpose() * Phi).ldlt().solve(Phi.transpose() * z);
}

// One-dimensional quadratic fit z = b0 + b1 x + b2 x^2.
inline Eigen::Vector3d quad1d_fit(const std::vector<double>& xs,
                                  const std::vector<double>& zs) {
  Eigen::MatrixXd Phi(static_cast<int>(xs.size()), 3);
  Eigen::VectorXd z(static_cast<int>(xs.size()));
  for (size_t i = 0; i < xs.size(); ++i) {
    Phi.row(static_cast<int>(i)) << 1.0, xs[i], xs[i] * xs[i];
    z(static_cast<int>(i)) = zs[i];
  }
  return (Phi.transpose() * Phi).ldlt().solve(Phi.transpose() * z);
}

inline tsmpc::State random_state(std::mt19937_64& rng) {
  tsmpc::State x;
  x.q = Eigen::Vector3d(uniform(rng, -1.5, 0.0), uniform(rng, 0.3, 1.2),
                        uniform(rng, 0.6, 2.0));
  x.qdot = Eigen::Vector3d(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5),
                           uniform(rng, -0.5, 0.5));
  x.t = uniform(rng, 0.0, 2.0);
  return x;
}

inline tsmpc::State near_pinned_state(std::mt19937_64& rng) {
  tsmpc::State x;
  x.q = Eigen::Vector3d(-1.0 + uniform(rng, -0.3, 0.3), M_PI / 4 + uniform(rng, -0.3, 0.3),
                        M_PI / 2 + uniform(rng, -0.3, 0.3));
  x.qdot = Eigen::Vector3d(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3),
                           uniform(rng, -0.3, 0.3));
  x.t = uniform(rng, 0.0, 1.0);
  return x;
}

// Random unconstrained tracking instance cycling through the three cost
// kinds, conditioned so both the library solver and the dense reference
// reach stationarity rather than their line-search noise floors: mildly
// anisotropic weights and a regularization floor of 1e-3.
inline tsmpc::OcpSpec random_unconstrained_spec(std::mt19937_64& rng, int instance) {
  tsmpc::OcpSpec spec;
  spec.horizon = 1 + static_cast<int>(uniform(rng, 0.0, 29.999));
  spec.dt = 0.01;
  spec.mu = std::pow(10.0, uniform(rng, -3, -1));
  spec.Wr = random_spd(rng, 3, 1.0, 0.1);
  tsmpc::TaskCostSpec tc;
  tc.task = tsmpc::make_tracking_task();
  switch (instance % 3) {
    case 0:
      tc.kind = tsmpc::CostKind::TrackingLq;
      tc.weight = random_spd(rng, 2, 1.0, 0.1);
      break;
    case 1:
      tc.kind = tsmpc::CostKind::TrackingLqRates;
      tc.weight = random_spd(rng, 4, 1.0, 0.1);
      break;
    default:
      tc.kind = tsmpc::CostKind::FirstOrderDecay;
      tc.weight = random_spd(rng, 2, 1.0, 0.1);
      tc.decay_gain =
          Eigen::Vector2d(uniform(rng, 0.5, 3.0), uniform(rng, 0.5, 3.0));
      break;
  }
  spec.costs.push_back(tc);
  return spec;
}

// Harsher variant for line-search and merit stress: strongly random weights,
// mu down to 1e-5, far-from-reference states pair well with it.
inline tsmpc::OcpSpec rough_unconstrained_spec(std::mt19937_64& rng, int instance) {
  tsmpc::OcpSpec spec = random_unconstrained_spec(rng, instance);
  spec.mu = std::pow(10.0, uniform(rng, -5, -1));
  spec.Wr = random_spd(rng, 3, 1.0);
  tsmpc::TaskCostSpec& tc = spec.costs[0];
  tc.weight = random_spd(rng, static_cast<int>(tc.weight.rows()),
                         tc.weight.rows() == 4 ? 0.25 : 0.5);
  return spec;
}

}  // namespace oracles
