#include "tsmpc/solver.hpp"

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsmpc {
namespace {

constexpr double kRegMin = 1e-8;
constexpr double kRegMax = 1e-2;
constexpr double kRhoMax = 1e12;
constexpr double kStepMin = 1e-12;

void validate_config(const SolverConfig& c) {
  if (c.max_sqp_iters < 1 || c.max_al_iters < 1)
    throw std::invalid_argument("SolverConfig: iteration limits must be >= 1");
  if (c.kkt_tol <= 0 || c.constraint_tol <= 0)
    throw std::invalid_argument("SolverConfig: tolerances must be positive");
  if (c.ls_backtrack <= 0 || c.ls_backtrack >= 1)
    throw std::invalid_argument("SolverConfig: backtracking factor must be in (0,1)");
  if (c.ls_armijo <= 0 || c.ls_armijo >= 1)
    throw std::invalid_argument("SolverConfig: sufficient-decrease coefficient must be in (0,1)");
  if (c.al_penalty <= 0 || c.al_growth <= 1)
    throw std::invalid_argument("SolverConfig: penalty must be > 0 and growth > 1");
}

double phr_value(double g, double lam, double rho) {
  const double m = std::max(0.0, lam - rho * g);
  return (m * m - lam * lam) / (2.0 * rho);
}

struct StageVal {
  double cost = 0.0;     // objective plus AL penalty terms
  Eigen::VectorXd gval;  // inequality rows, soft ones shifted by their slack
};

struct StageLin {
  double cost = 0.0;
  Eigen::VectorXd gval;
  Eigen::MatrixXd Hxx, Hxw, Hww;
  Eigen::VectorXd gx, gw;
  Eigen::MatrixXd Gx, Gw;
};

// Row values only; used by the line search and the AL updates.
void eval_stage_value(const Program& p, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& w, const Eigen::VectorXd& lam, double rho,
                      StageVal& out) {
  Eigen::VectorXd xu(p.nx + p.nu);
  xu << x, w.head(p.nu);
  double cost = 0.0;
  for (const Program::Residual& res : p.residuals) {
    const Eigen::VectorXd r = res.fn(xu);
    cost += r.dot(res.W * r);
  }
  if (p.ns > 0) {
    const Eigen::VectorXd s = w.tail(p.ns);
    cost += s.dot(p.slack_weight.asDiagonal() * s);
  }
  out.gval.resize(p.n_rows);
  int at = 0;
  for (const Program::RowBlock& blk : p.rows) {
    Eigen::VectorXd v = blk.fn(xu);
    const int m = static_cast<int>(v.size());
    if (!blk.hard) v -= w.segment(p.nu + blk.slack_offset, m);
    for (int i = 0; i < m; ++i) cost += phr_value(v(i), lam(at + i), rho);
    out.gval.segment(at, m) = v;
    at += m;
  }
  out.cost = cost;
}

// Gauss-Newton quadratic model of the AL-augmented stage objective.
void eval_stage_lin(const Program& p, const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                    const Eigen::VectorXd& lam, double rho, StageLin& L) {
  const int nx = p.nx, nu = p.nu, ns = p.ns, nw = p.nw();
  L.cost = 0.0;
  L.Hxx.setZero(nx, nx);
  L.Hxw.setZero(nx, nw);
  L.Hww.setZero(nw, nw);
  L.gx.setZero(nx);
  L.gw.setZero(nw);
  L.gval.resize(p.n_rows);
  L.Gx.setZero(p.n_rows, nx);
  L.Gw.setZero(p.n_rows, nw);

  Eigen::VectorXd xu(nx + nu);
  xu << x, w.head(nu);

  for (const Program::Residual& res : p.residuals) {
    const JacobianResult jr = jacobian(res.fn, xu);
    const auto Jx = jr.jacobian.leftCols(nx);
    const auto Ju = jr.jacobian.rightCols(nu);
    const Eigen::VectorXd Wr = res.W * jr.value;
    const Eigen::MatrixXd WJx = res.W * Jx;
    const Eigen::MatrixXd WJu = res.W * Ju;
    L.cost += jr.value.dot(Wr);
    L.gx.noalias() += 2.0 * Jx.transpose() * Wr;
    L.gw.head(nu).noalias() += 2.0 * Ju.transpose() * Wr;
    L.Hxx.noalias() += 2.0 * Jx.transpose() * WJx;
    L.Hxw.leftCols(nu).noalias() += 2.0 * Jx.transpose() * WJu;
    L.Hww.topLeftCorner(nu, nu).noalias() += 2.0 * Ju.transpose() * WJu;
  }
  if (ns > 0) {
    const Eigen::VectorXd s = w.tail(ns);
    L.cost += s.dot(p.slack_weight.asDiagonal() * s);
    L.gw.tail(ns) += 2.0 * p.slack_weight.cwiseProduct(s);
    L.Hww.bottomRightCorner(ns, ns).diagonal() += 2.0 * p.slack_weight;
  }

  int at = 0;
  for (const Program::RowBlock& blk : p.rows) {
    const JacobianResult jr = jacobian(blk.fn, xu);
    Eigen::VectorXd v = jr.value;
    const int m = static_cast<int>(v.size());
    L.Gx.middleRows(at, m) = jr.jacobian.leftCols(nx);
    L.Gw.middleRows(at, m).leftCols(nu) = jr.jacobian.rightCols(nu);
    if (!blk.hard) {
      v -= w.segment(nu + blk.slack_offset, m);
      for (int i = 0; i < m; ++i) L.Gw(at + i, nu + blk.slack_offset + i) = -1.0;
    }
    L.gval.segment(at, m) = v;
    for (int i = 0; i < m; ++i) {
      const double mult = std::max(0.0, lam(at + i) - rho * v(i));
      L.cost += phr_value(v(i), lam(at + i), rho);
      if (mult > 0.0) {
        const Eigen::VectorXd rx = L.Gx.row(at + i).transpose();
        const Eigen::VectorXd rw = L.Gw.row(at + i).transpose();
        L.gx.noalias() -= mult * rx;
        L.gw.noalias() -= mult * rw;
        L.Hxx.noalias() += rho * rx * rx.transpose();
        L.Hxw.noalias() += rho * rx * rw.transpose();
        L.Hww.noalias() += rho * rw * rw.transpose();
      }
    }
    at += m;
  }
}

struct Sweep {
  std::vector<Eigen::MatrixXd> K;
  std::vector<Eigen::VectorXd> kff;
  std::vector<Eigen::MatrixXd> P;
  std::vector<Eigen::VectorXd> pv;
  double stat = 0.0;  // max ||q_u||_inf over stages
};

// Riccati recursion on the defect-aware LQ model. Returns false when a
// stage Hessian is not positive definite at the given regularization.
bool backward_sweep(const Program& p, const std::vector<StageLin>& L,
                    const std::vector<Eigen::VectorXd>& defect, double reg, Sweep& sw) {
  const int N = p.N, nx = p.nx, nw = p.nw();
  sw.K.resize(N);
  sw.kff.resize(N);
  sw.P.resize(N + 1);
  sw.pv.resize(N + 1);
  sw.P[N] = Eigen::MatrixXd::Zero(nx, nx);
  sw.pv[N] = Eigen::VectorXd::Zero(nx);
  sw.stat = 0.0;
  for (int k = N - 1; k >= 0; --k) {
    const Eigen::MatrixXd PA = sw.P[k + 1] * p.A;
    const Eigen::MatrixXd PB = sw.P[k + 1] * p.B;
    Eigen::MatrixXd Qxx = L[k].Hxx + p.A.transpose() * PA;
    Eigen::MatrixXd Quu = L[k].Hww + p.B.transpose() * PB;
    Quu.diagonal().array() += reg;
    const Eigen::MatrixXd Qux =
        L[k].Hxw.transpose() + p.B.transpose() * PA;
    const Eigen::VectorXd Pd = sw.pv[k + 1] + sw.P[k + 1] * defect[k];
    const Eigen::VectorXd qx = L[k].gx + p.A.transpose() * Pd;
    const Eigen::VectorXd qu = L[k].gw + p.B.transpose() * Pd;

    Eigen::LLT<Eigen::MatrixXd> llt(Quu);
    if (llt.info() != Eigen::Success) return false;
    sw.K[k] = -llt.solve(Qux);
    sw.kff[k] = -llt.solve(qu);
    if (!sw.K[k].allFinite() || !sw.kff[k].allFinite()) return false;

    sw.P[k] = Qxx + Qux.transpose() * sw.K[k];
    sw.P[k] = 0.5 * (sw.P[k] + sw.P[k].transpose().eval());
    sw.pv[k] = qx + Qux.transpose() * sw.kff[k];
    sw.stat = std::max(sw.stat, qu.lpNorm<Eigen::Infinity>());
    (void)nw;
  }
  return true;
}

// Escalates regularization through doublings until the sweep succeeds.
bool sweep_with_regularization(const Program& p, const std::vector<StageLin>& L,
                               const std::vector<Eigen::VectorXd>& defect, Sweep& sw) {
  if (backward_sweep(p, L, defect, 0.0, sw)) return true;
  for (double reg = kRegMin; reg <= kRegMax; reg *= 2.0)
    if (backward_sweep(p, L, defect, reg, sw)) return true;
  return false;
}

}  // namespace

DecisionTrajectory cold_start(const Program& p, const Eigen::VectorXd& x0) {
  if (x0.size() != p.nx) throw std::invalid_argument("cold_start: state dim mismatch");
  DecisionTrajectory z;
  z.x.resize(p.N + 1);
  z.w.assign(p.N, Eigen::VectorXd::Zero(p.nw()));
  z.x[0] = x0;
  for (int k = 0; k < p.N; ++k) z.x[k + 1] = p.dynamics(z.x[k], z.w[k]);
  return z;
}

DecisionTrajectory warm_start_shift(const Program& p, const DecisionTrajectory& prev) {
  if (static_cast<int>(prev.x.size()) != p.N + 1 ||
      static_cast<int>(prev.w.size()) != p.N)
    throw std::invalid_argument("warm_start_shift: trajectory length mismatch");
  DecisionTrajectory z;
  z.x.resize(p.N + 1);
  z.w.resize(p.N);
  for (int k = 0; k < p.N; ++k) z.x[k] = prev.x[k + 1];
  for (int k = 0; k + 1 < p.N; ++k) z.w[k] = prev.w[k + 1];
  z.w[p.N - 1] = prev.w[p.N - 1];
  z.x[p.N] = p.dynamics(z.x[p.N - 1], z.w[p.N - 1]);
  return z;
}

double kkt_residual(const Program& p, const DecisionTrajectory& z) {
  if (static_cast<int>(z.x.size()) != p.N + 1 || static_cast<int>(z.w.size()) != p.N)
    throw std::invalid_argument("kkt_residual: trajectory length mismatch");
  const Eigen::VectorXd lam = Eigen::VectorXd::Zero(p.n_rows);
  const double rho = SolverConfig{}.al_penalty;
  std::vector<StageLin> L(p.N);
  std::vector<Eigen::VectorXd> defect(p.N);
  double dinf = 0.0, viol = 0.0;
  for (int k = 0; k < p.N; ++k) {
    eval_stage_lin(p, z.x[k], z.w[k], lam, rho, L[k]);
    defect[k] = p.dynamics(z.x[k], z.w[k]) - z.x[k + 1];
    dinf = std::max(dinf, defect[k].lpNorm<Eigen::Infinity>());
    if (p.n_rows > 0) viol = std::max(viol, std::max(0.0, -L[k].gval.minCoeff()));
  }
  Sweep sw;
  if (!sweep_with_regularization(p, L, defect, sw))
    return std::numeric_limits<double>::infinity();
  return std::max({sw.stat, dinf, viol});
}

void SolverWorkspace::reset() {
  lam_.clear();
  rho_ = 0.0;
  lam_rows_ = -1;
  lam_stages_ = -1;
}

SolveResult SolverWorkspace::solve(const Program& p, const Eigen::VectorXd& x_init,
                                   const DecisionTrajectory* guess) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_config(cfg_);
  if (x_init.size() != p.nx)
    throw std::invalid_argument("solve: initial state dim mismatch");
  if (guess && (static_cast<int>(guess->x.size()) != p.N + 1 ||
                static_cast<int>(guess->w.size()) != p.N))
    throw std::invalid_argument("solve: guess length mismatch");

  SolveResult R;
  DecisionTrajectory z = guess ? *guess : cold_start(p, x_init);
  z.x[0] = x_init;

  const bool carry = cfg_.warm_start && lam_rows_ == p.n_rows && lam_stages_ == p.N &&
                     static_cast<int>(lam_.size()) == p.N;
  if (!carry) {
    lam_.assign(p.N, Eigen::VectorXd::Zero(p.n_rows));
    rho_ = cfg_.al_penalty;
  }
  lam_rows_ = p.n_rows;
  lam_stages_ = p.N;
  // Very large carried penalties degrade conditioning of later solves.
  rho_ = std::min(std::max(rho_, cfg_.al_penalty), std::max(1e4, cfg_.al_penalty));

  std::vector<StageLin> L(p.N);
  std::vector<StageVal> cur(p.N), cand(p.N);
  std::vector<Eigen::VectorXd> defect(p.N), dx(p.N + 1), dw(p.N);
  std::vector<Eigen::VectorXd> zx(p.N + 1), zw(p.N);

  int total_iters = 0;
  bool diverged = false, hit_cap = false;
  double stat_final = std::numeric_limits<double>::infinity();
  double dinf_final = std::numeric_limits<double>::infinity();
  double viol_prev = std::numeric_limits<double>::infinity();
  int rounds = 0;

  for (int round = 0; round < cfg_.max_al_iters && !diverged && !hit_cap; ++round) {
    rounds = round + 1;
    double nu_merit = 1.0;
    // Endgame: once the predicted merit decrease drops below floating-point
    // noise the Armijo test is blind, so full steps are instead accepted on
    // strict contraction of the KKT measure, verified at the next pass.
    bool tentative = false;
    int endgame_steps = 0;
    double kkt_before = std::numeric_limits<double>::infinity();
    double stat_before = 0.0, dinf_before = 0.0;
    std::vector<Eigen::VectorXd> keep_x, keep_w;
    std::vector<StageVal> keep_cur;
    while (true) {
      double dinf = 0.0, l1 = 0.0;
      bool finite = true;
      for (int k = 0; k < p.N; ++k) {
        defect[k] = p.dynamics(z.x[k], z.w[k]) - z.x[k + 1];
        dinf = std::max(dinf, defect[k].lpNorm<Eigen::Infinity>());
        l1 += defect[k].lpNorm<1>();
        eval_stage_lin(p, z.x[k], z.w[k], lam_[k], rho_, L[k]);
        cur[k].cost = L[k].cost;
        cur[k].gval = L[k].gval;
        if (!std::isfinite(L[k].cost) || !L[k].gval.allFinite()) finite = false;
      }
      Sweep sw;
      const bool solved = finite && sweep_with_regularization(p, L, defect, sw);
      if (tentative) {
        tentative = false;
        const double kkt_here =
            solved ? std::max(sw.stat, dinf) : std::numeric_limits<double>::infinity();
        if (kkt_here < 0.9 * kkt_before) {
          double phi = nu_merit * l1;
          for (int k = 0; k < p.N; ++k) phi += L[k].cost;
          R.merit_history.push_back(phi);
        } else {
          z.x = keep_x;
          z.w = keep_w;
          cur = keep_cur;  // row values must match the restored iterate
          stat_final = stat_before;
          dinf_final = dinf_before;
          break;
        }
      }
      if (!solved) {
        diverged = true;
        break;
      }
      stat_final = sw.stat;
      dinf_final = dinf;
      if (std::max(sw.stat, dinf) <= cfg_.kkt_tol) break;
      if (total_iters >= cfg_.max_sqp_iters) {
        hit_cap = true;
        break;
      }

      dx[0] = Eigen::VectorXd::Zero(p.nx);
      double numax = 0.0;
      for (int k = 0; k < p.N; ++k) {
        numax = std::max(numax,
                         (sw.P[k] * dx[k] + sw.pv[k]).lpNorm<Eigen::Infinity>());
        dw[k] = sw.kff[k] + sw.K[k] * dx[k];
        dx[k + 1] = p.A * dx[k] + p.B * dw[k] + defect[k];
      }
      nu_merit = std::max(nu_merit, 2.0 * numax + 1.0);

      double phi0 = nu_merit * l1;
      double dphi = -nu_merit * l1;
      for (int k = 0; k < p.N; ++k) {
        phi0 += L[k].cost;
        dphi += L[k].gx.dot(dx[k]) + L[k].gw.dot(dw[k]);
      }

      bool accepted = false;
      if (dphi <= -1e-14 * (1.0 + std::abs(phi0))) {
        for (double t = 1.0; t >= kStepMin; t *= cfg_.ls_backtrack) {
          for (int k = 0; k <= p.N; ++k) zx[k] = z.x[k] + t * dx[k];
          for (int k = 0; k < p.N; ++k) zw[k] = z.w[k] + t * dw[k];
          // Dynamics are affine, so defects scale exactly by (1 - t).
          double phit = nu_merit * (1.0 - t) * l1;
          bool ok = true;
          for (int k = 0; k < p.N && ok; ++k) {
            eval_stage_value(p, zx[k], zw[k], lam_[k], rho_, cand[k]);
            phit += cand[k].cost;
            ok = std::isfinite(cand[k].cost);
          }
          if (!ok) continue;
          if (phit <= phi0 + cfg_.ls_armijo * t * dphi) {
            z.x.swap(zx);
            z.w.swap(zw);
            cur.swap(cand);
            R.merit_history.push_back(phit);
            accepted = true;
            break;
          }
        }
        ++total_iters;
      }
      if (accepted) continue;

      if (endgame_steps >= 20) break;  // no certifiable progress left
      ++endgame_steps;
      ++total_iters;
      keep_x = z.x;
      keep_w = z.w;
      keep_cur = cur;
      kkt_before = std::max(sw.stat, dinf);
      stat_before = sw.stat;
      dinf_before = dinf;
      for (int k = 0; k <= p.N; ++k) z.x[k] += dx[k];
      for (int k = 0; k < p.N; ++k) z.w[k] += dw[k];
      tentative = true;
    }
    if (diverged || hit_cap) break;

    if (p.n_rows == 0) break;
    double viol = 0.0, comp = 0.0;
    for (int k = 0; k < p.N; ++k) {
      for (int i = 0; i < p.n_rows; ++i) {
        viol = std::max(viol, std::max(0.0, -cur[k].gval(i)));
        comp = std::max(comp, std::abs(std::min(cur[k].gval(i), lam_[k](i))));
      }
    }
    if (viol <= cfg_.constraint_tol && comp <= cfg_.constraint_tol) break;
    if (round + 1 == cfg_.max_al_iters) break;
    for (int k = 0; k < p.N; ++k)
      lam_[k] = (lam_[k] - rho_ * cur[k].gval).cwiseMax(0.0);
    if (viol > 0.25 * viol_prev) rho_ = std::min(rho_ * cfg_.al_growth, kRhoMax);
    viol_prev = viol;
  }

  double viol = 0.0, comp = 0.0;
  if (p.n_rows > 0 && !diverged) {
    for (int k = 0; k < p.N; ++k) {
      for (int i = 0; i < p.n_rows; ++i) {
        viol = std::max(viol, std::max(0.0, -cur[k].gval(i)));
        comp = std::max(comp, std::abs(std::min(cur[k].gval(i), lam_[k](i))));
      }
    }
  }

  R.z = std::move(z);
  R.sqp_iterations = total_iters;
  R.al_iterations = rounds;
  R.constraint_violation = viol;
  R.kkt_residual = diverged ? std::numeric_limits<double>::infinity()
                            : std::max({stat_final, dinf_final, comp});
  if (diverged) {
    R.status = SolveStatus::Diverged;
  } else if (std::max(stat_final, dinf_final) <= cfg_.kkt_tol &&
             viol <= cfg_.constraint_tol && comp <= cfg_.constraint_tol) {
    R.status = SolveStatus::Converged;
  } else if (viol > cfg_.constraint_tol && rho_ >= kRhoMax) {
    R.status = SolveStatus::InfeasibleConstraints;
  } else {
    R.status = SolveStatus::MaxIterations;
  }
  R.converged = R.status == SolveStatus::Converged;
  R.solve_ms = std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t_start)
                   .count();
  return R;
}

}  // namespace tsmpc
