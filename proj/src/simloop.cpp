#include "tsmpc/simloop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsmpc {
namespace {

Eigen::VectorXd stacked_errors(const OcpSpec& spec, const State& x) {
  int dim = 0;
  for (const TaskCostSpec& tc : spec.costs) dim += tc.task.dim();
  Eigen::VectorXd e(dim);
  int at = 0;
  const Eigen::VectorXd xs = pack(x);
  for (const TaskCostSpec& tc : spec.costs) {
    e.segment(at, tc.task.dim()) = tc.task.fn(xs);
    at += tc.task.dim();
  }
  return e;
}

}  // namespace

RunLog run_closed_loop(const OcpSpec& spec, const State& x0, const ClosedLoopConfig& cfg) {
  if (cfg.duration < 0.0 || cfg.control_dt <= 0.0)
    throw std::invalid_argument("run_closed_loop: bad duration or control_dt");

  RunLog log;
  log.dt = cfg.control_dt;
  const int n_ticks = static_cast<int>(std::llround(cfg.duration / cfg.control_dt));
  if (n_ticks == 0) return log;

  const Program program = assemble(spec, x0);
  SolverWorkspace ws(cfg.solver);
  State x = x0;
  ActuatorLag lag;
  lag.alpha_internal = cfg.alpha_internal;
  lag.reset(x.n_q());

  log.e0 = stacked_errors(spec, x0);
  Eigen::VectorXd guard = log.e0.cwiseAbs() * cfg.guard_error_factor;
  guard = guard.cwiseMax(cfg.guard_error_floor);

  DecisionTrajectory z;
  bool have_prev = false;
  log.ticks.reserve(n_ticks);

  for (int k = 0; k < n_ticks; ++k) {
    const Eigen::VectorXd e = stacked_errors(spec, x);
    if ((e.cwiseAbs().array() > guard.array()).any()) {
      log.diverged = true;
      log.divergence_reason = "task error exceeded divergence guard";
      break;
    }
    if (pack(x).cwiseAbs().maxCoeff() > cfg.guard_state_limit || !pack(x).allFinite()) {
      log.diverged = true;
      log.divergence_reason = "state exceeded magnitude limit";
      break;
    }

    if (have_prev) z = warm_start_shift(program, z);
    const SolveResult r =
        ws.solve(program, pack(x), have_prev ? &z : nullptr);
    if (r.status == SolveStatus::Diverged) {
      log.diverged = true;
      log.divergence_reason = "solver diverged";
      break;
    }
    z = r.z;
    have_prev = true;

    TickRecord rec;
    rec.t = x.t;
    rec.x = x;
    rec.u = z.w[0].head(program.nu);
    rec.e = e;
    rec.kkt = r.kkt_residual;
    rec.solve_ms = r.solve_ms;
    rec.violation_max = program.max_hard_violation(pack(x), z.w[0]);
    rec.converged = r.converged;
    rec.iterations = r.sqp_iterations;
    log.ticks.push_back(std::move(rec));

    const ControlInput u{z.w[0].head(program.nu)};
    x = cfg.plant == PlantKind::Nominal ? step_nominal(x, u, cfg.control_dt)
                                        : step_plant(x, u, cfg.control_dt, lag);
  }
  return log;
}

RunMetrics compute_metrics(const RunLog& log) {
  if (log.ticks.empty()) throw std::invalid_argument("compute_metrics: empty log");
  const int ch = static_cast<int>(log.ticks.front().e.size());
  RunMetrics m;
  m.rmse = Eigen::VectorXd::Zero(ch);
  m.peak_abs = Eigen::VectorXd::Zero(ch);
  std::vector<double> times;
  times.reserve(log.ticks.size());
  for (size_t k = 0; k < log.ticks.size(); ++k) {
    const TickRecord& r = log.ticks[k];
    m.rmse += r.e.cwiseAbs2();
    m.peak_abs = m.peak_abs.cwiseMax(r.e.cwiseAbs());
    m.max_violation = std::max(m.max_violation, r.violation_max);
    if (k > 0) m.smoothness += (r.u - log.ticks[k - 1].u).squaredNorm();
    times.push_back(r.solve_ms);
    if (!r.converged) ++m.solve.non_converged;
  }
  m.rmse = (m.rmse / static_cast<double>(log.ticks.size())).cwiseSqrt();
  std::sort(times.begin(), times.end());
  const size_t n = times.size();
  m.solve.ticks = static_cast<int>(n);
  m.solve.median_ms = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  m.solve.p95_ms = times[std::min(n - 1, static_cast<size_t>(0.95 * (n - 1) + 0.5))];
  m.solve.max_ms = times.back();
  double total = 0.0;
  for (double v : times) total += v;
  m.solve.mean_ms = total / static_cast<double>(n);
  return m;
}

double settling_time(const RunLog& log, int channel, double fraction) {
  if (log.ticks.empty()) throw std::invalid_argument("settling_time: empty log");
  const double e0 = std::abs(log.e0(channel));
  const double level = fraction * e0;
  const double t0 = log.ticks.front().t;
  for (int k = static_cast<int>(log.ticks.size()) - 1; k >= 0; --k) {
    if (std::abs(log.ticks[k].e(channel)) > level) {
      if (k + 1 == static_cast<int>(log.ticks.size()))
        return std::numeric_limits<double>::infinity();
      return log.ticks[k + 1].t - t0;
    }
  }
  return 0.0;
}

DecayEnvelope decay_envelope_check(const RunLog& log, int channel, double alpha,
                                   double tol_fraction) {
  if (log.ticks.empty()) throw std::invalid_argument("decay_envelope_check: empty log");
  const double e0 = log.ticks.front().e(channel);
  const double t0 = log.ticks.front().t;
  DecayEnvelope out;
  if (e0 == 0.0) {
    out.pass = false;
    return out;
  }
  double worst = 0.0;
  for (const TickRecord& r : log.ticks) {
    const double ref = e0 * std::exp(-alpha * (r.t - t0));
    worst = std::max(worst, std::abs(r.e(channel) - ref));
  }
  out.max_deviation_fraction = worst / std::abs(e0);
  out.pass = out.max_deviation_fraction <= tol_fraction;
  return out;
}

double fit_decay_rate(const RunLog& log, int channel) {
  if (log.ticks.empty()) throw std::invalid_argument("fit_decay_rate: empty log");
  const double e0 = std::abs(log.ticks.front().e(channel));
  if (e0 == 0.0) return 0.0;
  const double floor = std::max(1e-9, 1e-6 * e0);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  const double t0 = log.ticks.front().t;
  for (const TickRecord& r : log.ticks) {
    const double mag = std::abs(r.e(channel));
    if (mag <= floor) break;  // regression over the leading decay only
    const double x = r.t - t0, y = std::log(mag);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 3) throw std::invalid_argument("fit_decay_rate: too few samples above floor");
  const double denom = n * sxx - sx * sx;
  return -(n * sxy - sx * sy) / denom;
}

}  // namespace tsmpc
