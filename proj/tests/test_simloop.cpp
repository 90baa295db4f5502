#include <cmath>
#include <limits>

#include "doctest.h"
#include "tsmpc/simloop.hpp"

using namespace tsmpc;

namespace {

State pinned_start() {
  State x;
  x.q = Eigen::Vector3d(-1.0, M_PI / 4, M_PI / 2);
  x.qdot = Eigen::Vector3d::Zero();
  x.t = 0.0;
  return x;
}

OcpSpec decay_spec(int horizon) {
  OcpSpec spec;
  spec.horizon = horizon;
  spec.dt = 0.01;
  spec.mu = 1e-5;
  spec.Wr = Eigen::Matrix3d::Identity();
  spec.costs.push_back({make_tracking_task(), CostKind::FirstOrderDecay,
                        Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(2, 2)});
  return spec;
}

RunLog synthetic_exponential(double c, double alpha, double dt, int n) {
  RunLog log;
  log.dt = dt;
  log.e0 = Eigen::VectorXd::Constant(1, c);
  for (int k = 0; k < n; ++k) {
    TickRecord r;
    r.t = k * dt;
    r.e = Eigen::VectorXd::Constant(1, c * std::exp(-alpha * r.t));
    r.u = Eigen::Vector3d::Zero();
    r.converged = true;
    log.ticks.push_back(r);
  }
  return log;
}

}  // namespace

TEST_CASE("error guard aborts before the first solve when tripped") {
  ClosedLoopConfig cfg;
  cfg.duration = 1.0;
  cfg.guard_error_factor = 0.9;  // initial error already exceeds 0.9x itself
  const RunLog log = run_closed_loop(decay_spec(10), pinned_start(), cfg);
  CHECK(log.diverged);
  CHECK(log.divergence_reason.find("task error") != std::string::npos);
  CHECK(log.ticks.empty());
}

TEST_CASE("state magnitude guard aborts the run") {
  ClosedLoopConfig cfg;
  cfg.duration = 1.0;
  cfg.guard_state_limit = 0.5;  // |q2| = pi/4 already above
  const RunLog log = run_closed_loop(decay_spec(10), pinned_start(), cfg);
  CHECK(log.diverged);
  CHECK(log.divergence_reason.find("state") != std::string::npos);
  CHECK(log.ticks.empty());
}

TEST_CASE("settling time matches the analytic crossing of an exponential") {
  const RunLog log = synthetic_exponential(0.8, 2.0, 0.01, 400);
  const double t_half = settling_time(log, 0, 0.5);
  CHECK(std::abs(t_half - std::log(2.0) / 2.0) <= 0.01);
  CHECK(settling_time(log, 0, 2.0) == 0.0);
  CHECK(std::isinf(settling_time(log, 0, 1e-6)));
}

TEST_CASE("decay envelope accepts the exact response and flags corruption") {
  RunLog log = synthetic_exponential(0.8, 2.0, 0.01, 200);
  DecayEnvelope env = decay_envelope_check(log, 0, 2.0, 0.10);
  CHECK(env.pass);
  CHECK(env.max_deviation_fraction <= 1e-12);

  log.ticks[50].e(0) += 0.2;  // 25% of |e(0)|
  env = decay_envelope_check(log, 0, 2.0, 0.10);
  CHECK(!env.pass);
  CHECK(env.max_deviation_fraction == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("decay rate regression recovers the true exponent") {
  const RunLog log = synthetic_exponential(0.7, 3.0, 0.01, 300);
  CHECK(fit_decay_rate(log, 0) == doctest::Approx(3.0).epsilon(1e-9));

  RunLog tiny = synthetic_exponential(0.7, 3.0, 0.01, 2);
  CHECK_THROWS_AS(fit_decay_rate(tiny, 0), std::invalid_argument);
}

TEST_CASE("run metrics reduce a hand-checkable log") {
  RunLog log;
  log.dt = 0.01;
  log.e0 = Eigen::Vector2d(3, 4);
  TickRecord a;
  a.t = 0.0;
  a.e = Eigen::Vector2d(3, 4);
  a.u = Eigen::Vector3d(1, 0, 0);
  a.violation_max = 0.5;
  a.solve_ms = 2.0;
  a.converged = true;
  TickRecord b;
  b.t = 0.01;
  b.e = Eigen::Vector2d(-1, 2);
  b.u = Eigen::Vector3d(0, 2, 0);
  b.violation_max = 0.25;
  b.solve_ms = 1.0;
  b.converged = false;
  log.ticks = {a, b};

  const RunMetrics m = compute_metrics(log);
  CHECK(m.rmse(0) == doctest::Approx(std::sqrt(5.0)));
  CHECK(m.rmse(1) == doctest::Approx(std::sqrt(10.0)));
  CHECK(m.peak_abs(0) == 3.0);
  CHECK(m.peak_abs(1) == 4.0);
  CHECK(m.max_violation == 0.5);
  CHECK(m.smoothness == doctest::Approx(5.0));
  CHECK(m.solve.median_ms == doctest::Approx(1.5));
  CHECK(m.solve.mean_ms == doctest::Approx(1.5));
  CHECK(m.solve.max_ms == 2.0);
  CHECK(m.solve.ticks == 2);
  CHECK(m.solve.non_converged == 1);

  CHECK_THROWS_AS(compute_metrics(RunLog{}), std::invalid_argument);
}

TEST_CASE("nominal closed loop realizes the commanded first-order decay") {
  ClosedLoopConfig cfg;
  cfg.duration = 0.5;
  const RunLog log = run_closed_loop(decay_spec(10), pinned_start(), cfg);
  REQUIRE(!log.diverged);
  REQUIRE(static_cast<int>(log.ticks.size()) == 50);
  CHECK(log.dt == 0.01);
  CHECK(log.e0(0) == doctest::Approx(-2.0));
  CHECK(log.e0(1) == doctest::Approx(std::sqrt(2.0) - 1.5));
  CHECK(log.ticks[0].t == 0.0);
  CHECK(log.ticks[1].t == doctest::Approx(0.01));
  for (const TickRecord& r : log.ticks) CHECK(r.converged);

  const DecayEnvelope env = decay_envelope_check(log, 0, 2.0, 0.10);
  CHECK(env.pass);
  const double rate = fit_decay_rate(log, 0);
  CHECK(rate > 1.7);
  CHECK(rate < 2.3);
}
