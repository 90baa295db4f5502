#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tsmpc/task.hpp"

using namespace tsmpc;

namespace {

double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& ref) {
  return (got - ref).lpNorm<Eigen::Infinity>() /
         std::max(1.0, ref.lpNorm<Eigen::Infinity>());
}

Eigen::VectorXd random_xu(std::mt19937_64& rng) {
  const State x = oracles::random_state(rng);
  Eigen::VectorXd xu(10);
  xu << pack(x), oracles::uniform(rng, -2, 2), oracles::uniform(rng, -2, 2),
      oracles::uniform(rng, -2, 2);
  return xu;
}

}  // namespace

TEST_CASE("jacobians match central differences across task expressions") {
  std::mt19937_64 rng(101);
  const TaskError track = make_tracking_task();
  const TaskError vel = oracles::make_ee_velocity_task();
  const TaskError lim =
      make_joint_limit_task(Eigen::Vector3d(-2, -2, -2), Eigen::Vector3d(2, 2, 2), 1.5);
  const Eigen::VectorXd ke = Eigen::Vector2d(2.0, 3.0);

  const std::vector<SmoothVectorFn> fns = {
      track.fn,
      vel.fn,
      make_error_fn(track, 3),
      make_rate_fn(track, 3),
      make_decay_residual_fn(track, ke, 3),
      make_error_and_rate_fn(track, 3),
      make_rate_fn(vel, 3),
      make_decay_residual_fn(lim, Eigen::VectorXd::Constant(12, 2.0), 3),
  };

  int points = 0;
  double worst = 0.0;
  for (const SmoothVectorFn& fn : fns) {
    for (int i = 0; i < 15; ++i) {
      const Eigen::VectorXd xu = random_xu(rng).head(fn.in_dim());
      const JacobianResult jr = jacobian(fn, xu);
      worst = std::max(worst, rel_err(jr.jacobian, oracles::central_fd_jacobian(fn, xu)));
      ++points;
    }
  }
  CHECK(points >= 100);
  CHECK(worst <= 1e-5);
}

TEST_CASE("jacobian value slot matches plain evaluation") {
  std::mt19937_64 rng(7);
  const TaskError track = make_tracking_task();
  const SmoothVectorFn fn = make_decay_residual_fn(track, Eigen::Vector2d(2, 2), 3);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd xu = random_xu(rng);
    const JacobianResult jr = jacobian(fn, xu);
    CHECK((jr.value - fn(xu)).lpNorm<Eigen::Infinity>() <= 1e-14);
  }
}

TEST_CASE("error rate equals the chain rule through the integrator dynamics") {
  // edot must equal de/dq qdot + de/dqdot u + de/dt for any task expression.
  std::mt19937_64 rng(23);
  for (const TaskError& task : {make_tracking_task(), oracles::make_ee_velocity_task()}) {
    for (int i = 0; i < 20; ++i) {
      const State x = oracles::random_state(rng);
      ControlInput u{Eigen::Vector3d(oracles::uniform(rng, -3, 3),
                                     oracles::uniform(rng, -3, 3),
                                     oracles::uniform(rng, -3, 3))};
      const JacobianResult jr = jacobian(task.fn, pack(x));
      const Eigen::VectorXd expect = jr.jacobian.block(0, 0, 2, 3) * x.qdot +
                                     jr.jacobian.block(0, 3, 2, 3) * u.qddot_cmd +
                                     jr.jacobian.col(6);
      const Eigen::VectorXd got = error_rate(task, x, u);
      CHECK((got - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("rate expressions refuse the second-derivative path") {
  const SmoothVectorFn fn = make_rate_fn(make_tracking_task(), 3);
  std::vector<ad::D2> xs(10);
  CHECK_THROWS_AS(fn.eval(xs), std::logic_error);
}

TEST_CASE("dimension mismatches are rejected") {
  const TaskError track = make_tracking_task();
  CHECK_THROWS_AS(track.fn(Eigen::VectorXd::Zero(5)), std::invalid_argument);
  CHECK_THROWS_AS(make_decay_residual_fn(track, Eigen::Vector3d(1, 1, 1), 3),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_decay_residual_fn(track, Eigen::Vector2d(1, -1), 3),
                  std::invalid_argument);
}
