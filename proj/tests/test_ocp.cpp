#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tsmpc/ocp.hpp"

using namespace tsmpc;

namespace {

ControlInput random_u(std::mt19937_64& rng) {
  return ControlInput{Eigen::Vector3d(oracles::uniform(rng, -4, 4),
                                      oracles::uniform(rng, -4, 4),
                                      oracles::uniform(rng, -4, 4))};
}

}  // namespace

TEST_CASE("cost C equals cost B under the decay weight mapping") {
  std::mt19937_64 rng(42);
  double worst = 0.0;
  for (const TaskError& task : {make_tracking_task(), oracles::make_ee_velocity_task()}) {
    for (int i = 0; i < 5000; ++i) {
      const State x = oracles::random_state(rng);
      const ControlInput u = random_u(rng);
      const Eigen::MatrixXd Ws = oracles::random_spd(rng, 2, 0.5);
      const Eigen::Vector2d Ke(oracles::uniform(rng, 0.2, 5.0),
                               oracles::uniform(rng, 0.2, 5.0));
      const Eigen::MatrixXd Wr = oracles::random_spd(rng, 3, 0.5);
      const double mu = std::pow(10.0, oracles::uniform(rng, -6, -1));
      const double cC = stage_cost_C(task, x, u, Ws, Ke, mu, Wr);
      const double cB = stage_cost_B(task, x, u, qb_from_decay(Ws, Ke), mu, Wr);
      worst = std::max(worst, std::abs(cC - cB) / std::max(1e-300, std::abs(cC)));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("qb_from_decay closed form in one dimension") {
  Eigen::MatrixXd Ws(1, 1);
  Ws << 3.0;
  Eigen::VectorXd Ke(1);
  Ke << 2.0;
  const Eigen::MatrixXd Q = qb_from_decay(Ws, Ke);
  Eigen::MatrixXd expect(2, 2);
  expect << 12.0, 6.0, 6.0, 3.0;
  CHECK(Q.isApprox(expect, 1e-15));
  CHECK_THROWS_AS(qb_from_decay(Ws, Eigen::Vector2d(1, 1)), std::invalid_argument);
}

TEST_CASE("all three stage costs are nonnegative") {
  std::mt19937_64 rng(3);
  const TaskError task = make_tracking_task();
  for (int i = 0; i < 500; ++i) {
    const State x = oracles::random_state(rng);
    const ControlInput u = random_u(rng);
    const Eigen::MatrixXd Q = oracles::random_spd(rng, 2, 0.1);
    const Eigen::MatrixXd Qb = oracles::random_spd(rng, 4, 0.1);
    const Eigen::MatrixXd Ws = oracles::random_spd(rng, 2, 0.1);
    const Eigen::MatrixXd Wr = oracles::random_spd(rng, 3, 0.1);
    const Eigen::Vector2d Ke(1.0, 2.0);
    CHECK(stage_cost_A(task, x, u, Q, 1e-4, Wr) >= 0.0);
    CHECK(stage_cost_B(task, x, u, Qb, 1e-4, Wr) >= 0.0);
    CHECK(stage_cost_C(task, x, u, Ws, Ke, 1e-4, Wr) >= 0.0);
  }
}

TEST_CASE("cost A at zero input reduces to the weighted squared error") {
  State x;
  x.q = Eigen::Vector3d(-1, M_PI / 4, M_PI / 2);
  x.qdot = Eigen::Vector3d::Zero();
  x.t = 0.0;
  const TaskError task = make_tracking_task();
  const ControlInput u{Eigen::Vector3d::Zero()};
  const Eigen::MatrixXd Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd e = task_error(task, x);
  CHECK(stage_cost_A(task, x, u, Q, 0.123, Eigen::MatrixXd::Identity(3, 3)) ==
        doctest::Approx(2.0 * e.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("assemble produces integrator-chain stage dynamics") {
  OcpSpec spec;
  spec.horizon = 4;
  spec.dt = 0.05;
  spec.mu = 1e-3;
  spec.costs.push_back({make_tracking_task(), CostKind::TrackingLq,
                        Eigen::MatrixXd::Identity(2, 2), {}});
  State x0;
  x0.q = Eigen::Vector3d(0.1, 0.2, 0.3);
  x0.qdot = Eigen::Vector3d(1, 0, -1);
  x0.t = 2.0;
  const Program p = assemble(spec, x0);
  CHECK(p.N == 4);
  CHECK(p.nx == 7);
  CHECK(p.nu == 3);
  CHECK(p.ns == 0);
  const Eigen::VectorXd w = Eigen::Vector3d(3, -1, 2);
  const Eigen::VectorXd next = p.dynamics(pack(x0), w);
  const State expect = step_nominal(x0, ControlInput{w}, spec.dt);
  CHECK((next - pack(expect)).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("trajectory cost sums stages zero to N-1 and no terminal term") {
  // Clock task isolates the indexing: stage cost t_k^2 through e(x) = t.
  const TaskError clock{"clock", SmoothVectorFn::make(7, 1, [](const auto& x) {
                          using S = typename std::decay_t<decltype(x)>::value_type;
                          return std::vector<S>{x[6]};
                        })};
  OcpSpec spec;
  spec.horizon = 2;
  spec.dt = 1.0;
  spec.mu = 0.0;
  spec.costs.push_back({clock, CostKind::TrackingLq, Eigen::MatrixXd::Identity(1, 1), {}});
  State x0;
  x0.q = Eigen::Vector3d::Zero();
  x0.qdot = Eigen::Vector3d::Zero();
  x0.t = 5.0;
  const Program p = assemble(spec, x0);
  const DecisionTrajectory z = cold_start(p, pack(x0));
  // States carry t = 5, 6, 7; only 5^2 and 6^2 may contribute.
  CHECK(trajectory_cost(p, z) == doctest::Approx(61.0).epsilon(1e-12));
}

TEST_CASE("effort term scales linearly with mu") {
  OcpSpec spec;
  spec.horizon = 3;
  spec.dt = 0.01;
  spec.costs.push_back({make_tracking_task(), CostKind::FirstOrderDecay,
                        Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(2, 2)});
  State x0;
  x0.q = Eigen::Vector3d(-1, M_PI / 4, M_PI / 2);
  x0.qdot = Eigen::Vector3d::Zero();
  x0.t = 0.0;
  spec.mu = 1e-3;
  const Program p1 = assemble(spec, x0);
  spec.mu = 2e-3;
  const Program p2 = assemble(spec, x0);
  DecisionTrajectory z = cold_start(p1, pack(x0));
  for (auto& w : z.w) w.setConstant(1.5);
  const double base = [&] {
    spec.mu = 0.0;
    return trajectory_cost(assemble(spec, x0), z);
  }();
  const double c1 = trajectory_cost(p1, z) - base;
  const double c2 = trajectory_cost(p2, z) - base;
  CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(1e-9));
  CHECK(c1 == doctest::Approx(3 * 1e-3 * 3 * 1.5 * 1.5).epsilon(1e-9));
}

TEST_CASE("soft rows are shifted by their slack, hard rows are not") {
  OcpSpec spec;
  spec.horizon = 1;
  spec.dt = 0.01;
  spec.mu = 1e-4;
  spec.costs.push_back({make_tracking_task(), CostKind::FirstOrderDecay,
                        Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(2, 2)});
  ConstraintSpec soft;
  soft.h = make_joint_limit_task(Eigen::Vector3d(-2, -2, -2), Eigen::Vector3d(2, 2, 2), 1.0);
  soft.gain = Eigen::VectorXd::Constant(12, 2.0);
  soft.hard = false;
  soft.soft_weight = Eigen::VectorXd::Constant(12, 10.0);
  spec.constraints.push_back(soft);

  State x0;
  x0.q = Eigen::Vector3d(0.5, 0.7, 1.0);
  x0.qdot = Eigen::Vector3d::Zero();
  x0.t = 0.0;
  const Program p = assemble(spec, x0);
  CHECK(p.ns == 12);
  CHECK(p.n_rows == 12);
  CHECK(p.slack_weight.isApprox(Eigen::VectorXd::Constant(12, 10.0)));

  Eigen::VectorXd w = Eigen::VectorXd::Zero(p.nw());
  const Eigen::VectorXd g0 = p.ineq_values(pack(x0), w);
  w(p.nu + 4) = 0.25;
  const Eigen::VectorXd g1 = p.ineq_values(pack(x0), w);
  CHECK(g1(4) == doctest::Approx(g0(4) - 0.25).epsilon(1e-12));
  CHECK((g1 - g0).lpNorm<Eigen::Infinity>() == doctest::Approx(0.25).epsilon(1e-12));
  // Soft rows never count toward the hard violation.
  CHECK(p.max_hard_violation(pack(x0), w) == 0.0);
}

TEST_CASE("input bounds become hard rows only for finite limits") {
  OcpSpec spec;
  spec.horizon = 1;
  spec.dt = 0.01;
  spec.mu = 1e-4;
  spec.costs.push_back({make_tracking_task(), CostKind::FirstOrderDecay,
                        Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(2, 2)});
  const double inf = std::numeric_limits<double>::infinity();
  spec.bounds.lower = Eigen::Vector3d(-1.0, -inf, -2.0);
  spec.bounds.upper = Eigen::Vector3d(1.0, 5.0, inf);
  State x0;
  x0.q = Eigen::Vector3d::Zero();
  x0.qdot = Eigen::Vector3d::Zero();
  x0.t = 0.0;
  const Program p = assemble(spec, x0);
  CHECK(p.n_rows == 4);
  Eigen::VectorXd w = Eigen::Vector3d(2.0, 0.0, 0.0);
  CHECK(p.max_hard_violation(pack(x0), w) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("assemble rejects malformed specifications") {
  State x0;
  x0.q = Eigen::Vector3d::Zero();
  x0.qdot = Eigen::Vector3d::Zero();
  OcpSpec spec;
  spec.costs.push_back({make_tracking_task(), CostKind::TrackingLq,
                        Eigen::MatrixXd::Identity(2, 2), {}});
  spec.horizon = 0;
  CHECK_THROWS_AS(assemble(spec, x0), std::invalid_argument);
  spec.horizon = 5;
  spec.dt = 0.0;
  CHECK_THROWS_AS(assemble(spec, x0), std::invalid_argument);
  spec.dt = 0.01;

  OcpSpec bad = spec;
  bad.costs[0].weight = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(assemble(bad, x0), std::invalid_argument);

  bad = spec;
  bad.costs[0].weight << 1.0, 2.0, 3.0, 4.0;  // asymmetric
  CHECK_THROWS_AS(assemble(bad, x0), std::invalid_argument);

  bad = spec;
  bad.mu = -1.0;
  CHECK_THROWS_AS(assemble(bad, x0), std::invalid_argument);

  bad = spec;
  ConstraintSpec cs;
  cs.h = make_joint_limit_task(Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1), 1.0);
  cs.gain = Eigen::VectorXd::Constant(12, 2.0);
  cs.hard = false;
  cs.soft_weight = Eigen::VectorXd::Constant(12, -1.0);
  bad.constraints.push_back(cs);
  CHECK_THROWS_AS(assemble(bad, x0), std::invalid_argument);

  bad = spec;
  bad.bounds.lower = Eigen::Vector3d(1, 1, 1);
  bad.bounds.upper = Eigen::Vector3d(-1, 2, 2);
  CHECK_THROWS_AS(assemble(bad, x0), std::invalid_argument);
}
