#include "tsmpc/estimator.hpp"

#include <Eigen/QR>

namespace tsmpc {
namespace {

Eigen::MatrixXd basis_matrix(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::MatrixXd Phi(pts.size(), 6);
  for (size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i](0), y = pts[i](1);
    Phi.row(i) << 1.0, x, y, x * y, x * x, y * y;
  }
  return Phi;
}

}  // namespace

SurfaceModel fit_surface(const std::vector<Eigen::Vector3d>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 6)
    throw RankDeficientError(n, "fit_surface: " + std::to_string(n) +
                                    " points cannot determine 6 coefficients");
  const Eigen::MatrixXd Phi = basis_matrix(points);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = points[i](2);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Phi);
  qr.setThreshold(1e-9);
  const int rank = static_cast<int>(qr.rank());
  SurfaceModel m;
  m.rank = rank;
  if (rank == 6) {
    m.a = qr.solve(z);
    return m;
  }

  // Reduced basis: keep the pivot-selected independent columns, zero the rest.
  m.active.fill(false);
  const auto perm = qr.colsPermutation().indices();
  Eigen::MatrixXd Phi_red(n, rank);
  std::vector<int> cols(rank);
  for (int j = 0; j < rank; ++j) {
    cols[j] = perm(j);
    m.active[static_cast<size_t>(cols[j])] = true;
    Phi_red.col(j) = Phi.col(cols[j]);
  }
  const Eigen::VectorXd a_red = Phi_red.householderQr().solve(z);
  m.a.setZero();
  for (int j = 0; j < rank; ++j) m.a(cols[j]) = a_red(j);
  return m;
}

SurfaceModel fit_surface(const MeasurementBuffer& buffer) {
  return fit_surface(
      std::vector<Eigen::Vector3d>(buffer.entries().begin(), buffer.entries().end()));
}

double fit_residual(const SurfaceModel& m, const std::vector<Eigen::Vector3d>& points) {
  double ss = 0.0;
  for (const auto& p : points) {
    const double r = m.height(p(0), p(1)) - p(2);
    ss += r * r;
  }
  return ss;
}

}  // namespace tsmpc
