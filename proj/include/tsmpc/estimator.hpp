#pragma once

#include <Eigen/Dense>
#include <array>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsmpc {

// Local quadratic surface model
//   s_a(px, py) = a1 + a2 px + a3 py + a4 px py + a5 px^2 + a6 py^2.
// Inactive basis columns (dropped by a rank-deficient fit) carry zero
// coefficients, so evaluation never needs the active mask.
struct SurfaceModel {
  Eigen::Matrix<double, 6, 1> a = Eigen::Matrix<double, 6, 1>::Zero();
  std::array<bool, 6> active = {true, true, true, true, true, true};
  int rank = 6;

  template <typename S>
  S height(const S& px, const S& py) const {
    return a(0) + a(1) * px + a(2) * py + a(3) * px * py + a(4) * px * px +
           a(5) * py * py;
  }
};

inline double predict(const SurfaceModel& m, double px, double py) {
  return m.height(px, py);
}

class MeasurementBuffer {
 public:
  explicit MeasurementBuffer(int capacity = 200) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("MeasurementBuffer: capacity < 1");
  }

  void push(const Eigen::Vector3d& p) {
    if (!p.allFinite())
      throw std::invalid_argument("MeasurementBuffer: non-finite measurement");
    entries_.push_back(p);
    if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }
  void push(const std::vector<Eigen::Vector3d>& pts) {
    for (const auto& p : pts) push(p);
  }

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  const std::deque<Eigen::Vector3d>& entries() const { return entries_; }

 private:
  int capacity_;
  std::deque<Eigen::Vector3d> entries_;
};

struct RankDeficientError : std::runtime_error {
  int rank;
  explicit RankDeficientError(int r, const std::string& what)
      : std::runtime_error(what), rank(r) {}
};

// Least squares over the six-term quadratic basis via column-pivoted QR.
// Rank-deficient sample sets (fewer independent columns than 6, e.g. all
// p_y equal) are fit on the pivot-selected reduced basis with the dropped
// coefficients zeroed. Fewer than 6 points raise RankDeficientError.
SurfaceModel fit_surface(const std::vector<Eigen::Vector3d>& points);
SurfaceModel fit_surface(const MeasurementBuffer& buffer);

// Sum of squared prediction residuals over a point set.
double fit_residual(const SurfaceModel& m, const std::vector<Eigen::Vector3d>& points);

}  // namespace tsmpc
