#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tsmpc/simloop.hpp"

namespace tsmpc {

// Per-tick extras logged by surface-following runs, appended to the base
// CSV schema as surf_err,vel_err,a1..a6.
struct SurfaceTickExtras {
  double surf_err = 0.0;  // true-profile height error at the tool (signed)
  double vel_err = 0.0;
  Eigen::Matrix<double, 6, 1> coeffs = Eigen::Matrix<double, 6, 1>::Zero();
};

inline constexpr const char* kRunCsvHeader =
    "t,q1,q2,q3,qd1,qd2,qd3,u1,u2,u3,e1,e2,kkt,solve_ms,violation_max";
inline constexpr const char* kSurfaceCsvSuffix = ",surf_err,vel_err,a1,a2,a3,a4,a5,a6";

// Renders a run log to the pinned CSV schema. extras, when given, must have
// one entry per tick. Numbers are emitted with %.17g so identical runs are
// byte-identical.
std::string run_csv(const RunLog& log,
                    const std::vector<SurfaceTickExtras>* extras = nullptr);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& content);

// Minimal self-contained SVG line plot; one polyline per series.
struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};
std::string render_svg_plot(const std::string& title, const std::string& x_label,
                            const std::string& y_label,
                            const std::vector<PlotSeries>& series);

}  // namespace tsmpc
