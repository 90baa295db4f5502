#include "tsmpc/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsmpc {
namespace {

void append_num(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string run_csv(const RunLog& log, const std::vector<SurfaceTickExtras>* extras) {
  if (extras && extras->size() != log.ticks.size())
    throw std::invalid_argument("run_csv: extras size mismatch");
  std::string out = kRunCsvHeader;
  if (extras) out += kSurfaceCsvSuffix;
  out += '\n';
  for (size_t k = 0; k < log.ticks.size(); ++k) {
    const TickRecord& r = log.ticks[k];
    if (r.x.n_q() != 3 || r.u.size() != 3 || r.e.size() < 2)
      throw std::invalid_argument("run_csv: schema requires 3 joints and 2 error channels");
    append_num(out, r.t);
    for (int i = 0; i < 3; ++i) {
      out += ',';
      append_num(out, r.x.q(i));
    }
    for (int i = 0; i < 3; ++i) {
      out += ',';
      append_num(out, r.x.qdot(i));
    }
    for (int i = 0; i < 3; ++i) {
      out += ',';
      append_num(out, r.u(i));
    }
    for (int i = 0; i < 2; ++i) {
      out += ',';
      append_num(out, r.e(i));
    }
    out += ',';
    append_num(out, r.kkt);
    out += ',';
    append_num(out, r.solve_ms);
    out += ',';
    append_num(out, r.violation_max);
    if (extras) {
      const SurfaceTickExtras& s = (*extras)[k];
      out += ',';
      append_num(out, s.surf_err);
      out += ',';
      append_num(out, s.vel_err);
      for (int i = 0; i < 6; ++i) {
        out += ',';
        append_num(out, s.coeffs(i));
      }
    }
    out += '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& content) {
  CsvTable t;
  std::istringstream in(content);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    if (first) {
      while (std::getline(ls, cell, ',')) t.header.push_back(cell);
      first = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(t.header.size());
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("read_csv: non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != t.header.size())
      throw std::runtime_error("read_csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

std::string render_svg_plot(const std::string& title, const std::string& x_label,
                            const std::string& y_label,
                            const std::vector<PlotSeries>& series) {
  const int W = 840, H = 480;
  const int ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const PlotSeries& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!std::isfinite(xmin) || xmin == xmax) {
    xmin -= 0.5;
    xmax = xmin + 1.0;
  }
  if (!std::isfinite(ymin) || ymin == ymax) {
    ymin -= 0.5;
    ymax = ymin + 1.0;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  s << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << title << "</text>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
  s << "<text x=\"16\" y=\"" << H / 2
    << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " << H / 2
    << ")\">" << y_label << "</text>\n";
  s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
    << "\" height=\"" << H - mt - mb << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double xv = xmin + g * (xmax - xmin) / 4.0;
    const double yv = ymin + g * (ymax - ymin) / 4.0;
    char lab[32];
    s << "<line x1=\"" << px(xv) << "\" y1=\"" << H - mb << "\" x2=\"" << px(xv)
      << "\" y2=\"" << H - mb + 5 << "\" stroke=\"#444\"/>\n";
    std::snprintf(lab, sizeof(lab), "%.3g", xv);
    s << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18
      << "\" text-anchor=\"middle\" font-size=\"11\">" << lab << "</text>\n";
    s << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml
      << "\" y2=\"" << py(yv) << "\" stroke=\"#444\"/>\n";
    std::snprintf(lab, sizeof(lab), "%.3g", yv);
    s << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << lab << "</text>\n";
  }
  for (size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& sr = series[i];
    s << "<polyline fill=\"none\" stroke=\"" << colors[i % 8]
      << "\" stroke-width=\"1.5\" points=\"";
    for (size_t k = 0; k < sr.x.size(); ++k)
      s << px(sr.x[k]) << ',' << py(sr.y[k]) << ' ';
    s << "\"/>\n";
    s << "<text x=\"" << W - mr - 8 << "\" y=\"" << mt + 18 + 16 * i
      << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << colors[i % 8] << "\">"
      << sr.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace tsmpc
