#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ebomlc/error.hpp"

namespace ebomlc {

struct ChartSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {
inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#17becf"};
}  // namespace detail

/// Plain SVG line chart. The x-axis spans exactly [min x, max x] over all
/// series; non-finite y values break the polyline. Output depends only on the
/// inputs.
inline std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                                     const std::vector<ChartSeries>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("render_line_chart: x/y length mismatch in '" + s.name + "'");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      if (std::isfinite(s.y[i])) {
        y_min = std::min(y_min, s.y[i]);
        y_max = std::max(y_max, s.y[i]);
      }
    }
  }
  if (!std::isfinite(x_min)) throw UsageError("render_line_chart: no data");
  if (!std::isfinite(y_min)) y_min = 0.0, y_max = 1.0;
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
     << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::xml_escape(title)
     << "</text>\n";
  os << "<g class=\"x-axis\" data-min=\"" << detail::tick_label(x_min) << "\" data-max=\"" << detail::tick_label(x_max)
     << "\">\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = x_min + (x_max - x_min) * i / 5.0;
    os << "<text x=\"" << detail::svg_num(px(v)) << "\" y=\"" << kTop + ph + 15 << "\" text-anchor=\"middle\">"
       << detail::tick_label(v) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
     << detail::xml_escape(x_label) << "</text>\n</g>\n";
  os << "<g class=\"y-axis\">\n<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = y_min + (y_max - y_min) * i / 5.0;
    os << "<text x=\"" << kLeft - 5 << "\" y=\"" << detail::svg_num(py(v) + 4) << "\" text-anchor=\"end\">"
       << detail::tick_label(v) << "</text>\n";
  }
  os << "<text x=\"15\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
     << kTop + ph / 2 << ")\">" << detail::xml_escape(y_label) << "</text>\n</g>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = detail::kPalette[s % std::size(detail::kPalette)];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
      }
      pts.clear();
    };
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += detail::svg_num(px(series[s].x[i])) + "," + detail::svg_num(py(series[s].y[i]));
    }
    flush();
    const double ly = kTop + 10 + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + pw + 35 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(series[s].name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// metrics.csv reading and report emission
// ---------------------------------------------------------------------------

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw FormatError("metrics table: no column '" + name + "'");
  }
  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

/// Missing or empty files are configuration errors.
inline MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("report: missing '" + path + "'");
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw ConfigError("report: '" + path + "' is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("report: non-numeric cell '" + cell + "' in '" + path + "'");
      }
    }
    if (row.size() != t.columns.size()) throw FormatError("report: ragged row in '" + path + "'");
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw ConfigError("report: '" + path + "' has no data rows");
  return t;
}

/// Reads <run_dir>/metrics.csv and writes loss.svg, accuracy.svg, beta.svg
/// and summary.txt next to it. Returns the written file names.
inline std::vector<std::string> emit_report(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(run_dir);
  const MetricsTable t = read_metrics_csv((dir / "metrics.csv").string());
  const auto epoch = t.values("epoch");
  auto series = [&](const std::string& col) { return ChartSeries{col, epoch, t.values(col)}; };
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw FormatError("report: cannot write '" + (dir / name).string() + "'");
    os << body;
  };
  write("loss.svg", render_line_chart("losses", "epoch", "loss",
                                      {series("F_clean"), series("Fbar"), series("G_noisy"), series("Q_mean")}));
  write("accuracy.svg",
        render_line_chart("accuracy", "epoch", "accuracy",
                          {series("acc_train_noisy"), series("acc_test"), series("acc_meta_correction")}));
  write("beta.svg", render_line_chart("barrier multiplier", "epoch", "mean beta", {series("beta_mean")}));

  std::ostringstream s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-22s %14s %14s %14s %14s\n", "metric", "first", "last", "min", "max");
  s << buf;
  for (std::size_t c = 1; c < t.columns.size(); ++c) {
    if (t.columns[c] == "wall_secs") continue;
    const auto v = t.values(t.columns[c]);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    std::snprintf(buf, sizeof buf, "%-22s %14.6g %14.6g %14.6g %14.6g\n", t.columns[c].c_str(), v.front(), v.back(), *lo,
                  *hi);
    s << buf;
  }
  s << "epochs " << t.rows.size() << '\n';
  write("summary.txt", s.str());
  return {"loss.svg", "accuracy.svg", "beta.svg", "summary.txt"};
}

}  // namespace ebomlc
