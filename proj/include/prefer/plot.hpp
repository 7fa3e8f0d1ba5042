#pragma once

// SVG line charts from result CSVs. Aggregate files get a mean line with a
// min/max band per arm; per-run files get one line per (arm, seed).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prefer/core.hpp"

namespace prefer::plot {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "CSV is empty", ErrorCode::parse_error);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    require(cells.size() == t.header.size(),
            "CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(t.header.size()),
            ErrorCode::parse_error);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

struct Series {
  std::string label;
  std::vector<double> x, y, lo, hi;  // lo/hi empty when there is no band
};

inline double parse_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::parse_error, "not a number: '" + s + "'");
  }
}

/// Groups rows into series for `metric`.
inline std::vector<Series> extract_series(const Table& t, const std::string& metric) {
  const auto round = t.column("round");
  const auto arm = t.column("arm");
  require(round && arm, "CSV needs round and arm columns", ErrorCode::parse_error);
  const auto mean = t.column(metric + "_mean");
  const auto plain = t.column(metric);
  const auto seed = t.column("seed");
  require(mean || plain, "CSV has no column for metric '" + metric + "'", ErrorCode::parse_error);
  std::map<std::string, Series> by_label;
  std::vector<std::string> order;
  for (const auto& r : t.rows) {
    std::string label = r[*arm];
    if (!mean && seed) label += " seed " + r[*seed];
    auto [it, fresh] = by_label.try_emplace(label);
    if (fresh) {
      it->second.label = label;
      order.push_back(label);
    }
    Series& s = it->second;
    s.x.push_back(parse_number(r[*round]));
    if (mean) {
      s.y.push_back(parse_number(r[*mean]));
      s.lo.push_back(parse_number(r[*t.column(metric + "_min")]));
      s.hi.push_back(parse_number(r[*t.column(metric + "_max")]));
    } else {
      s.y.push_back(parse_number(r[*plain]));
    }
  }
  std::vector<Series> out;
  for (const auto& l : order) out.push_back(std::move(by_label[l]));
  return out;
}

struct ChartOptions {
  std::string title;
  std::string metric = "A_pref";
  int width = 800;
  int height = 480;
};

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                           "#bcbd22", "#17becf"};

inline std::string render_svg(const std::vector<Series>& series, const ChartOptions& opt) {
  require(!series.empty(), "nothing to plot");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min({y0, s.y[i], s.lo.empty() ? s.y[i] : s.lo[i]});
      y1 = std::max({y1, s.y[i], s.hi.empty() ? s.y[i] : s.hi[i]});
    }
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 70, right = 180, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::string title = opt.title.empty() ? opt.metric : opt.title;
  svg << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double yv = y0 + (y1 - y0) * i / 5.0, xv = x0 + (x1 - x0) * i / 5.0;
    svg << "<line x1=\"" << fmt(left) << "\" x2=\"" << fmt(left + pw) << "\" y1=\"" << fmt(py(yv))
        << "\" y2=\"" << fmt(py(yv)) << "\" stroke=\"#e0e0e0\"/>\n";
    svg << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(yv) + 4)
        << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
    svg << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(top + ph + 18)
        << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
  }
  svg << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw)
      << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  svg << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(opt.height - 10)
      << "\" text-anchor=\"middle\">round</text>\n";
  svg << "<text transform=\"translate(16," << fmt(top + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(opt.metric) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    if (!s.lo.empty()) {
      svg << "<polygon fill=\"" << colour << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg << fmt(px(s.x[i])) << ',' << fmt(py(s.hi[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;)
        svg << fmt(px(s.x[i])) << ',' << fmt(py(s.lo[i])) << ' ';
      svg << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      svg << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
    svg << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    svg << "<line x1=\"" << fmt(left + pw + 12) << "\" x2=\"" << fmt(left + pw + 32) << "\" y1=\""
        << fmt(ly) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fmt(left + pw + 38) << "\" y=\"" << fmt(ly + 4) << "\">"
        << escape_xml(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void plot_file(const std::string& in_path, const std::string& out_path,
                      const ChartOptions& opt) {
  std::ifstream in(in_path);
  require(in.good(), "cannot open '" + in_path + "'", ErrorCode::io);
  const auto svg = render_svg(extract_series(read_csv(in), opt.metric), opt);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot write '" + out_path + "'", ErrorCode::io);
  out << svg;
  require(out.good(), "write to '" + out_path + "' failed", ErrorCode::io);
}

}  // namespace prefer::plot
