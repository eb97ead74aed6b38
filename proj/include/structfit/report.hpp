#pragma once

// Output plumbing for experiment runs: CSV tables with a schema version
// column, hand-written SVG line charts, FNV-1a artifact hashes and a JSON
// manifest that records the resolved configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "structfit/error.hpp"
#include "structfit/trainer.hpp"

namespace structfit {

inline constexpr int kCsvSchemaVersion = 1;

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  CsvTable& row(const std::vector<std::string>& cells) {
    require(cells.size() == columns_.size(), "csv row has " + std::to_string(cells.size()) + " cells, expected " +
                                                 std::to_string(columns_.size()));
    rows_.push_back(cells);
    return *this;
  }

  [[nodiscard]] std::string str() const {
    std::string out = "schema_version";
    for (const auto& c : columns_) out += "," + c;
    out += "\n";
    for (const auto& r : rows_) {
      out += std::to_string(kCsvSchemaVersion);
      for (const auto& c : r) out += "," + c;
      out += "\n";
    }
    return out;
  }

  [[nodiscard]] std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string num(double v) { return format_number(v); }

// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Collects artifacts written under one output directory.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir_ / name).string());
    out << content;
    if (!out) throw IoError("write failed for " + (dir_ / name).string());
    hashes_[name] = hex64(fnv1a64(content));
  }

  void manifest(const std::string& command, const nlohmann::json& config) {
    nlohmann::json m;
    m["command"] = command;
    m["schema_version"] = kCsvSchemaVersion;
    m["config"] = config;
    m["artifacts"] = hashes_;
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in " + dir_.string());
    out << m.dump(2) << "\n";
  }

  [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
  [[nodiscard]] const std::map<std::string, std::string>& hashes() const { return hashes_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> hashes_;
};

// ---------------------------------------------------------------------------
// Line / histogram charts.

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional symmetric error bars
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 420;
};

namespace svg_detail {

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

}  // namespace svg_detail

inline std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& o) {
  using namespace svg_detail;
  const double left = 64, right = 150, top = 36, bottom = 48;
  const double pw = o.width - left - right, ph = o.height - top - bottom;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto tx = [&](double x) { return o.log_x ? std::log10(x) : x; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (o.log_x && s.x[i] <= 0)) continue;
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, s.y[i] - e);
      y1 = std::max(y1, s.y[i] + e);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << f2(left + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(o.title)
    << "</text>\n";
  s << "<rect x=\"" << f2(left) << "\" y=\"" << f2(top) << "\" width=\"" << f2(pw) << "\" height=\"" << f2(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    const double xl = o.log_x ? std::pow(10.0, xv) : xv;
    s << "<line x1=\"" << f2(left - 4) << "\" y1=\"" << f2(py(yv)) << "\" x2=\"" << f2(left) << "\" y2=\""
      << f2(py(yv)) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << f2(left - 6) << "\" y=\"" << f2(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
    s << "<line x1=\"" << f2(left + pw * k / 4.0) << "\" y1=\"" << f2(top + ph) << "\" x2=\"" << f2(left + pw * k / 4.0)
      << "\" y2=\"" << f2(top + ph + 4) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << f2(left + pw * k / 4.0) << "\" y=\"" << f2(top + ph + 16) << "\" text-anchor=\"middle\">"
      << tick(xl) << "</text>\n";
  }
  s << "<text x=\"" << f2(left + pw / 2) << "\" y=\"" << o.height - 8 << "\" text-anchor=\"middle\">"
    << esc(o.x_label) << "</text>\n";
  s << "<text transform=\"translate(14," << f2(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << esc(o.y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    std::string pts;
    for (std::size_t i = 0; i < se.x.size(); ++i) {
      if (!std::isfinite(se.y[i]) || (o.log_x && se.x[i] <= 0)) continue;
      pts += f2(px(se.x[i])) + "," + f2(py(se.y[i])) + " ";
      if (i < se.err.size() && std::isfinite(se.err[i]) && se.err[i] > 0) {
        s << "<line x1=\"" << f2(px(se.x[i])) << "\" y1=\"" << f2(py(se.y[i] - se.err[i])) << "\" x2=\""
          << f2(px(se.x[i])) << "\" y2=\"" << f2(py(se.y[i] + se.err[i])) << "\" stroke=\"" << color(k) << "\"/>\n";
      }
    }
    if (!pts.empty()) pts.pop_back();
    s << "<polyline fill=\"none\" stroke=\"" << color(k) << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    const double ly = top + 14 + 16.0 * static_cast<double>(k);
    s << "<line x1=\"" << f2(left + pw + 10) << "\" y1=\"" << f2(ly - 4) << "\" x2=\"" << f2(left + pw + 30)
      << "\" y2=\"" << f2(ly - 4) << "\" stroke=\"" << color(k) << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << f2(left + pw + 34) << "\" y=\"" << f2(ly) << "\">" << esc(se.name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// Histogram as a step polyline over equal-width bins.
inline std::string histogram_svg(const std::vector<double>& values, int bins, const ChartOptions& o) {
  Series s;
  s.name = "count";
  double lo = 0.0, hi = 1.0;
  if (!values.empty()) {
    lo = *std::min_element(values.begin(), values.end());
    hi = *std::max_element(values.begin(), values.end());
  }
  if (hi <= lo) hi = lo + 1.0;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
    counts[std::min(b, counts.size() - 1)] += 1.0;
  }
  const double w = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    s.x.push_back(lo + b * w);
    s.y.push_back(counts[static_cast<std::size_t>(b)]);
    s.x.push_back(lo + (b + 1) * w);
    s.y.push_back(counts[static_cast<std::size_t>(b)]);
  }
  return line_chart_svg({s}, o);
}

}  // namespace structfit
