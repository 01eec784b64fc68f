#include "lmk/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lmk/errors.hpp"

namespace lmk {

std::string reference_table() {
  std::ostringstream os;
  os << "Published reference values (not desk-reproducible)\n";
  char buf[256];
  for (const auto& c : kReferenceConstants) {
    std::snprintf(buf, sizeof buf, "  %-38s %8.2f%-2s %s  [not desk-reproducible]\n", std::string(c.key).c_str(),
                  c.value, std::string(c.unit).c_str(), std::string(c.description).c_str());
    os << buf;
  }
  return os.str();
}

nlohmann::json reference_json() {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : kReferenceConstants) {
    j.push_back({{"key", c.key}, {"description", c.description}, {"value", c.value}, {"unit", c.unit},
                 {"desk_reproducible", false}});
  }
  return j;
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  out << record.dump() << '\n';
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series, double y_max) {
  constexpr double kW = 560, kH = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  double x_max = 1.0;
  for (const auto& s : series) {
    for (double x : s.x) x_max = std::max(x_max, x);
  }
  auto px = [&](double x) { return kLeft + pw * x / x_max; };
  auto py = [&](double y) { return kTop + ph * (1.0 - std::clamp(y / y_max, 0.0, 1.0)); };
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"};

  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                kW, kH);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"22\" font-size=\"14\">", kLeft);
  os << buf << escape_xml(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = y_max * i / 5.0, xv = x_max * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2g</text>\n",
                  kLeft, py(yv), kLeft + pw, py(yv), kLeft - 6, py(yv) + 4, yv);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n", px(xv),
                  kTop + ph + 16, xv);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", kLeft, kTop,
                pw, ph);
  os << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">", kLeft + pw / 2, kH - 12);
  os << buf << escape_xml(x_label) << "</text>\n";
  std::snprintf(buf, sizeof buf, "<text transform=\"translate(16,%.1f) rotate(-90)\" text-anchor=\"middle\">",
                kTop + ph / 2);
  os << buf << escape_xml(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 6];
    os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << color << '"'
       << (series[s].dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(series[s].x[i]), py(series[s].y[i]));
      os << buf;
    }
    os << "\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(s);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"%s/>"
                  "<text x=\"%.1f\" y=\"%.1f\">",
                  kLeft + pw + 10, ly, kLeft + pw + 30, ly, color, series[s].dashed ? " stroke-dasharray=\"6,4\"" : "",
                  kLeft + pw + 36, ly + 4);
    os << buf << escape_xml(series[s].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string sweep_table(const std::vector<SweepRow>& rows, const std::string& metric) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%10s %12s %10s %8s\n", "samples", metric.c_str(), "std", "repeats");
  os << buf;
  for (const auto& r : rows) {
    const std::string label = r.full ? std::to_string(r.size) + " (full)" : std::to_string(r.size);
    std::snprintf(buf, sizeof buf, "%10s %12.3f %10.3f %8zu\n", label.c_str(), r.mean, r.stddev, r.values.size());
    os << buf;
  }
  return os.str();
}

}  // namespace lmk
