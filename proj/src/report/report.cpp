#include "uptodate/report/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace uptodate::report {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double mean_or_zero(const harness::AggregateRow& row, const std::string& key) {
  auto it = row.mean.find(key);
  return it == row.mean.end() || std::isnan(it->second) ? 0.0 : it->second;
}

Panel panel(const harness::AggregateTable& t, std::string title, std::string y_label,
            const std::string& key) {
  Panel p{std::move(title), std::move(y_label), {}};
  for (const auto& row : t.rows) p.bars.push_back({row.display, mean_or_zero(row, key)});
  return p;
}

}  // namespace

std::string fmt3(double v) {
  // Avoid printing "-0.000".
  if (std::fabs(v) < 0.0005) v = 0.0;
  return fmt("%.3f", v);
}

std::string render_table(const harness::AggregateTable& table) {
  const harness::Scenario& s = harness::scenario(table.scenario);
  const auto cols = s.table_columns();

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Method"};
  for (const auto& c : cols) header.push_back(c.header);
  cells.push_back(header);
  for (const auto& row : table.rows) {
    std::vector<std::string> line{row.display};
    for (const auto& c : cols) line.push_back(fmt3(row.mean.at(c.key)));
    cells.push_back(line);
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());

  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i == 0) {
        out << line[i] << std::string(width[i] - line[i].size(), ' ');
      } else {
        out << "  " << std::string(width[i] - line[i].size(), ' ') << line[i];
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string render_csv(const harness::AggregateTable& table) {
  const auto cols = harness::scenario(table.scenario).table_columns();
  std::ostringstream out;
  out << "method";
  for (const auto& c : cols) out << ',' << c.key;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.method;
    for (const auto& c : cols) out << ',' << fmt3(row.mean.at(c.key));
    out << '\n';
  }
  return out.str();
}

std::vector<Chart> charts_for(const harness::AggregateTable& t) {
  if (t.scenario == "feature")
    return {{"feature.svg",
             "Adaptive input feature discovery",
             {panel(t, "Accuracy", "accuracy", "acc"), panel(t, "Evidence cost", "samples", "cost")}}};
  if (t.scenario == "openset")
    return {{"openset.svg",
             "Output category and model expansion",
             {panel(t, "Unknown detection", "rate", "unk"),
              panel(t, "Model update success", "rate", "model")}}};
  if (t.scenario == "routine")
    return {{"routine.svg",
             "Action routine reconstruction",
             {panel(t, "Success rate", "rate", "succ"), panel(t, "Routine length", "actions", "len")}},
            {"routine_compression.svg",
             "Routine compression",
             {panel(t, "Compression ratio", "ratio", "comp")}}};
  if (t.scenario == "evidence")
    return {{"evidence.svg",
             "Learning-enhanced thinking",
             {panel(t, "Useful evidence rate", "rate", "useful"),
              panel(t, "Average evidence cost", "cost", "cost")}}};
  return {};
}

std::string render_svg(const Chart& chart) {
  constexpr double kPanelW = 360;
  constexpr double kPlotH = 220;
  constexpr double kTop = 60;
  constexpr double kLeft = 50;
  constexpr double kBottom = 70;
  const double width = kPanelW * static_cast<double>(chart.panels.size());
  const double height = kTop + kPlotH + kBottom;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt("%.0f", width) << "\" height=\""
    << fmt("%.0f", height) << "\" viewBox=\"0 0 " << fmt("%.0f", width) << ' ' << fmt("%.0f", height)
    << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << fmt("%.0f", width) << "\" height=\"" << fmt("%.0f", height)
    << "\" fill=\"#ffffff\"/>\n";
  o << "<text x=\"" << fmt("%.1f", width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">"
    << xml_escape(chart.title) << "</text>\n";

  for (std::size_t p = 0; p < chart.panels.size(); ++p) {
    const Panel& panel = chart.panels[p];
    const double x0 = kPanelW * static_cast<double>(p) + kLeft;
    const double plot_w = kPanelW - kLeft - 20;
    const double base = kTop + kPlotH;
    double top = 1.0;
    for (const auto& b : panel.bars) top = std::max(top, std::ceil(b.value));
    const double scale = kPlotH / top;

    o << "<g class=\"panel\">\n";
    o << "<text x=\"" << fmt("%.1f", x0 + plot_w / 2) << "\" y=\"48\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"13\">"
      << xml_escape(panel.title) << "</text>\n";
    o << "<line x1=\"" << fmt("%.1f", x0) << "\" y1=\"" << fmt("%.1f", base) << "\" x2=\""
      << fmt("%.1f", x0 + plot_w) << "\" y2=\"" << fmt("%.1f", base) << "\" stroke=\"#000000\"/>\n";
    o << "<line x1=\"" << fmt("%.1f", x0) << "\" y1=\"" << fmt("%.1f", kTop) << "\" x2=\"" << fmt("%.1f", x0)
      << "\" y2=\"" << fmt("%.1f", base) << "\" stroke=\"#000000\"/>\n";
    o << "<text x=\"" << fmt("%.1f", x0 - 6) << "\" y=\"" << fmt("%.1f", kTop + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt3(top) << "</text>\n";
    o << "<text x=\"" << fmt("%.1f", x0 - 6) << "\" y=\"" << fmt("%.1f", base + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">0.000</text>\n";
    o << "<text x=\"" << fmt("%.1f", x0 - 36) << "\" y=\"" << fmt("%.1f", kTop + kPlotH / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 "
      << fmt("%.1f", x0 - 36) << ' ' << fmt("%.1f", kTop + kPlotH / 2) << ")\">" << xml_escape(panel.y_label)
      << "</text>\n";

    const double n = static_cast<double>(std::max<std::size_t>(panel.bars.size(), 1));
    const double slot = plot_w / n;
    const double bar_w = slot * 0.6;
    for (std::size_t i = 0; i < panel.bars.size(); ++i) {
      const Bar& b = panel.bars[i];
      const double v = std::max(0.0, b.value);
      const double h = v * scale;
      const double x = x0 + slot * static_cast<double>(i) + (slot - bar_w) / 2;
      o << "<rect class=\"bar\" x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", base - h)
        << "\" width=\"" << fmt("%.2f", bar_w) << "\" height=\"" << fmt("%.2f", h)
        << "\" fill=\"#4a7ab5\" data-label=\"" << xml_escape(b.label) << "\" data-value=\"" << fmt3(b.value)
        << "\"/>\n";
      o << "<text x=\"" << fmt("%.2f", x + bar_w / 2) << "\" y=\"" << fmt("%.2f", base - h - 4)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt3(b.value)
        << "</text>\n";
      o << "<text x=\"" << fmt("%.2f", x + bar_w / 2) << "\" y=\"" << fmt("%.2f", base + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << xml_escape(b.label)
        << "</text>\n";
    }
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace uptodate::report
