// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <vector>

#include "splitfed/error.hpp"

namespace splitfed {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Panel {
  // n_lossy -> (p_loss -> list of final MJIs)
  std::map<int, std::map<double, std::vector<double>>> series;
};

}  // namespace

std::string render_mji_svg(const CsvTable& table) {
  const int c_split = table.column("split");
  const int c_ploss = table.column("p_loss");
  const int c_nlossy = table.column("n_lossy_clients");
  const int c_epoch = table.column("global_epoch");
  const int c_mji = table.column("mji");
  if (c_split < 0 || c_ploss < 0 || c_nlossy < 0 || c_epoch < 0 || c_mji < 0) {
    fail(ErrorKind::Parse,
         "plot input is missing required columns "
         "(split,p_loss,n_lossy_clients,global_epoch,mji)");
  }

  std::map<std::string, Panel> panels;
  for (const auto& row : table.rows) {
    if (row[static_cast<std::size_t>(c_epoch)] != "-1") continue;
    const std::string& split = row[static_cast<std::size_t>(c_split)];
    const double p = std::stod(row[static_cast<std::size_t>(c_ploss)]);
    const int nc = std::stoi(row[static_cast<std::size_t>(c_nlossy)]);
    const double mji = std::stod(row[static_cast<std::size_t>(c_mji)]);
    panels[split].series[nc][p].push_back(mji);
  }
  if (panels.empty()) {
    fail(ErrorKind::InvalidArgument,
         "plot input has no summary rows (global_epoch = -1)");
  }

  const double plot_w = 340, plot_h = 300, top = 50;
  const double panel_x[2] = {60, 500};
  const char* panel_split[2] = {"shallow", "deep"};

  std::string svg;
  svg +=
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"430\" "
      "viewBox=\"0 0 900 430\">\n";
  svg += "<rect width=\"900\" height=\"430\" fill=\"white\"/>\n";

  std::set<int> all_nc;
  for (const auto& [name, panel] : panels) {
    for (const auto& [nc, pts] : panel.series) all_nc.insert(nc);
  }

  for (int pi = 0; pi < 2; ++pi) {
    const double x0 = panel_x[pi];
    const double y0 = top;
    auto sx = [&](double p) { return x0 + p * plot_w; };
    auto sy = [&](double m) { return y0 + (1.0 - m) * plot_h; };

    svg += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" +
           num(plot_w) + "\" height=\"" + num(plot_h) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(x0 + plot_w / 2) + "\" y=\"" + num(y0 - 15) +
           "\" text-anchor=\"middle\" font-size=\"14\">" +
           std::string(panel_split[pi]) + " split</text>\n";
    svg += "<text x=\"" + num(x0 + plot_w / 2) + "\" y=\"" +
           num(y0 + plot_h + 35) + "\" text-anchor=\"middle\">P_L</text>\n";
    svg += "<text x=\"" + num(x0 - 42) + "\" y=\"" + num(y0 + plot_h / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 " +
           num(x0 - 42) + " " + num(y0 + plot_h / 2) + ")\">MJI</text>\n";

    for (int i = 0; i <= 5; ++i) {
      const double m = i / 5.0;
      svg += "<line x1=\"" + num(x0 - 4) + "\" y1=\"" + num(sy(m)) +
             "\" x2=\"" + num(x0) + "\" y2=\"" + num(sy(m)) +
             "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + num(x0 - 8) + "\" y=\"" + num(sy(m) + 4) +
             "\" text-anchor=\"end\">" + num(m) + "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
      const double p = i / 5.0;
      svg += "<line x1=\"" + num(sx(p)) + "\" y1=\"" + num(y0 + plot_h) +
             "\" x2=\"" + num(sx(p)) + "\" y2=\"" + num(y0 + plot_h + 4) +
             "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + num(sx(p)) + "\" y=\"" + num(y0 + plot_h + 18) +
             "\" text-anchor=\"middle\">" + num(p) + "</text>\n";
    }

    const auto panel_it = panels.find(panel_split[pi]);
    if (panel_it != panels.end()) {
      int color = 0;
      for (const auto& [nc, points] : panel_it->second.series) {
        std::string poly;
        for (const auto& [p, vals] : points) {
          double mean = 0;
          for (double v : vals) mean += v;
          mean /= static_cast<double>(vals.size());
          poly += num(sx(p)) + "," + num(sy(mean)) + " ";
        }
        if (!poly.empty()) poly.pop_back();
        svg += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" +
               kPalette[color % 8] + "\" stroke-width=\"1.5\"/>\n";
        ++color;
      }
    }
    svg += "</g>\n";
  }

  // Legend, one entry per N_c across both panels.
  svg += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  double ly = 60;
  int color = 0;
  for (int nc : all_nc) {
    svg += "<line x1=\"850\" y1=\"" + num(ly) + "\" x2=\"870\" y2=\"" +
           num(ly) + "\" stroke=\"" + kPalette[color % 8] +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"845\" y=\"" + num(ly + 4) +
           "\" text-anchor=\"end\">N_c=" + std::to_string(nc) + "</text>\n";
    ly += 18;
    ++color;
  }
  svg += "</g>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace splitfed
