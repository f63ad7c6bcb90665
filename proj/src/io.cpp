// Copyright 2026 The ddmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "ddmpc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "ddmpc/errors.hpp"

namespace ddmpc {

std::string node_path(const std::string& dir, const std::string& stem, int node,
                      const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", node);
  return (std::filesystem::path(dir) / (stem + "_" + buf + "." + ext)).string();
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir + ": " + ec.message());
}

void write_state_svg(const std::string& path, const ClosedLoopLog& log,
                     const std::vector<int>& nodes) {
  static const char* kColors[] = {"#0072bd", "#d95319", "#edb120", "#7e2f8e", "#77ac30",
                                  "#4dbeee", "#a2142f"};
  const double width = 720, height = 420, left = 60, right = 20, top = 20, bottom = 45;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i : nodes) {
    for (int t = 0; t < log.steps; ++t) {
      const auto& x = log.at(t, i).x_true;
      if (x.size() == 0) continue;
      lo = std::min(lo, x.minCoeff());
      hi = std::max(hi, x.maxCoeff());
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (hi - lo < 1e-9) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double tmax = std::max(1, log.steps - 1);
  auto px = [&](double t) { return left + (width - left - right) * t / tmax; };
  auto py = [&](double v) { return top + (height - top - bottom) * (hi - v) / (hi - lo); };

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes, grid and ticks.
  for (int t = 0; t < log.steps; ++t) {
    out << "<line x1=\"" << px(t) << "\" y1=\"" << top << "\" x2=\"" << px(t) << "\" y2=\""
        << height - bottom << "\" stroke=\"#e0e0e0\"/>\n";
    out << "<text x=\"" << px(t) << "\" y=\"" << height - bottom + 16
        << "\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    std::ostringstream label;
    label.precision(3);
    label << v;
    out << "<line x1=\"" << left << "\" y1=\"" << py(v) << "\" x2=\"" << width - right
        << "\" y2=\"" << py(v) << "\" stroke=\"#e0e0e0\"/>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">"
        << label.str() << "</text>\n";
  }
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width - left - right
      << "\" height=\"" << height - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\">time step t</text>\n";
  out << "<text transform=\"translate(14," << (top + height - bottom) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">closed-loop states</text>\n";

  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const int i = nodes[n];
    const char* color = kColors[n % (sizeof(kColors) / sizeof(kColors[0]))];
    const long dim = log.steps > 0 ? log.at(0, i).x_true.size() : 0;
    for (long c = 0; c < dim; ++c) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
          << (c > 0 ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      for (int t = 0; t < log.steps; ++t) {
        out << px(t) << "," << py(log.at(t, i).x_true(c)) << " ";
      }
      out << "\"/>\n";
    }
    out << "<text x=\"" << width - right - 80 << "\" y=\"" << top + 16 + 14 * n << "\" fill=\""
        << color << "\">node " << i << "</text>\n";
  }
  out << "</svg>\n";
}

std::vector<double> read_logged_xi_deviation(const std::string& path, int num_agents) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read log " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(path + " is empty");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  const auto header = split(line);
  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(path + " has no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t agent_col = find("agent");
  const std::size_t dev_col = find("xi_deviation");
  std::vector<double> out(num_agents, 0.0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() <= std::max(agent_col, dev_col)) throw Error(path + ": short row");
    const int agent = std::stoi(cells[agent_col]);
    if (agent < 0 || agent >= num_agents) throw Error(path + ": agent id out of range");
    out[agent] = std::max(out[agent], std::stod(cells[dev_col]));
  }
  return out;
}

}  // namespace ddmpc
