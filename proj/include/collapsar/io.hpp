#pragma once

// Serialization: CSV (comma, LF, header row, 17 significant digits), JSON reports and a
// self-contained SVG figure of W, W' and R against y.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "collapsar/invariants.hpp"
#include "collapsar/inviscid.hpp"
#include "collapsar/radial_pde.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/shadow.hpp"
#include "collapsar/types.hpp"

namespace collapsar::io {

using json = nlohmann::json;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const SolutionTrace& trace) {
  os << "y,W,Wp,R,H,V,rho_ss,g_ss\n";
  for (const auto& s : trace.samples) {
    os << fmt17(s.y) << ',' << fmt17(s.W) << ',' << fmt17(s.Wp) << ',' << fmt17(s.R) << ',' << fmt17(H(s)) << ','
       << fmt17(s.V()) << ',' << fmt17(s.R) << ',' << fmt17(gravity_similarity(s)) << '\n';
  }
}

inline void write_inviscid_csv(std::ostream& os, const InviscidTrace& trace) {
  os << "y,W,R,sonic\n";
  for (const auto& s : trace.samples) {
    os << fmt17(s.y) << ',' << fmt17(s.W) << ',' << fmt17(s.R) << ',' << fmt17(sonic_function(s)) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const ScalingSweep& sweep) {
  os << "eps,u1,rho1,mass_res,mom_res\n";
  for (const auto& p : sweep.points) {
    os << fmt17(p.eps) << ',' << fmt17(p.u1) << ',' << fmt17(p.rho1) << ',' << fmt17(p.mass_res) << ','
       << fmt17(p.mom_res) << '\n';
  }
}

inline void write_field_csv(std::ostream& os, const RadialField& f) {
  os << "y,rho_hat,u_hat\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    os << fmt17(f.grid[i]) << ',' << fmt17(f.rho_hat[i]) << ',' << fmt17(f.u_hat[i]) << '\n';
  }
}

struct DeviationRow {
  double tau;
  DeviationNorms norms;
};

inline void write_deviation_csv(std::ostream& os, const std::vector<DeviationRow>& rows) {
  os << "tau,l2,linf\n";
  for (const auto& r : rows) os << fmt17(r.tau) << ',' << fmt17(r.norms.l2) << ',' << fmt17(r.norms.linf) << '\n';
}

inline json to_json(const SimilarityState& s) { return {{"y", s.y}, {"W", s.W}, {"Wp", s.Wp}, {"R", s.R}}; }

inline json to_json(const CheckReport& r) {
  json j;
  j["name"] = r.name;
  j["passed"] = r.passed;
  if (r.first_violation) {
    const auto& v = *r.first_violation;
    j["first_violation"] = {{"y", v.state.y}, {"W", v.state.W}, {"Wp", v.state.Wp}, {"R", v.state.R},
                            {"margin", v.margin}};
  } else {
    j["first_violation"] = nullptr;
  }
  j["margin_min"] = r.margin_min ? json(*r.margin_min) : json(nullptr);
  j["applicable"] = r.applicable;
  if (r.located_y) j["located_y"] = *r.located_y;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline json to_json(const std::vector<CheckReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

inline json to_json(const ScalingFit& f) {
  return {{"eps", f.eps_values}, {"magnitude", f.magnitudes}, {"slope", f.slope}, {"fit_residual", f.fit_residual}};
}

inline json to_json(const SonicReport& r) {
  return {{"y_bar", r.y_bar},
          {"lp_defect", r.lp_defect},
          {"classification", std::string(to_string(r.classification))},
          {"sonic_residual", r.sonic_residual}};
}

inline json events_json(const SolutionTrace& trace) {
  json j;
  j["termination"] = std::string(to_string(trace.termination));
  j["events"] = json::array();
  for (const auto& e : trace.events) {
    json ev = to_json(e.state_at);
    ev["kind"] = std::string(to_string(e.kind));
    ev["y"] = e.y_star;
    j["events"].push_back(std::move(ev));
  }
  return j;
}

namespace detail {

struct Panel {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  bool log_y = false;
};

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

}  // namespace detail

/// Stacked line charts of W, W' and R against log10(y); R uses a log axis when positive throughout.
inline void write_profile_svg(std::ostream& os, const SolutionTrace& trace, const std::string& title) {
  std::vector<detail::Panel> panels(3);
  panels[0].label = "W";
  panels[1].label = "W'";
  panels[2].label = "R";
  bool r_positive = true;
  for (const auto& s : trace.samples) r_positive = r_positive && s.R > 0.0;
  panels[2].log_y = r_positive;
  if (r_positive) panels[2].label = "log10 R";
  for (const auto& s : trace.samples) {
    const double lx = std::log10(s.y);
    const double vals[3] = {s.W, s.Wp, r_positive ? std::log10(s.R) : s.R};
    for (int k = 0; k < 3; ++k) {
      panels[k].xs.push_back(lx);
      panels[k].ys.push_back(vals[k]);
    }
  }

  const double width = 760, panel_h = 220, left = 80, right = 20, top = 40, gap = 40;
  const double height = top + 3 * (panel_h + gap);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << detail::xml_escape(title) << "</text>\n";
  const char* colors[3] = {"#2a7f2a", "#c0392b", "#1f4e9c"};

  for (int k = 0; k < 3; ++k) {
    const auto& p = panels[k];
    const double y0 = top + k * (panel_h + gap);
    const double plot_w = width - left - right;
    if (p.xs.empty()) continue;
    double xmin = p.xs.front(), xmax = p.xs.back();
    if (xmax <= xmin) xmax = xmin + 1.0;
    auto [ylo_it, yhi_it] = std::minmax_element(p.ys.begin(), p.ys.end());
    double ymin = *ylo_it, ymax = *yhi_it;
    if (ymax - ymin < 1e-12 * std::max(1.0, std::abs(ymax))) {
      ymin -= 0.5;
      ymax += 0.5;
    }
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double v) { return y0 + panel_h - (v - ymin) / (ymax - ymin) * panel_h; };

    os << "<g>\n";
    os << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\"" << panel_h
       << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = ymin + (ymax - ymin) * t / 4.0;
      os << "<text x=\"" << left - 6 << "\" y=\"" << detail::fixed3(py(v) + 4)
         << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << detail::tick_label(v)
         << "</text>\n";
    }
    for (int d = static_cast<int>(std::ceil(xmin)); d <= static_cast<int>(std::floor(xmax)); ++d) {
      const double x = px(d);
      os << "<line x1=\"" << detail::fixed3(x) << "\" y1=\"" << y0 << "\" x2=\"" << detail::fixed3(x) << "\" y2=\""
         << y0 + panel_h << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
      os << "<text x=\"" << detail::fixed3(x) << "\" y=\"" << y0 + panel_h + 14
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">1e" << d << "</text>\n";
    }
    os << "<text x=\"16\" y=\"" << y0 + panel_h / 2
       << "\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 " << y0 + panel_h / 2 << ")\">"
       << p.label << "</text>\n";
    os << "<polyline fill=\"none\" stroke=\"" << colors[k] << "\" stroke-width=\"1.5\" points=\"";
    // Thin out to roughly one point per horizontal pixel.
    double last_x = -1e300;
    for (std::size_t i = 0; i < p.xs.size(); ++i) {
      const double x = px(p.xs[i]);
      if (i + 1 < p.xs.size() && x - last_x < 0.5) continue;
      last_x = x;
      os << detail::fixed3(x) << ',' << detail::fixed3(py(p.ys[i])) << ' ';
    }
    os << "\"/>\n</g>\n";
  }
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">y (log scale)</text>\n";
  os << "</svg>\n";
}

}  // namespace collapsar::io
