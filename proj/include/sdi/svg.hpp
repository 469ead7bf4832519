#pragma once

// Plain-text SVG figures: whole-night hypnogram + SDI, and the binned
// decrease/arousal plot.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdi/annotator.hpp"
#include "sdi/biomarkers.hpp"
#include "sdi/epochs.hpp"
#include "sdi/stats/correlation.hpp"

namespace sdi {

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Panel {
  double x, y, w, h;
  double px(double u) const { return x + u * w; }    // u in [0,1]
  double py(double v) const { return y + h - v * h; }  // v in [0,1]
};

inline void frame(std::ostringstream& o, const Panel& p, const std::string& title) {
  o << "<rect x=\"" << num(p.x) << "\" y=\"" << num(p.y) << "\" width=\"" << num(p.w) << "\" height=\"" << num(p.h)
    << "\" fill=\"none\" stroke=\"#000\" stroke-width=\"0.8\"/>\n";
  o << "<text x=\"" << num(p.x) << "\" y=\"" << num(p.y - 6) << "\" font-size=\"12\">" << title << "</text>\n";
}

inline std::string hours_label(double h) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.0fh", h);
  return buf;
}

// Vertical position of each stage in the hypnogram, top to bottom.
inline int hypnogram_row(int stage) {
  switch (stage) {
    case kWake: return 0;
    case kRem: return 1;
    case kN1: return 2;
    case kN2: return 3;
    default: return 4;
  }
}

}  // namespace svg_detail

struct NightPlotOptions {
  std::string title;
  double width = 900;
};

inline std::string night_svg(const SdiNight& night, const NightPlotOptions& opt = {}) {
  using namespace svg_detail;
  const std::size_t n = night.n_epochs();
  if (n == 0) throw DataError("plot: night has no epochs");
  const double W = opt.width, left = 60, right = 190;
  const bool has_stage = night.stage.has_value();
  const Panel hyp{left, 40, W - left - right, 110};
  const Panel curve{left, has_stage ? 190.0 : 40.0, W - left - right, 160};
  const double H = curve.y + curve.h + 40;
  auto ex = [&](double t) { return static_cast<double>(t) / static_cast<double>(n); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H)
    << "\" font-family=\"sans-serif\">\n";
  if (!opt.title.empty()) o << "<title>" << opt.title << "</title>\n";

  if (has_stage) {
    o << "<g id=\"hypnogram\">\n";
    frame(o, hyp, "Hypnogram");
    const char* rows[] = {"W", "R", "N1", "N2", "N3"};
    for (int r = 0; r < 5; ++r)
      o << "<text x=\"" << num(hyp.x - 8) << "\" y=\"" << num(hyp.y + (r + 0.5) * hyp.h / 5 + 4)
        << "\" font-size=\"10\" text-anchor=\"end\">" << rows[r] << "</text>\n";
    o << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\" points=\"";
    for (std::size_t t = 0; t < n; ++t) {
      const double y = hyp.y + (hypnogram_row((*night.stage)[t]) + 0.5) * hyp.h / 5;
      o << num(hyp.px(ex(static_cast<double>(t)))) << "," << num(y) << " " << num(hyp.px(ex(static_cast<double>(t + 1))))
        << "," << num(y) << " ";
    }
    o << "\"/>\n";
    for (std::size_t t = 0; t < n; ++t)
      if ((*night.stage)[t] == kRem) {
        const double y = hyp.y + 1.5 * hyp.h / 5;
        o << "<line x1=\"" << num(hyp.px(ex(static_cast<double>(t)))) << "\" y1=\"" << num(y) << "\" x2=\""
          << num(hyp.px(ex(static_cast<double>(t + 1)))) << "\" y2=\"" << num(y)
          << "\" stroke=\"#c0392b\" stroke-width=\"3\"/>\n";
      }
    o << "</g>\n";
  }

  o << "<g id=\"sdi-curve\">\n";
  frame(o, curve, "Sleep depth index");
  if (night.arousal_proportion) {
    o << "<g id=\"arousal-shading\">\n";
    for (std::size_t t = 0; t < n; ++t) {
      const double a = (*night.arousal_proportion)[t];
      if (a <= 0) continue;
      o << "<rect class=\"arousal\" x=\"" << num(curve.px(ex(static_cast<double>(t)))) << "\" y=\"" << num(curve.y)
        << "\" width=\"" << num(curve.w / static_cast<double>(n)) << "\" height=\"" << num(curve.h)
        << "\" fill=\"#808080\" fill-opacity=\"" << num(a) << "\"/>\n";
    }
    o << "</g>\n";
  }
  for (double v : {0.0, 0.2, 0.5, 1.0}) {
    o << "<text x=\"" << num(curve.x - 8) << "\" y=\"" << num(curve.py(v) + 4) << "\" font-size=\"10\" text-anchor=\"end\">"
      << num(v) << "</text>\n";
  }
  o << "<line x1=\"" << num(curve.x) << "\" y1=\"" << num(curve.py(kShallowThreshold)) << "\" x2=\""
    << num(curve.x + curve.w) << "\" y2=\"" << num(curve.py(kShallowThreshold))
    << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  o << "<polyline fill=\"none\" stroke=\"#000\" stroke-width=\"1\" points=\"";
  for (std::size_t t = 0; t < n; ++t)
    o << num(curve.px(ex(static_cast<double>(t) + 0.5))) << "," << num(curve.py(std::clamp(night.sdi[t], 0.0, 1.0))) << " ";
  o << "\"/>\n";
  const double hours = static_cast<double>(n) * kEpochSeconds / 3600.0;
  for (int h = 0; h <= static_cast<int>(hours); ++h)
    o << "<text x=\"" << num(curve.px(h / hours)) << "\" y=\"" << num(curve.y + curve.h + 14)
      << "\" font-size=\"10\" text-anchor=\"middle\">" << hours_label(h) << "</text>\n";
  o << "</g>\n";

  const NightMetrics m = night_metrics(night.sdi, night.stage);
  std::optional<double> apv;
  try {
    apv = ap(night.sdi, m.sleep_epochs);
  } catch (const DataError&) {
  }
  const double bx = W - right + 20, by = curve.y;
  o << "<g id=\"metrics\">\n<rect x=\"" << num(bx) << "\" y=\"" << num(by)
    << "\" width=\"150\" height=\"80\" fill=\"#f7f7f7\" stroke=\"#000\" stroke-width=\"0.6\"/>\n";
  const std::string lines[] = {"TST " + num(m.tst_minutes) + " min", "SE " + num(100 * m.se) + " %",
                               "AUC " + num(m.auc), "AP " + (apv ? num(*apv) : std::string("NA"))};
  for (int i = 0; i < 4; ++i)
    o << "<text x=\"" << num(bx + 8) << "\" y=\"" << num(by + 18 + 18 * i) << "\" font-size=\"11\">" << lines[i]
      << "</text>\n";
  o << "</g>\n</svg>\n";
  return o.str();
}

inline std::string decile_svg(const stats::BinnedCorrelation& b, const std::string& title = {}) {
  using namespace svg_detail;
  const Panel p{60, 40, 420, 300};
  double ymax = 0.05;
  for (const auto& bin : b.bins)
    if (!bin.empty) ymax = std::max({ymax, bin.mean_arousal, std::isfinite(bin.ci_high) ? bin.ci_high : 0.0});
  ymax = std::min(1.0, ymax * 1.1);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"390\" font-family=\"sans-serif\">\n";
  if (!title.empty()) o << "<title>" << title << "</title>\n";
  frame(o, p, "Arousal proportion by depth decrease");
  o << "<text x=\"" << num(p.px(0.5)) << "\" y=\"" << num(p.y + p.h + 32)
    << "\" font-size=\"11\" text-anchor=\"middle\">SDI decrease</text>\n";
  for (const auto& bin : b.bins) {
    if (bin.empty) continue;
    const double cx = p.px(bin.mean_decrease), cy = p.py(bin.mean_arousal / ymax);
    if (std::isfinite(bin.ci_low) && std::isfinite(bin.ci_high))
      o << "<line class=\"ci\" x1=\"" << num(cx) << "\" y1=\"" << num(p.py(std::max(0.0, bin.ci_low) / ymax)) << "\" x2=\""
        << num(cx) << "\" y2=\"" << num(p.py(std::min(ymax, bin.ci_high) / ymax)) << "\" stroke=\"#555\"/>\n";
    o << "<circle class=\"bin\" cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"3\" fill=\"#1f4e9c\"/>\n";
  }
  auto clampy = [&](double v) { return p.py(std::clamp(v / ymax, 0.0, 1.0)); };
  o << "<line class=\"fit\" x1=\"" << num(p.px(0)) << "\" y1=\"" << num(clampy(b.fit.intercept)) << "\" x2=\"" << num(p.px(1))
    << "\" y2=\"" << num(clampy(b.fit.intercept + b.fit.slope)) << "\" stroke=\"#c0392b\"/>\n";
  o << "<text x=\"" << num(p.x + 8) << "\" y=\"" << num(p.y + 16) << "\" font-size=\"11\">r = " << num(b.r)
    << "</text>\n</svg>\n";
  return o.str();
}

}  // namespace sdi
