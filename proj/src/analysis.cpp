// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "raft/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "raft/errors.hpp"

namespace raft {

namespace {

std::vector<double> grid(double lo, double hi, size_t samples) {
  if (samples == 0) throw PreconditionError("curve export needs at least one sample");
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) throw PreconditionError("curve range must satisfy lo < hi");
  std::vector<double> xs(samples);
  if (samples == 1) {
    xs[0] = lo;
    return xs;
  }
  for (size_t i = 0; i < samples; ++i)
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(samples - 1);
  return xs;
}

std::string layer_label(const std::string& raf_name) {
  if (raf_name == "pooler.raf") return "pooler";
  // layer.<i>.ffn.raf
  const auto start = raf_name.find('.') + 1;
  return raf_name.substr(start, raf_name.find('.', start) - start);
}

// Numeric layers first in numeric order, then everything else by name.
bool layer_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  const bool na = numeric(a), nb = numeric(b);
  if (na != nb) return na;
  if (na) return std::stoll(a) < std::stoll(b);
  return a < b;
}

double parse_double(std::string_view field, size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw FormatError("curves line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::vector<CurvePoint> sample_rational(const RationalCoefficients& coeffs, std::string layer, double lo, double hi,
                                        size_t samples) {
  std::vector<CurvePoint> out;
  for (double x : grid(lo, hi, samples)) out.push_back({layer, x, rational_forward(x, coeffs)});
  return out;
}

std::vector<CurvePoint> sample_target(FitTarget target, double lo, double hi, size_t samples) {
  std::vector<CurvePoint> out;
  for (double x : grid(lo, hi, samples)) out.push_back({"*", x, evaluate_target(target, x)});
  return out;
}

std::vector<CurvePoint> export_curves(const Model& model, double lo, double hi, size_t samples) {
  const auto names = model.raf_names();
  if (names.empty()) throw PreconditionError("model has no rational activations to export");
  std::vector<CurvePoint> out;
  for (const auto& name : names) {
    auto pts = sample_rational(model.rational_coefficients(name), layer_label(name), lo, hi, samples);
    out.insert(out.end(), pts.begin(), pts.end());
  }
  return out;
}

std::string curves_csv(const std::vector<CurvePoint>& points) {
  std::string out = "layer,x,F(x)\n";
  for (const auto& p : points) out += p.layer + "," + fmt(p.x) + "," + fmt(p.y) + "\n";
  return out;
}

std::vector<CurvePoint> parse_curves_csv(std::string_view text) {
  std::vector<CurvePoint> out;
  size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != "layer,x,F(x)") throw FormatError("curves: expected header 'layer,x,F(x)'");
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos || c1 == 0)
      throw FormatError("curves line " + std::to_string(line_no) + ": expected 3 fields");
    out.push_back({std::string(line.substr(0, c1)), parse_double(line.substr(c1 + 1, c2 - c1 - 1), line_no),
                   parse_double(line.substr(c2 + 1), line_no)});
  }
  if (header) throw FormatError("curves: empty input");
  return out;
}

std::map<std::string, double> per_layer_distance(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b) {
  std::map<std::string, std::map<double, double>> ia;
  for (const auto& p : a) ia[p.layer][p.x] = p.y;
  std::map<std::string, std::pair<double, size_t>> acc;
  size_t matched = 0;
  for (const auto& p : b) {
    const auto layer = ia.find(p.layer);
    if (layer == ia.end()) throw PreconditionError("curve sets disagree: layer '" + p.layer + "' missing");
    const auto it = layer->second.find(p.x);
    if (it == layer->second.end()) throw PreconditionError("curve sets sample layer '" + p.layer + "' at different x");
    const double d = it->second - p.y;
    acc[p.layer].first += d * d;
    acc[p.layer].second += 1;
    ++matched;
  }
  if (matched != a.size()) throw PreconditionError("curve sets have different sizes");
  std::map<std::string, double> out;
  for (const auto& [layer, s] : acc) out[layer] = std::sqrt(s.first / static_cast<double>(s.second));
  return out;
}

double curve_distance(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b) {
  if (a.empty()) throw PreconditionError("curve_distance: empty curve set");
  const auto per = per_layer_distance(a, b);
  std::map<std::string, size_t> counts;
  for (const auto& p : a) ++counts[p.layer];
  double sq = 0.0;
  for (const auto& [layer, d] : per) sq += d * d * static_cast<double>(counts[layer]);
  return std::sqrt(sq / static_cast<double>(a.size()));
}

std::string render_svg(const std::vector<CurveSet>& overlays, PlotSummary* summary) {
  if (overlays.empty()) throw PreconditionError("plot needs at least one curve set");
  std::set<std::string, decltype(&layer_less)> layers(&layer_less);
  for (const auto& set : overlays)
    for (const auto& p : set.points)
      if (p.layer != "*") layers.insert(p.layer);
  if (layers.empty()) {
    bool any = false;
    for (const auto& set : overlays) any |= !set.points.empty();
    if (!any) throw PreconditionError("plot: curve sets hold no points");
    layers.insert("*");
  }

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double kW = 260, kH = 200, kPad = 30, kLegend = 24;
  const size_t panels = layers.size();
  const size_t cols = std::min<size_t>(4, panels);
  const size_t rows = (panels + cols - 1) / cols;
  const double width = static_cast<double>(cols) * kW;
  const double height = static_cast<double>(rows) * kH + kLegend;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_short(width) + "\" height=\"" +
                    fmt_short(height) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (size_t s = 0; s < overlays.size(); ++s)
    svg += "<text x=\"" + fmt_short(10 + 120.0 * static_cast<double>(s)) + "\" y=\"16\" fill=\"" + kColors[s % 6] +
           "\">" + overlays[s].label + "</text>\n";

  PlotSummary local;
  size_t index = 0;
  for (const auto& layer : layers) {
    auto in_panel = [&](const CurvePoint& p) { return p.layer == layer || p.layer == "*"; };
    PanelSummary ps{layer, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& set : overlays)
      for (const auto& p : set.points)
        if (in_panel(p)) {
          ps.x_min = std::min(ps.x_min, p.x);
          ps.x_max = std::max(ps.x_max, p.x);
          ps.y_min = std::min(ps.y_min, p.y);
          ps.y_max = std::max(ps.y_max, p.y);
        }
    const double ox = static_cast<double>(index % cols) * kW;
    const double oy = kLegend + static_cast<double>(index / cols) * kH;
    const double xs = ps.x_max > ps.x_min ? ps.x_max - ps.x_min : 1.0;
    const double ys = ps.y_max > ps.y_min ? ps.y_max - ps.y_min : 1.0;
    auto px = [&](double x) { return ox + kPad + (x - ps.x_min) / xs * (kW - 2 * kPad); };
    auto py = [&](double y) { return oy + kH - kPad - (y - ps.y_min) / ys * (kH - 2 * kPad); };

    svg += "<g>\n<rect x=\"" + fmt_short(ox + kPad) + "\" y=\"" + fmt_short(oy + kPad) + "\" width=\"" +
           fmt_short(kW - 2 * kPad) + "\" height=\"" + fmt_short(kH - 2 * kPad) +
           "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg += "<text x=\"" + fmt_short(ox + kW / 2) + "\" y=\"" + fmt_short(oy + 18) + "\" text-anchor=\"middle\">" +
           (layer == "pooler" || layer == "*" ? layer : "layer " + layer) + "</text>\n";
    svg += "<text x=\"" + fmt_short(ox + kPad) + "\" y=\"" + fmt_short(oy + kH - 12) + "\">" + fmt_short(ps.x_min) +
           "</text><text x=\"" + fmt_short(ox + kW - kPad) + "\" y=\"" + fmt_short(oy + kH - 12) +
           "\" text-anchor=\"end\">" + fmt_short(ps.x_max) + "</text>\n";
    svg += "<text x=\"" + fmt_short(ox + 2) + "\" y=\"" + fmt_short(oy + kPad + 8) + "\">" + fmt_short(ps.y_max) +
           "</text><text x=\"" + fmt_short(ox + 2) + "\" y=\"" + fmt_short(oy + kH - kPad) + "\">" +
           fmt_short(ps.y_min) + "</text>\n";
    for (size_t s = 0; s < overlays.size(); ++s) {
      std::vector<const CurvePoint*> pts;
      for (const auto& p : overlays[s].points)
        if (in_panel(p)) pts.push_back(&p);
      if (pts.empty()) continue;
      std::stable_sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->x < b->x; });
      svg += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(kColors[s % 6]) + "\" points=\"";
      for (const auto* p : pts) svg += fmt_short(px(p->x)) + "," + fmt_short(py(p->y)) + " ";
      svg += "\"/>\n";
    }
    svg += "</g>\n";
    local.panel.push_back(ps);
    ++index;
  }
  svg += "</svg>\n";
  local.panels = local.panel.size();
  if (summary != nullptr) *summary = std::move(local);
  return svg;
}

PlotSummary plot_curves(const std::vector<CurveSet>& overlays, const std::string& path) {
  PlotSummary summary;
  const std::string svg = render_svg(overlays, &summary);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
  if (!out) throw std::runtime_error("write failed: " + path);
  return summary;
}

std::vector<NearZeroRow> near_zero_report(const Model& model, double lo, double hi, double threshold,
                                          size_t samples) {
  if (!(threshold >= 0.0)) throw PreconditionError("near_zero_report: threshold must be >= 0");
  std::vector<NearZeroRow> rows;
  for (const auto& name : model.raf_names()) {
    NearZeroRow row{layer_label(name), 0.0, false};
    for (const auto& p : sample_rational(model.rational_coefficients(name), row.layer, lo, hi, samples))
      row.max_abs = std::max(row.max_abs, std::abs(p.y));
    row.flagged = row.max_abs < threshold;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string near_zero_csv(const std::vector<NearZeroRow>& rows) {
  std::string out = "layer,max_abs_F,flagged\n";
  for (const auto& r : rows) out += r.layer + "," + fmt(r.max_abs) + "," + (r.flagged ? "1" : "0") + "\n";
  return out;
}

}  // namespace raft
