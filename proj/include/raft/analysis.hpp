// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "raft/fitting.hpp"
#include "raft/rational.hpp"
#include "raft/training.hpp"

namespace raft {

/// One sample of a learned activation. `layer` is the layer index as text
/// or "pooler"; a reference curve uses "*" and is drawn in every panel.
struct CurvePoint {
  std::string layer;
  double x = 0.0;
  double y = 0.0;
};

/// `samples` evenly spaced points over [lo, hi] (inclusive) for every RAF
/// in the model. Throws PreconditionError when samples is 0, lo >= hi, or
/// the model has no rational activations.
std::vector<CurvePoint> export_curves(const Model& model, double lo, double hi, size_t samples);
std::vector<CurvePoint> sample_rational(const RationalCoefficients& coeffs, std::string layer, double lo, double hi,
                                        size_t samples);
std::vector<CurvePoint> sample_target(FitTarget target, double lo, double hi, size_t samples);

/// layer,x,F(x)
std::string curves_csv(const std::vector<CurvePoint>& points);
/// Throws FormatError on a bad header or row.
std::vector<CurvePoint> parse_curves_csv(std::string_view text);

/// RMS of y differences per layer over points sharing (layer, x). Throws
/// PreconditionError when the sets disagree on layers or sample positions.
std::map<std::string, double> per_layer_distance(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b);
/// RMS over all shared points.
double curve_distance(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b);

struct CurveSet {
  std::string label;
  std::vector<CurvePoint> points;
};

struct PanelSummary {
  std::string layer;
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

struct PlotSummary {
  size_t panels = 0;
  std::vector<PanelSummary> panel;  // in drawing order
};

/// Renders one panel per layer (layers numerically, then "pooler") with a
/// polyline per curve set and writes an SVG to `path`. Panel ranges are the
/// exact extremes of the data drawn in it.
PlotSummary plot_curves(const std::vector<CurveSet>& overlays, const std::string& path);
std::string render_svg(const std::vector<CurveSet>& overlays, PlotSummary* summary = nullptr);

/// A layer is flagged when max |F(x)| over the sampled range stays below
/// the threshold: its FFN branch is close to inert.
struct NearZeroRow {
  std::string layer;
  double max_abs = 0.0;
  bool flagged = false;
};

std::vector<NearZeroRow> near_zero_report(const Model& model, double lo, double hi, double threshold,
                                          size_t samples = 200);
/// layer,max_abs_F,flagged
std::string near_zero_csv(const std::vector<NearZeroRow>& rows);

}  // namespace raft
