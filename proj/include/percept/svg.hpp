#pragma once

#include <string>
#include <vector>

#include "percept/eval.hpp"

namespace percept {

/// Perceptually ordered color ramp (viridis), u clamped to [0, 1],
/// returned as "#rrggbb".
std::string viridis_hex(double u);

struct ScatterPoint {
    double truth = 0.0;
    double prediction = 0.0;
    double uncertainty = 0.0;
};

/// Prediction-vs-truth scatter with a diagonal reference line. When
/// `color_by_uncertainty` is set, points are colored on the viridis ramp
/// normalized over the observed uncertainty range and a color bar is drawn.
std::string render_scatter_svg(const std::vector<ScatterPoint>& points,
                               bool color_by_uncertainty, const std::string& x_label,
                               const std::string& y_label, const std::string& title);

/// Dual-axis sweep plot: accepted-sample RMS (left) and rejection rate
/// (right) against the uncertainty threshold.
std::string render_sdm_svg(const SdmCurve& curve, const std::string& title);

/// Report table rendered as rows of text.
std::string render_rms_table_svg(const std::vector<RunReport>& reports);

}  // namespace percept
