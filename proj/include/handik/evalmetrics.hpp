#pragma once

#include <span>
#include <string>
#include <vector>

#include "handik/handmodel.hpp"

namespace handik {

// PCK as a function of the error threshold (same units as the errors,
// normally mm). Values are non-decreasing in the threshold.
struct PckCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
};

enum class AlignMode { root, fingertip_centroid, none };

// Translation-only alignment of predictions against ground truth.
JointSet align(const JointSet& pred, const JointSet& gt, AlignMode mode, const KinematicModel& model);

// Fraction of joints, pooled over all frames, with error <= threshold.
PckCurve pck(std::span<const JointSet> pred, std::span<const JointSet> gt,
             const std::vector<double>& thresholds);

// Trapezoidal integral of the curve over [lo, hi], divided by (hi - lo).
// The curve must cover the range; values at lo/hi are linearly interpolated.
double auc(const PckCurve& curve, double lo = 20.0, double hi = 50.0);

// 100 uniform thresholds over [20, 50] mm.
std::vector<double> default_thresholds(int count = 100, double lo = 20.0, double hi = 50.0);

double mean_joint_error(std::span<const JointSet> pred, std::span<const JointSet> gt);

// Two-column plain-text table (threshold, pck per line).
void write_curve_table(const PckCurve& curve, const std::string& path);
PckCurve read_curve_table(const std::string& path);

// Standalone SVG line plot of one curve.
void write_curve_svg(const PckCurve& curve, const std::string& path);

}  // namespace handik
