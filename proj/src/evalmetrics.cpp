#include "handik/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "handik/util.hpp"

namespace handik {

JointSet align(const JointSet& pred, const JointSet& gt, AlignMode mode, const KinematicModel& model) {
  if (pred.count() != gt.count()) throw std::invalid_argument("align: joint count mismatch");
  JointSet out = pred;
  Eigen::RowVector3d shift = Eigen::RowVector3d::Zero();
  switch (mode) {
    case AlignMode::root:
      shift = gt.positions.row(model.root_index) - pred.positions.row(model.root_index);
      break;
    case AlignMode::fingertip_centroid: {
      Eigen::RowVector3d cp = Eigen::RowVector3d::Zero(), cg = Eigen::RowVector3d::Zero();
      for (int tip : model.fingertips) {
        cp += pred.positions.row(tip);
        cg += gt.positions.row(tip);
      }
      shift = (cg - cp) / static_cast<double>(model.fingertips.size());
      break;
    }
    case AlignMode::none:
      break;
  }
  out.positions.rowwise() += shift;
  return out;
}

PckCurve pck(std::span<const JointSet> pred, std::span<const JointSet> gt,
             const std::vector<double>& thresholds) {
  if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("pck: frame count mismatch");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] <= thresholds[i - 1]) throw std::invalid_argument("pck: thresholds must be ascending");

  std::vector<double> errors;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].count() != gt[f].count()) throw std::invalid_argument("pck: joint count mismatch");
    for (int j = 0; j < pred[f].count(); ++j)
      errors.push_back((pred[f].positions.row(j) - gt[f].positions.row(j)).norm());
  }
  std::sort(errors.begin(), errors.end());

  PckCurve curve;
  curve.thresholds = thresholds;
  curve.values.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto it = std::upper_bound(errors.begin(), errors.end(), t);
    curve.values.push_back(static_cast<double>(it - errors.begin()) / static_cast<double>(errors.size()));
  }
  return curve;
}

static double curve_value_at(const PckCurve& c, double t) {
  const auto& xs = c.thresholds;
  const auto it = std::lower_bound(xs.begin(), xs.end(), t);
  if (it == xs.end() || it == xs.begin()) {
    if (it != xs.end() && *it == t) return c.values.front();
    throw std::invalid_argument("auc: threshold outside the curve");
  }
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  if (xs[hi] == t) return c.values[hi];
  const std::size_t lo = hi - 1;
  const double w = (t - xs[lo]) / (xs[hi] - xs[lo]);
  return c.values[lo] * (1.0 - w) + c.values[hi] * w;
}

double auc(const PckCurve& curve, double lo, double hi) {
  if (curve.thresholds.size() != curve.values.size() || curve.thresholds.size() < 2)
    throw std::invalid_argument("auc: malformed curve");
  if (hi <= lo) throw std::invalid_argument("auc: empty threshold range");
  if (curve.thresholds.front() > lo || curve.thresholds.back() < hi)
    throw std::invalid_argument("auc: curve does not cover the requested range");

  // integration nodes: lo, interior grid points, hi
  std::vector<double> xs{lo};
  for (double t : curve.thresholds)
    if (t > lo && t < hi) xs.push_back(t);
  xs.push_back(hi);

  double integral = 0.0;
  double prev_x = xs.front(), prev_v = curve_value_at(curve, prev_x);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double v = curve_value_at(curve, xs[i]);
    integral += 0.5 * (v + prev_v) * (xs[i] - prev_x);
    prev_x = xs[i];
    prev_v = v;
  }
  return integral / (hi - lo);
}

std::vector<double> default_thresholds(int count, double lo, double hi) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(lo + (hi - lo) * i / static_cast<double>(count - 1));
  return out;
}

double mean_joint_error(std::span<const JointSet> pred, std::span<const JointSet> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("mean_joint_error: frame mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    for (int j = 0; j < pred[f].count(); ++j) acc += (pred[f].positions.row(j) - gt[f].positions.row(j)).norm();
    n += static_cast<std::size_t>(pred[f].count());
  }
  return acc / static_cast<double>(n);
}

void write_curve_table(const PckCurve& curve, const std::string& path) {
  std::string out;
  char line[64];
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g %.9g\n", curve.thresholds[i], curve.values[i]);
    out += line;
  }
  write_file(path, out);
}

PckCurve read_curve_table(const std::string& path) {
  std::istringstream in(read_file(path));
  PckCurve curve;
  double t, v;
  while (in >> t >> v) {
    curve.thresholds.push_back(t);
    curve.values.push_back(v);
  }
  if (curve.thresholds.empty()) throw std::runtime_error("read_curve_table: no data in " + path);
  return curve;
}

void write_curve_svg(const PckCurve& curve, const std::string& path) {
  const int w = 640, h = 480, ml = 60, mr = 20, mt = 20, mb = 50;
  const double x0 = curve.thresholds.front(), x1 = curve.thresholds.back();
  const auto map_x = [&](double t) { return ml + (t - x0) / (x1 - x0) * (w - ml - mr); };
  const auto map_y = [&](double v) { return h - mb - v * (h - mt - mb); };

  std::string svg;
  char buf[256];
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, h - mb, w - mr, h - mb);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt, ml, h - mb);
  svg += buf;
  for (int i = 0; i <= 5; ++i) {
    const double t = x0 + (x1 - x0) * i / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%d\" font-size=\"12\" text-anchor=\"middle\">%.0f</text>\n",
                  map_x(t), h - mb + 20, t);
    svg += buf;
    const double v = i / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\">%.1f</text>\n",
                  ml - 8, map_y(v) + 4, v);
    svg += buf;
  }
  svg += "<text x=\"320\" y=\"470\" font-size=\"14\" text-anchor=\"middle\">error threshold (mm)</text>\n";
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", map_x(curve.thresholds[i]), map_y(curve.values[i]));
    svg += buf;
  }
  svg += "\"/>\n</svg>\n";
  write_file(path, svg);
}

}  // namespace handik
