#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "handik/handmodel.hpp"

namespace handik {

// Per-joint 2D annotations in map-resolution pixel coordinates (u = column,
// v = row). Invisible joints carry no constraint.
struct Annotation2D {
  Eigen::Matrix<double, Eigen::Dynamic, 2> uv;  // J x 2
  std::vector<std::uint8_t> visible;

  int count() const { return static_cast<int>(uv.rows()); }
};

// Heat, location and delta maps on a square S x S grid, stored row-major
// [joint][v][u] (and an xyz channel for loc/delta).
struct MapStack {
  int joints = 0;
  int resolution = 0;
  std::vector<double> heat;   // J*S*S
  std::vector<double> loc;    // J*S*S*3
  std::vector<double> delta;  // J*S*S*3

  double& heat_at(int j, int v, int u) { return heat[static_cast<std::size_t>((j * resolution + v) * resolution + u)]; }
  double heat_at(int j, int v, int u) const { return heat[static_cast<std::size_t>((j * resolution + v) * resolution + u)]; }
  Eigen::Vector3d loc_at(int j, int v, int u) const {
    const std::size_t base = static_cast<std::size_t>(((j * resolution + v) * resolution + u) * 3);
    return {loc[base], loc[base + 1], loc[base + 2]};
  }
  Eigen::Vector3d delta_at(int j, int v, int u) const {
    const std::size_t base = static_cast<std::size_t>(((j * resolution + v) * resolution + u) * 3);
    return {delta[base], delta[base + 1], delta[base + 2]};
  }
};

struct Intrinsics {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();

  // Throws std::invalid_argument unless fx, fy > 0 and k is invertible.
  void validate() const;
};

struct HeatEncodeResult {
  std::vector<double> heat;
  Annotation2D effective;  // out-of-range joints downgraded to invisible
};

// Unnormalized Gaussian bump (peak value 1 at the annotated pixel), no
// truncation. Invisible or out-of-range joints produce an all-zero map.
HeatEncodeResult encode_heatmap(const Annotation2D& ann, int resolution, double sigma = 1.0);

// Tiled ground-truth maps: every pixel of map j holds joint j's coordinates
// (location) or the parent->child bone direction (delta, zero at the root).
std::vector<double> encode_location_map(const JointSet& xyz, int resolution);
std::vector<double> encode_delta_map(const Points& bones, int resolution);

MapStack encode_stack(const Annotation2D& ann, const JointSet& xyz, const Points& bones,
                      int resolution, double sigma = 1.0);

struct DecodeResult {
  Annotation2D ann;                        // argmax pixel per joint
  JointSet joints;                         // location-map lookup, normalized frame
  std::vector<std::uint8_t> low_confidence;  // all-zero heat map
};

// Argmax lookup; ties break to the first pixel in row-major order. All-zero
// heat maps decode to the map center and are flagged low-confidence.
DecodeResult decode_joints(const MapStack& maps);

// Squared Frobenius losses; loc/delta differences are weighted by the
// ground-truth heat map before the norm (broadcast over xyz).
double loss_heat(const std::vector<double>& h_gt, const std::vector<double>& h);
double loss_loc(const std::vector<double>& h_gt, const std::vector<double>& l_gt, const std::vector<double>& l);
double loss_delta(const std::vector<double>& h_gt, const std::vector<double>& d_gt, const std::vector<double>& d);

// Closed-form absolute root depth from the projective constraint
// || z*a - (z + l_ref*d_w)*b || = l_ref with a, b the back-projected root and
// wrist rays. Returns the largest positive root of the quadratic.
// Throws std::domain_error when the configuration is degenerate or has no
// positive solution.
double solve_root_depth(const Intrinsics& k, const Eigen::Vector2d& uv_root,
                        const Eigen::Vector2d& uv_wrist, double d_w, double l_ref);

// z_r * K^-1 (u, v, 1)^T. Requires z_r > 0.
Eigen::Vector3d recover_translation(const Intrinsics& k, const Eigen::Vector2d& uv_root, double z_r);

// Flat little-endian blob, magic "HIKMAPS1", then J and S as int32, then
// heat/loc/delta as float32 in document order.
std::string serialize_maps(const MapStack& maps);
MapStack parse_maps(const std::string& blob);
void save_maps(const MapStack& maps, const std::string& path);
MapStack load_maps(const std::string& path);

}  // namespace handik
